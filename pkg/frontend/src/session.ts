import type { ApiClient } from "./api.js";
import type { QueryResponse } from "./types.js";

export interface FeedbackStep {
  itemId: number;
  addAttribute: string;
  detectedNegative: string | null;
}

/** Both method variants for one feedback round, straight off the wire. */
export interface FeedbackOutcome {
  baseline: QueryResponse;
  concept: QueryResponse;
}

/**
 * One browsing session: the current query item, an append-only feedback
 * history, and a request sequence number so a response that was
 * superseded by a newer click never mutates state.
 */
export class Session {
  currentItem: number | null = null;
  selectedConcept: number | null = null;
  readonly history: FeedbackStep[] = [];
  lastOutcome: FeedbackOutcome | null = null;
  private seq = 0;

  constructor(
    private readonly api: ApiClient,
    readonly k: number = 12,
  ) {}

  selectItem(itemId: number): void {
    this.currentItem = itemId;
  }

  /**
   * Issue one attribute-feedback query (both methods, side by side).
   * Returns null if a newer request was started while this one was in
   * flight; stale responses are discarded without touching state.
   */
  async submitFeedback(addAttribute: string): Promise<FeedbackOutcome | null> {
    if (this.currentItem === null) {
      throw new Error("no query item selected");
    }
    const itemId = this.currentItem;
    const ticket = ++this.seq;
    const [baseline, concept] = await Promise.all([
      this.api.query(itemId, addAttribute, "baseline", this.k),
      this.api.query(itemId, addAttribute, "concept", this.k),
    ]);
    if (ticket !== this.seq) {
      return null; // superseded by a newer click
    }
    const outcome: FeedbackOutcome = { baseline, concept };
    this.history.push({
      itemId,
      addAttribute,
      detectedNegative: concept.detected_negative,
    });
    this.lastOutcome = outcome;
    return outcome;
  }
}

/**
 * Re-issue a recorded history against the same bundle. With a fixed
 * bundle the service is deterministic, so the replay must reproduce the
 * original final rankings.
 */
export async function replayHistory(
  api: ApiClient,
  history: FeedbackStep[],
  k: number = 12,
): Promise<FeedbackOutcome | null> {
  let last: FeedbackOutcome | null = null;
  for (const step of history) {
    const [baseline, concept] = await Promise.all([
      api.query(step.itemId, step.addAttribute, "baseline", k),
      api.query(step.itemId, step.addAttribute, "concept", k),
    ]);
    last = { baseline, concept };
  }
  return last;
}

export function rankedIds(response: QueryResponse): number[] {
  return response.results.map((r) => r.id);
}
