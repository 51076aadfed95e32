import type {
  ConceptInfo,
  ItemInfo,
  Projection,
  QueryResponse,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Concept-subspace grid: items snapped to cells, thumbnails in place. */
export function renderConceptGrid(
  projection: Projection,
  thumbnailUrl: (id: number) => string,
): string {
  if (!projection.grid) {
    return `<p class="hint">no grid snap returned</p>`;
  }
  const { rows, cols, cells } = projection.grid;
  const tiles = Object.entries(cells)
    .map(([id, [r, c]]) => {
      return (
        `<img class="tile" data-item-id="${id}" ` +
        `src="${thumbnailUrl(Number(id))}" ` +
        `style="grid-row:${r + 1};grid-column:${c + 1}" ` +
        `alt="item ${id}">`
      );
    })
    .join("");
  return (
    `<div class="concept-grid" ` +
    `style="grid-template-rows:repeat(${rows},1fr);` +
    `grid-template-columns:repeat(${cols},1fr)">${tiles}</div>`
  );
}

/**
 * Item panel: one chip per description attribute; clicking a chip opens
 * the same-concept replacement attributes, each of which issues a query.
 */
export function renderItemDetail(
  item: ItemInfo,
  concepts: ConceptInfo[],
): string {
  const conceptOf = new Map<string, ConceptInfo>();
  for (const concept of concepts) {
    for (const attr of concept.attributes) {
      conceptOf.set(attr, concept);
    }
  }
  const chips = item.description
    .map((label) => {
      const concept = conceptOf.get(label);
      const alternatives = (concept?.attributes ?? [])
        .filter((a) => a !== label)
        .map(
          (a) =>
            `<button class="alt" data-add-attribute="${escapeHtml(a)}">` +
            `${escapeHtml(a)}</button>`,
        )
        .join("");
      return (
        `<span class="chip" data-attribute="${escapeHtml(label)}">` +
        `${escapeHtml(label)}` +
        `<span class="alts">${alternatives}</span></span>`
      );
    })
    .join("");
  return (
    `<div class="item-detail" data-item-id="${item.id}">` +
    `<h3>item ${item.id} <small>(${item.splits.join(", ")})</small></h3>` +
    `<div class="chips">${chips}</div></div>`
  );
}

/**
 * Ranked results exactly as the service returned them; this function
 * must never reorder or filter. Badges show the automatically detected
 * negative attribute, or that the method fell back to the baseline.
 */
export function renderResults(
  response: QueryResponse,
  thumbnailUrl: (id: number) => string,
): string {
  const badge = response.fallback
    ? `<span class="badge fallback">no attribute removed</span>`
    : response.detected_negative !== null
      ? `<span class="badge negative">&minus; ${escapeHtml(response.detected_negative)}</span>`
      : "";
  const rows = response.results
    .map(
      (r, i) =>
        `<li class="result" data-item-id="${r.id}">` +
        `<img src="${thumbnailUrl(r.id)}" alt="item ${r.id}">` +
        `<span class="rank">#${i + 1}</span>` +
        `<span class="score">${r.score.toFixed(3)}</span></li>`,
    )
    .join("");
  return `<div class="results">${badge}<ol>${rows}</ol></div>`;
}

/** Side-by-side comparison of the plain and concept-aware rankings. */
export function renderMethodPanels(
  baseline: QueryResponse,
  concept: QueryResponse,
  thumbnailUrl: (id: number) => string,
): string {
  return (
    `<div class="method-panels">` +
    `<section><h4>baseline</h4>${renderResults(baseline, thumbnailUrl)}</section>` +
    `<section><h4>concept</h4>${renderResults(concept, thumbnailUrl)}</section>` +
    `</div>`
  );
}

export function renderErrorBanner(message: string): string {
  return `<div class="error-banner">${escapeHtml(message)}</div>`;
}

export function renderConceptPicker(
  concepts: ConceptInfo[],
  selected: number | null,
): string {
  const options = concepts
    .filter((c) => c.has_subspace)
    .map((c) => {
      const label = escapeHtml(c.attributes.slice(0, 3).join(", "));
      const active = c.concept_id === selected ? " active" : "";
      return (
        `<button class="concept-option${active}" ` +
        `data-concept-id="${c.concept_id}">#${c.concept_id}: ${label}&hellip;</button>`
      );
    })
    .join("");
  return `<nav class="concept-picker">${options}</nav>`;
}
