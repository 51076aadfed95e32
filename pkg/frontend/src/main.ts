import { ApiClient } from "./api.js";
import {
  renderConceptGrid,
  renderConceptPicker,
  renderErrorBanner,
  renderItemDetail,
  renderMethodPanels,
} from "./render.js";
import { Session } from "./session.js";
import type { ConceptInfo } from "./types.js";

const api = new ApiClient("");
const session = new Session(api);
let concepts: ConceptInfo[] = [];

const el = (id: string) => document.getElementById(id)!;
const thumb = (id: number) => api.thumbnailUrl(id);

function showError(message: string): void {
  el("error").innerHTML = renderErrorBanner(message);
}

function clearError(): void {
  el("error").innerHTML = "";
}

async function showConcept(conceptId: number): Promise<void> {
  session.selectedConcept = conceptId;
  el("picker").innerHTML = renderConceptPicker(concepts, conceptId);
  try {
    const projection = await api.projection(conceptId, "test", "24x24");
    el("grid").innerHTML = renderConceptGrid(projection, thumb);
    clearError();
  } catch (err) {
    showError(String(err));
  }
}

async function showItem(itemId: number): Promise<void> {
  session.selectItem(itemId);
  try {
    const item = await api.item(itemId);
    el("detail").innerHTML = renderItemDetail(item, concepts);
    clearError();
  } catch (err) {
    showError(String(err));
  }
}

async function feedback(addAttribute: string): Promise<void> {
  try {
    const outcome = await session.submitFeedback(addAttribute);
    if (outcome === null) {
      return; // superseded by a newer click
    }
    el("results").innerHTML = renderMethodPanels(
      outcome.baseline,
      outcome.concept,
      thumb,
    );
    clearError();
  } catch (err) {
    showError(String(err));
  }
}

document.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const conceptBtn = target.closest<HTMLElement>("[data-concept-id]");
  if (conceptBtn) {
    void showConcept(Number(conceptBtn.dataset.conceptId));
    return;
  }
  const alt = target.closest<HTMLElement>("[data-add-attribute]");
  if (alt) {
    void feedback(alt.dataset.addAttribute!);
    return;
  }
  const tile = target.closest<HTMLElement>("[data-item-id]");
  if (tile) {
    // selecting any thumbnail (grid or result) makes it the new query item
    void showItem(Number(tile.dataset.itemId));
  }
});

async function boot(): Promise<void> {
  try {
    concepts = await api.concepts();
    el("picker").innerHTML = renderConceptPicker(concepts, null);
    const first = concepts.find((c) => c.has_subspace);
    if (first) {
      await showConcept(first.concept_id);
    }
  } catch (err) {
    showError(String(err));
  }
}

void boot();
