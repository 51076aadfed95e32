import { describe, expect, it } from "vitest";

import {
  renderConceptGrid,
  renderConceptPicker,
  renderErrorBanner,
  renderItemDetail,
  renderMethodPanels,
  renderResults,
} from "../src/render.js";
import type { ConceptInfo, ItemInfo, Projection, QueryResponse } from "../src/types.js";

const thumb = (id: number) => `/v1/items/${id}/thumbnail`;

describe("results panel", () => {
  const response: QueryResponse = {
    // deliberately not sorted by id: served order must be preserved
    results: [
      { id: 50, score: 0.9 },
      { id: 3, score: 0.7 },
      { id: 17, score: 0.4 },
    ],
    detected_negative: "sleeveless",
    fallback: false,
  };

  it("keeps the served order verbatim", () => {
    const html = renderResults(response, thumb);
    const order = [...html.matchAll(/data-item-id="(\d+)"/g)].map((m) => m[1]);
    expect(order).toEqual(["50", "3", "17"]);
  });

  it("shows the detected negative attribute badge", () => {
    const html = renderResults(response, thumb);
    expect(html).toContain('class="badge negative"');
    expect(html).toContain("sleeveless");
  });

  it("shows the fallback badge and no negative", () => {
    const html = renderResults(
      { ...response, detected_negative: null, fallback: true },
      thumb,
    );
    expect(html).toContain('class="badge fallback"');
    expect(html).toContain("no attribute removed");
    expect(html).not.toContain("badge negative");
  });

  it("renders both methods side by side", () => {
    const html = renderMethodPanels(
      { ...response, detected_negative: null, fallback: false },
      response,
      thumb,
    );
    expect(html).toContain("<h4>baseline</h4>");
    expect(html).toContain("<h4>concept</h4>");
  });

  it("identical fallback lists render identically under both panels", () => {
    const fallback = { ...response, detected_negative: null, fallback: true };
    const html = renderMethodPanels(fallback, fallback, thumb);
    const panels = html.split("<h4>concept</h4>");
    const orders = panels.map((part) =>
      [...part.matchAll(/data-item-id="(\d+)"/g)].map((m) => m[1]).join(","),
    );
    expect(orders[0]).toContain(orders[1]);
  });
});

describe("item detail", () => {
  const concepts: ConceptInfo[] = [
    { concept_id: 0, attributes: ["sleeveless", "long-sleeve", "cap-sleeve"], has_subspace: true },
    { concept_id: 1, attributes: ["red", "blue"], has_subspace: true },
  ];
  const item: ItemInfo = { id: 9, description: ["red", "sleeveless"], splits: ["test"] };

  it("renders one chip per attribute with same-concept alternatives", () => {
    const html = renderItemDetail(item, concepts);
    expect(html).toContain('data-attribute="red"');
    expect(html).toContain('data-attribute="sleeveless"');
    // clicking the long-sleeve alternative issues add_attribute=long-sleeve
    expect(html).toContain('data-add-attribute="long-sleeve"');
    expect(html).toContain('data-add-attribute="cap-sleeve"');
    expect(html).toContain('data-add-attribute="blue"');
    // an attribute is never its own replacement
    expect(html).not.toContain('data-add-attribute="red"');
  });

  it("escapes markup in labels", () => {
    const evil: ItemInfo = { id: 1, description: ["<b>x</b>"], splits: ["val"] };
    const html = renderItemDetail(evil, []);
    expect(html).not.toContain("<b>x</b>");
    expect(html).toContain("&lt;b&gt;");
  });
});

describe("concept grid", () => {
  const projection: Projection = {
    concept_id: 2,
    points: { "5": [0.1, 0.2], "8": [0.5, -0.3] },
    grid: { rows: 24, cols: 24, cells: { "5": [0, 3], "8": [10, 11] } },
  };

  it("places each item at its snapped cell", () => {
    const html = renderConceptGrid(projection, thumb);
    expect(html).toContain("grid-row:1;grid-column:4");
    expect(html).toContain("grid-row:11;grid-column:12");
    expect(html).toContain('data-item-id="5"');
  });

  it("renders a hint when no grid snap is present", () => {
    expect(renderConceptGrid({ ...projection, grid: null }, thumb)).toContain(
      "hint",
    );
  });
});

describe("chrome", () => {
  it("error banner carries the verbatim message", () => {
    const html = renderErrorBanner('query failed: 404 {"detail":"x"}');
    expect(html).toContain("query failed: 404");
  });

  it("picker only offers concepts with a trained subspace", () => {
    const html = renderConceptPicker(
      [
        { concept_id: 0, attributes: ["a", "b"], has_subspace: true },
        { concept_id: 1, attributes: ["c"], has_subspace: false },
      ],
      0,
    );
    expect(html).toContain('data-concept-id="0"');
    expect(html).not.toContain('data-concept-id="1"');
    expect(html).toContain("active");
  });
});
