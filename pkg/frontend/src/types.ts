export interface ConceptInfo {
  concept_id: number;
  attributes: string[];
  has_subspace: boolean;
}

export interface ItemInfo {
  id: number;
  description: string[];
  splits: string[];
}

export interface GridSnap {
  rows: number;
  cols: number;
  cells: Record<string, [number, number]>;
}

export interface Projection {
  concept_id: number;
  points: Record<string, [number, number]>;
  grid: GridSnap | null;
}

export type Method = "baseline" | "concept";

export interface RankedItem {
  id: number;
  score: number;
}

export interface QueryResponse {
  results: RankedItem[];
  detected_negative: string | null;
  fallback: boolean;
}

export interface QueryRequest {
  image_id: number;
  add_attribute: string;
  method: Method;
  k: number;
}
