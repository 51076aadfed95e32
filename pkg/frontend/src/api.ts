import type {
  ConceptInfo,
  ItemInfo,
  Method,
  Projection,
  QueryRequest,
  QueryResponse,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown>; text(): Promise<string> }>;

/** Typed client for the retrieval service; fetch is injectable for tests. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...(args as [string])),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path);
    if (!res.ok) {
      throw new Error(`GET ${path} failed: ${res.status} ${await res.text()}`);
    }
    return (await res.json()) as T;
  }

  concepts(): Promise<ConceptInfo[]> {
    return this.get<ConceptInfo[]>("/v1/concepts");
  }

  item(id: number): Promise<ItemInfo> {
    return this.get<ItemInfo>(`/v1/items/${id}`);
  }

  thumbnailUrl(id: number): string {
    return `${this.baseUrl}/v1/items/${id}/thumbnail`;
  }

  projection(conceptId: number, split: string, grid: string): Promise<Projection> {
    return this.get<Projection>(
      `/v1/subspaces/${conceptId}/projection?split=${split}&grid=${grid}`,
    );
  }

  async query(
    imageId: number,
    addAttribute: string,
    method: Method,
    k: number,
  ): Promise<QueryResponse> {
    const body: QueryRequest = {
      image_id: imageId,
      add_attribute: addAttribute,
      method,
      k,
    };
    const res = await this.fetchFn(`${this.baseUrl}/v1/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      throw new Error(`query failed: ${res.status} ${await res.text()}`);
    }
    return (await res.json()) as QueryResponse;
  }
}
