import type { PredictRequest, PredictResponse, TaxonomyResponse } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`service error ${status}: ${detail}`);
  }
}

/** Thin typed client over the inference service; all probability math
 * stays on the server. */
export class ServiceClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {}

  async fetchTaxonomy(): Promise<TaxonomyResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/taxonomy`);
    if (!res.ok) {
      throw new ServiceError(res.status, await res.text());
    }
    return (await res.json()) as TaxonomyResponse;
  }

  async predict(req: PredictRequest): Promise<PredictResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/predict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    if (!res.ok) {
      let detail: string;
      try {
        const body = (await res.json()) as { detail?: string; errors?: unknown };
        detail = body.detail ?? JSON.stringify(body.errors ?? body);
      } catch {
        detail = res.statusText;
      }
      throw new ServiceError(res.status, detail);
    }
    return (await res.json()) as PredictResponse;
  }
}
