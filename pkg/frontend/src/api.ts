/** Typed client for the herd risk service's JSON API.
 *
 * The UI never recomputes scores or counterfactual math: every number it
 * displays comes from one of these responses.
 */

export interface HerdEntry {
  cow_id: string;
  as_of_date: string;
  score: number;
  class: "Sick" | "Healthy";
  top_feature_values: Record<string, number>;
}

export interface HerdResponse {
  model_hash: string;
  cows: HerdEntry[];
}

export interface FeatureRow {
  name: string;
  value: number;
  unit: string;
  actionable: boolean;
  eligible: boolean;
  min_change: number | null;
  lower_bound: number;
  upper_bound: number;
}

export interface HistoryPoint {
  date: string;
  yield: number | null;
  fat_pct: number | null;
  protein_pct: number | null;
  lactose_pct: number | null;
  scc: number | null;
  urea: number | null;
}

export interface CowDetail {
  model_hash: string;
  cow_id: string;
  as_of_date: string;
  score: number;
  class: "Sick" | "Healthy";
  features: FeatureRow[];
  history: HistoryPoint[];
}

export interface DeltaEntry {
  feature: string;
  change: number;
  unit: string;
}

export interface ExplainResult {
  status: "found" | "not_found";
  score_original: number;
  score_cf: number;
  distance: number | null;
  subsets_searched: number;
  original: Record<string, number>;
  deltas: DeltaEntry[];
}

export interface ExplainResponse {
  model_hash: string;
  cow_id: string;
  result: ExplainResult;
  narration: string | null;
}

export interface WhatIfResponse {
  model_hash: string;
  cow_id: string;
  score: number;
  class: "Sick" | "Healthy";
  vector: Record<string, number>;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  details: Record<string, unknown>;
}

export class ApiError extends Error {
  constructor(public status: number, public body: ApiErrorBody) {
    super(body.message);
  }
}

export type Overrides = Record<string, { value: number } | { delta: number }>;

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl = "",
    private fetchFn: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body as ApiErrorBody);
    }
    return body as T;
  }

  herd(): Promise<HerdResponse> {
    return this.request("/api/herd");
  }

  cow(cowId: string): Promise<CowDetail> {
    return this.request(`/api/cows/${encodeURIComponent(cowId)}`);
  }

  explain(cowId: string): Promise<ExplainResponse> {
    return this.request("/api/explain", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ cow_id: cowId }),
    });
  }

  whatIf(cowId: string, overrides: Overrides): Promise<WhatIfResponse> {
    return this.request("/api/whatif", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ cow_id: cowId, overrides }),
    });
  }
}
