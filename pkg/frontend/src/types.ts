/** Wire types for the hiergen inference service (consumed verbatim). */

export interface TaxonomyNode {
  code: string;
  level: number;
  parent: string | null;
}

export interface TaxonomyResponse {
  max_depth: number;
  nodes: TaxonomyNode[];
}

export interface DocumentIn {
  type: string;
  text: string;
}

export interface PredictRequest {
  documents: DocumentIn[];
  expert_prefix: string[];
  mode?: "greedy" | "constrained";
  top_k?: number;
}

export interface Alternative {
  code: string;
  prob: number;
}

export interface LevelStep {
  level: number;
  code: string;
  prob: number;
  alternatives: Alternative[];
}

export interface PredictResponse {
  path: LevelStep[];
  prefix: string[];
  labels: string[];
  terminated: boolean;
  valid_path: boolean;
  score: number;
}

export const STOP_CODE = "<stop>";
