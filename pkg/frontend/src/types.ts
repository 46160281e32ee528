/** Wire types mirroring the reward service JSON contract. */

export type GroundTruthLabel = 'Halu' | 'NonHalu';

export interface GroundTruth {
  label: GroundTruthLabel;
  gt_sentences?: string[];
  reference_answer?: string;
}

export interface RewardWeights {
  w_struct?: number;
  w_acc?: number;
  w_loc?: number;
}

export interface LocMatch {
  prediction: string;
  gt_index: number | null;
  score: number;
}

export interface RewardBreakdown {
  r_struct: number;
  r_acc: number;
  r_loc: number;
  r_loc_raw: number;
  total: number;
  parse_status: 'Valid' | 'MissingFields' | 'Malformed';
  loc_detail: LocMatch[];
  version: string;
  config_fingerprint: string;
}

export interface GroupItemError {
  error: { index: number; message: string };
}

export type GroupResult = RewardBreakdown | GroupItemError;

export function isGroupItemError(result: GroupResult): result is GroupItemError {
  return typeof (result as GroupItemError).error === 'object';
}

export interface ClientConfig {
  baseUrl: string;
  timeoutS?: number;
  retries?: number;
  /** Must not exceed the server's configured batch limit (default 512). */
  batchMax?: number;
}
