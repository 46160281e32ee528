import type {
  ClientConfig,
  GroundTruth,
  GroupResult,
  RewardBreakdown,
  RewardWeights,
} from './types.js';

export type FetchLike = (url: string, init: RequestInit) => Promise<Response>;

/** Non-retryable rejection from the service (schema violation etc.). */
export class RewardRequestError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(`HTTP ${status}: ${message}`);
  }
}

/** Transport failure that survived every retry. */
export class TransportError extends Error {}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

const DEFAULTS = { timeoutS: 30, retries: 2, batchMax: 512, retryBaseMs: 250 };

/**
 * Thin client for the reward-scoring service.
 *
 * Not safe to share across workers; create one instance per worker.
 */
export class RewardClient {
  private readonly baseUrl: string;
  private readonly timeoutS: number;
  private readonly retries: number;
  private readonly batchMax: number;
  private readonly fetchFn: FetchLike;

  constructor(config: ClientConfig, fetchFn?: FetchLike) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, '');
    this.timeoutS = config.timeoutS ?? DEFAULTS.timeoutS;
    this.retries = config.retries ?? DEFAULTS.retries;
    this.batchMax = config.batchMax ?? DEFAULTS.batchMax;
    if (this.batchMax < 1 || this.batchMax > 512) {
      throw new Error(`batchMax must be within the server limit (1..512), got ${this.batchMax}`);
    }
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const url = `${this.baseUrl}${path}`;
    let lastError = 'no attempt made';
    for (let attempt = 0; attempt <= this.retries; attempt++) {
      let response: Response;
      try {
        response = await this.fetchFn(url, {
          method: 'POST',
          headers: { 'Content-Type': 'application/json' },
          body: JSON.stringify(body),
          signal: AbortSignal.timeout(this.timeoutS * 1000),
        });
      } catch (error) {
        lastError = String(error);
        if (attempt < this.retries) {
          await sleep(DEFAULTS.retryBaseMs * 2 ** attempt);
        }
        continue;
      }
      if (response.status === 429 || response.status >= 500) {
        lastError = `HTTP ${response.status}`;
        if (attempt < this.retries) {
          await sleep(DEFAULTS.retryBaseMs * 2 ** attempt);
        }
        continue;
      }
      if (!response.ok) {
        const text = await response.text().catch(() => '');
        let message = text.slice(0, 400);
        try {
          message = JSON.parse(text)?.error?.message ?? message;
        } catch {
          // keep the raw body excerpt
        }
        throw new RewardRequestError(response.status, message);
      }
      return (await response.json()) as T;
    }
    throw new TransportError(`${url} failed after ${this.retries + 1} attempts: ${lastError}`);
  }

  /** Score one completion; numerics equal the service response exactly. */
  async score(
    completion: string,
    groundTruth: GroundTruth,
    weights?: RewardWeights,
  ): Promise<RewardBreakdown> {
    const body: Record<string, unknown> = { completion, ground_truth: groundTruth };
    if (weights) {
      body.weights = weights;
    }
    return this.post<RewardBreakdown>('/v1/reward', body);
  }

  /**
   * Score a rollout group against one ground truth, chunking into batch
   * calls transparently. Results are order preserving; per-item failures
   * surface positionally as inline error objects.
   */
  async scoreGroup(
    completions: string[],
    groundTruth: GroundTruth,
    weights?: RewardWeights,
  ): Promise<GroupResult[]> {
    if (completions.length === 0) {
      return [];
    }
    const results: GroupResult[] = [];
    for (let start = 0; start < completions.length; start += this.batchMax) {
      const chunk = completions.slice(start, start + this.batchMax).map((completion) => {
        const item: Record<string, unknown> = { completion, ground_truth: groundTruth };
        if (weights) {
          item.weights = weights;
        }
        return item;
      });
      const chunkResults = await this.post<GroupResult[]>('/v1/reward/batch', chunk);
      results.push(...chunkResults);
    }
    return results;
  }
}
