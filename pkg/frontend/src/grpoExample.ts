/**
 * Group-scoring example for an RL training loop.
 *
 * Documentation only: it shows how a trainer turns the totals returned for a
 * rollout group into group-mean-baseline advantages. No optimizer is
 * included; plug the advantages into your own policy update.
 */

import { RewardClient } from './client.js';
import { isGroupItemError, type GroundTruth } from './types.js';

/** Advantage of each sample relative to the group mean. */
export function groupMeanAdvantages(totals: number[]): number[] {
  if (totals.length === 0) {
    return [];
  }
  const mean = totals.reduce((acc, t) => acc + t, 0) / totals.length;
  return totals.map((t) => t - mean);
}

export async function scoreRolloutGroup(
  client: RewardClient,
  completions: string[],
  groundTruth: GroundTruth,
): Promise<{ totals: number[]; advantages: number[] }> {
  const results = await client.scoreGroup(completions, groundTruth);
  // Failed items contribute zero reward rather than aborting the group.
  const totals = results.map((result) => (isGroupItemError(result) ? 0 : result.total));
  return { totals, advantages: groupMeanAdvantages(totals) };
}

// Example usage (requires a running service):
//
//   const client = new RewardClient({ baseUrl: 'http://127.0.0.1:8080' });
//   const { advantages } = await scoreRolloutGroup(client, rolloutTexts, {
//     label: 'Halu',
//     gt_sentences: ['the unsupported sentence'],
//   });
