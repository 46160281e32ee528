export { RewardClient, RewardRequestError, TransportError } from './client.js';
export type { FetchLike } from './client.js';
export { groupMeanAdvantages, scoreRolloutGroup } from './grpoExample.js';
export * from './types.js';
