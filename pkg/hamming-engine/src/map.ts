/**
 * Average precision over ranked lists and its mean over a query store,
 * numerically identical to the reference formula: running precision summed
 * at relevant ranks, divided by the number of relevant items retrieved;
 * zero when nothing relevant was retrieved.
 */

import { CodeStore } from './codefile';
import { RankedList, queryTopN } from './ranking';

export class MapError extends Error {}

export interface MapResult {
  map: number;
  perQuery: Float64Array;
}

function intersects(queryLabels: Set<number>, itemLabels: Uint32Array): boolean {
  for (let i = 0; i < itemLabels.length; i++) {
    if (queryLabels.has(itemLabels[i])) return true;
  }
  return false;
}

export function averagePrecision(relevance: Uint8Array): number {
  let hits = 0;
  let sum = 0;
  for (let rank = 1; rank <= relevance.length; rank++) {
    if (relevance[rank - 1]) {
      hits += 1;
      sum += hits / rank;
    }
  }
  return hits === 0 ? 0 : sum / hits;
}

export function mapAtN(store: CodeStore, queries: CodeStore, n: number): MapResult {
  if (queries.count === 0) {
    throw new MapError('zero queries');
  }
  const anyLabels = store.labels.some((l) => l.length > 0)
    || queries.labels.some((l) => l.length > 0);
  if (!anyLabels) {
    throw new MapError('label block carries no labels; relevance is undefined');
  }
  const indexById = new Map<bigint, number>();
  for (let i = 0; i < store.count; i++) indexById.set(store.ids[i], i);
  const lists: RankedList[] = queryTopN(store, queries, n);
  const perQuery = new Float64Array(queries.count);
  for (let qi = 0; qi < queries.count; qi++) {
    const qLabels = new Set<number>(queries.labels[qi]);
    const ranked = lists[qi];
    const relevance = new Uint8Array(ranked.ids.length);
    for (let i = 0; i < ranked.ids.length; i++) {
      const di = indexById.get(ranked.ids[i])!;
      relevance[i] = intersects(qLabels, store.labels[di]) ? 1 : 0;
    }
    perQuery[qi] = averagePrecision(relevance);
  }
  let total = 0;
  for (let qi = 0; qi < queries.count; qi++) total += perQuery[qi];
  return { map: total / queries.count, perQuery };
}
