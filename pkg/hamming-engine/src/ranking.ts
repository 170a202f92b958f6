/**
 * Top-N Hamming ranking over a packed code store.
 *
 * Distance kernel: word-wise XOR + population count on u32 halves,
 * accumulated in plain 32-bit-safe integers. Selection uses a bounded
 * max-heap keyed by (distance, id, storage index), which realizes the
 * reference tie-break (ascending id, then storage order) without sorting
 * the whole store.
 */

import { CodeStore } from './codefile';

export class RankingError extends Error {}

export interface RankedList {
  ids: BigUint64Array;
  distances: Int32Array;
}

export function popcount32(x: number): number {
  x = x - ((x >>> 1) & 0x55555555);
  x = (x & 0x33333333) + ((x >>> 2) & 0x33333333);
  x = (x + (x >>> 4)) & 0x0f0f0f0f;
  return Math.imul(x, 0x01010101) >>> 24;
}

// 16-bit population count table; two lookups per u32 half beat the ALU
// chain on the scan path
const POP16 = new Uint8Array(65536);
for (let i = 1; i < 65536; i++) POP16[i] = (i & 1) + POP16[i >> 1];

/** true when candidate (d, id, seq) orders strictly before the incumbent */
function before(
  store: CodeStore, dA: number, seqA: number, dB: number, seqB: number,
): boolean {
  if (dA !== dB) return dA < dB;
  const idA = store.ids[seqA];
  const idB = store.ids[seqB];
  if (idA !== idB) return idA < idB;
  return seqA < seqB;
}

class BoundedWorstHeap {
  /** parallel arrays; the root holds the WORST kept candidate */
  dist: Int32Array;
  seq: Int32Array;
  size = 0;

  constructor(private store: CodeStore, capacity: number) {
    this.dist = new Int32Array(capacity);
    this.seq = new Int32Array(capacity);
  }

  private worse(a: number, b: number): boolean {
    // a orders after b => a is worse
    return before(this.store, this.dist[b], this.seq[b], this.dist[a], this.seq[a]);
  }

  private swap(a: number, b: number): void {
    const d = this.dist[a]; this.dist[a] = this.dist[b]; this.dist[b] = d;
    const s = this.seq[a]; this.seq[a] = this.seq[b]; this.seq[b] = s;
  }

  private siftUp(i: number): void {
    while (i > 0) {
      const parent = (i - 1) >> 1;
      if (!this.worse(i, parent)) break;
      this.swap(i, parent);
      i = parent;
    }
  }

  private siftDown(i: number): void {
    for (;;) {
      let worst = i;
      const left = 2 * i + 1;
      const right = 2 * i + 2;
      if (left < this.size && this.worse(left, worst)) worst = left;
      if (right < this.size && this.worse(right, worst)) worst = right;
      if (worst === i) return;
      this.swap(i, worst);
      i = worst;
    }
  }

  offer(d: number, seq: number): void {
    if (this.size < this.dist.length) {
      this.dist[this.size] = d;
      this.seq[this.size] = seq;
      this.size += 1;
      this.siftUp(this.size - 1);
    } else if (before(this.store, d, seq, this.dist[0], this.seq[0])) {
      this.dist[0] = d;
      this.seq[0] = seq;
      this.siftDown(0);
    }
  }

  /** ascending (distance, id, storage order) */
  drain(): Array<{ d: number; seq: number }> {
    const out = [];
    for (let i = 0; i < this.size; i++) out.push({ d: this.dist[i], seq: this.seq[i] });
    const store = this.store;
    out.sort((a, b) => {
      if (a.d !== b.d) return a.d - b.d;
      const idA = store.ids[a.seq];
      const idB = store.ids[b.seq];
      if (idA !== idB) return idA < idB ? -1 : 1;
      return a.seq - b.seq;
    });
    return out;
  }
}

export function rankOne(
  store: CodeStore, queryWords32: Uint32Array, n: number,
): RankedList {
  if (queryWords32.length !== store.wordsPerCode * 2) {
    throw new RankingError(
      `query has ${queryWords32.length / 2} words, store codes have ${store.wordsPerCode}`);
  }
  if (n > store.count) {
    throw new RankingError(`requested top ${n} from a ${store.count}-item store`);
  }
  const heap = new BoundedWorstHeap(store, n);
  const halves = store.wordsPerCode * 2;
  const words = store.words32;
  const count = store.count;
  // candidates strictly above the current worst kept distance can be
  // rejected without touching the heap; equal distances still go through
  // the heap's exact (distance, id, order) comparison
  let worstD = 0x7fffffff;
  if (halves === 2) {
    // single-word codes (K <= 64): unrolled hot path with a distance
    // threshold once the heap is full
    const q0 = queryWords32[0];
    const q1 = queryWords32[1];
    const fill = Math.min(n, count);
    let i = 0;
    for (; i < fill; i++) {
      const x = (words[2 * i] ^ q0) >>> 0;
      const y = (words[2 * i + 1] ^ q1) >>> 0;
      const d = POP16[x & 0xffff] + POP16[x >>> 16] + POP16[y & 0xffff] + POP16[y >>> 16];
      heap.offer(d, i);
    }
    worstD = heap.size === n ? heap.dist[0] : 0x7fffffff;
    for (; i < count; i++) {
      const x = (words[2 * i] ^ q0) >>> 0;
      const y = (words[2 * i + 1] ^ q1) >>> 0;
      const d = POP16[x & 0xffff] + POP16[x >>> 16] + POP16[y & 0xffff] + POP16[y >>> 16];
      if (d > worstD) continue;
      heap.offer(d, i);
      worstD = heap.dist[0];
    }
  } else {
    for (let i = 0; i < count; i++) {
      let d = 0;
      const base = i * halves;
      for (let h = 0; h < halves; h++) {
        d += popcount32(words[base + h] ^ queryWords32[h]);
      }
      if (d > worstD && heap.size >= n) continue;
      heap.offer(d, i);
      if (heap.size === n) worstD = heap.dist[0];
    }
  }
  const ordered = heap.drain();
  const ids = new BigUint64Array(ordered.length);
  const distances = new Int32Array(ordered.length);
  for (let i = 0; i < ordered.length; i++) {
    ids[i] = store.ids[ordered[i].seq];
    distances[i] = ordered[i].d;
  }
  return { ids, distances };
}

export function queryWords(store: CodeStore, index: number): Uint32Array {
  const halves = store.wordsPerCode * 2;
  return store.words32.subarray(index * halves, (index + 1) * halves);
}

function rankSingleWord(
  store: CodeStore, lo: Uint32Array, hi: Uint32Array,
  q0: number, q1: number, n: number,
): RankedList {
  const heap = new BoundedWorstHeap(store, n);
  const count = store.count;
  const fill = Math.min(n, count);
  let i = 0;
  for (; i < fill; i++) {
    const x = (lo[i] ^ q0) >>> 0;
    const y = (hi[i] ^ q1) >>> 0;
    heap.offer(POP16[x & 0xffff] + POP16[x >>> 16] + POP16[y & 0xffff] + POP16[y >>> 16], i);
  }
  let worstD = heap.size === n ? heap.dist[0] : 0x7fffffff;
  for (; i < count; i++) {
    const x = (lo[i] ^ q0) >>> 0;
    const y = (hi[i] ^ q1) >>> 0;
    const d = POP16[x & 0xffff] + POP16[x >>> 16] + POP16[y & 0xffff] + POP16[y >>> 16];
    if (d > worstD) continue;
    heap.offer(d, i);
    worstD = heap.dist[0];
  }
  const ordered = heap.drain();
  const ids = new BigUint64Array(ordered.length);
  const distances = new Int32Array(ordered.length);
  for (let k = 0; k < ordered.length; k++) {
    ids[k] = store.ids[ordered[k].seq];
    distances[k] = ordered[k].d;
  }
  return { ids, distances };
}

export function queryTopN(store: CodeStore, queries: CodeStore, n: number): RankedList[] {
  if (queries.kBits !== store.kBits) {
    throw new RankingError(
      `query codes are ${queries.kBits}-bit, store codes ${store.kBits}-bit`);
  }
  const out: RankedList[] = new Array(queries.count);
  if (store.wordsPerCode === 1) {
    if (n > store.count) {
      throw new RankingError(`requested top ${n} from a ${store.count}-item store`);
    }
    // de-interleave once; the per-query scan then reads two flat streams
    const lo = new Uint32Array(store.count);
    const hi = new Uint32Array(store.count);
    for (let i = 0; i < store.count; i++) {
      lo[i] = store.words32[2 * i];
      hi[i] = store.words32[2 * i + 1];
    }
    for (let qi = 0; qi < queries.count; qi++) {
      const q = queryWords(queries, qi);
      out[qi] = rankSingleWord(store, lo, hi, q[0], q[1], n);
    }
    return out;
  }
  for (let qi = 0; qi < queries.count; qi++) {
    out[qi] = rankOne(store, queryWords(queries, qi), n);
  }
  return out;
}

/** `query_id<TAB>id:dist id:dist ...` per query, matching the reference. */
export function rankedListingText(queries: CodeStore, lists: RankedList[]): string {
  const lines: string[] = [];
  for (let qi = 0; qi < lists.length; qi++) {
    const pairs: string[] = [];
    for (let i = 0; i < lists[qi].ids.length; i++) {
      pairs.push(`${lists[qi].ids[i]}:${lists[qi].distances[i]}`);
    }
    lines.push(`${queries.ids[qi]}\t${pairs.join(' ')}`);
  }
  return lines.join('\n') + '\n';
}
