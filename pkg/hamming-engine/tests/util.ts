/** Shared test helpers: seeded PRNG, random instances, reference runner. */

import { execFileSync } from 'child_process';
import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';

import { CodeStore, storeFromBits } from '../src/codefile';

export const PKG_ROOT = path.resolve(__dirname, '..', '..', '..');
export const PRIMARY_SRC = path.join(PKG_ROOT, 'src');
export const ORACLE = path.resolve(__dirname, '..', '..', 'tests', 'reference_oracle.py');

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function randomInt(rng: () => number, lo: number, hi: number): number {
  return lo + Math.floor(rng() * (hi - lo));
}

export interface Instance {
  db: CodeStore;
  queries: CodeStore;
  n: number;
}

export function randomInstance(rng: () => number, opts: {
  maxQueries?: number; maxDb?: number; bigIds?: boolean;
} = {}): Instance {
  const kBits = [16, 32, 48, 64][randomInt(rng, 0, 4)];
  const nDb = randomInt(rng, 10, (opts.maxDb ?? 500) + 1);
  const nQ = randomInt(rng, 1, (opts.maxQueries ?? 50) + 1);
  const n = randomInt(rng, 1, nDb + 1);
  const nClasses = randomInt(rng, 2, 9);
  const multilabel = rng() < 0.4;

  const makeBits = (count: number) =>
    Array.from({ length: count }, () =>
      Array.from({ length: kBits }, () => (rng() < 0.5 ? 0 : 1)));
  const makeLabels = (count: number) =>
    Array.from({ length: count }, () => {
      if (!multilabel) return [randomInt(rng, 0, nClasses)];
      const first = randomInt(rng, 0, nClasses);
      const second = randomInt(rng, 0, nClasses);
      return first === second ? [first] : [first, second];
    });
  const idBase = opts.bigIds ? 2n ** 62n : 0n;
  // distinct but shuffled ids, occasionally above 2^32
  const ids = Array.from({ length: nDb }, (_, i) => idBase + BigInt(i * 3 + randomInt(rng, 0, 3)));
  const seen = new Set<bigint>();
  for (let i = 0; i < ids.length; i++) {
    while (seen.has(ids[i])) ids[i] += 1n;
    seen.add(ids[i]);
  }
  const qIds = Array.from({ length: nQ }, (_, i) => idBase + BigInt(10_000_000 + i));
  return {
    db: storeFromBits(makeBits(nDb), kBits, ids, makeLabels(nDb)),
    queries: storeFromBits(makeBits(nQ), kBits, qIds, makeLabels(nQ)),
    n,
  };
}

export function tmpDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix));
}

export function runPython(args: string[], timeoutMs = 300_000): string {
  return execFileSync('python3', args, {
    env: { ...process.env, PYTHONPATH: PRIMARY_SRC },
    encoding: 'utf8',
    timeout: timeoutMs,
    maxBuffer: 256 * 1024 * 1024,
  });
}

export interface OracleResult {
  rank: string;
  map: number;
  aps: number[];
}

export function runOracleBatch(manifestPath: string): OracleResult[] {
  return JSON.parse(runPython([ORACLE, 'batch', manifestPath]));
}
