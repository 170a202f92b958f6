/**
 * Bit-packed binary code file (shared, bit-exact wire format).
 *
 * Little-endian layout:
 *   magic "CUKD" | u16 format version | u16 K_bits | u64 item count
 *   per item: u64 id, ceil(K_bits/64) x u64 code words
 *     (bit j of the code is bit j%64 of word j/64)
 *   label block, per item in order: u16 label count, then u32 label ids
 */

export const MAGIC = 'CUKD';
export const FORMAT_VERSION = 1;
const HEADER_SIZE = 16;

export class CodeFileError extends Error {}

export interface CodeStore {
  kBits: number;
  count: number;
  /** u64 words per code */
  wordsPerCode: number;
  /** code words split into u32 halves, little-endian (lo, hi) per word */
  words32: Uint32Array;
  ids: BigUint64Array;
  /** per-item sorted label ids */
  labels: Uint32Array[];
}

export function wordsPerCode(kBits: number): number {
  return Math.ceil(kBits / 64);
}

export function loadCodes(buffer: Buffer, name = 'code file'): CodeStore {
  if (buffer.length < HEADER_SIZE) {
    throw new CodeFileError(
      `${name}: truncated header, expected ${HEADER_SIZE} bytes, got ${buffer.length}`);
  }
  if (buffer.toString('latin1', 0, 4) !== MAGIC) {
    throw new CodeFileError(`${name}: bad magic ${JSON.stringify(buffer.toString('latin1', 0, 4))}`);
  }
  const version = buffer.readUInt16LE(4);
  if (version !== FORMAT_VERSION) {
    throw new CodeFileError(`${name}: unsupported format version ${version}`);
  }
  const kBits = buffer.readUInt16LE(6);
  const count = Number(buffer.readBigUInt64LE(8));
  const words = wordsPerCode(kBits);
  const itemSize = 8 + words * 8;
  const codesEnd = HEADER_SIZE + count * itemSize;
  if (buffer.length < codesEnd) {
    throw new CodeFileError(
      `${name}: truncated code section, expected at least ${codesEnd} bytes, got ${buffer.length}`);
  }
  const ids = new BigUint64Array(count);
  const words32 = new Uint32Array(count * words * 2);
  let offset = HEADER_SIZE;
  for (let i = 0; i < count; i++) {
    ids[i] = buffer.readBigUInt64LE(offset);
    offset += 8;
    for (let w = 0; w < words; w++) {
      words32[(i * words + w) * 2] = buffer.readUInt32LE(offset);
      words32[(i * words + w) * 2 + 1] = buffer.readUInt32LE(offset + 4);
      offset += 8;
    }
  }
  const labels: Uint32Array[] = new Array(count);
  for (let i = 0; i < count; i++) {
    if (offset + 2 > buffer.length) {
      throw new CodeFileError(`${name}: truncated label block at item ${i}`);
    }
    const nLabels = buffer.readUInt16LE(offset);
    offset += 2;
    const end = offset + 4 * nLabels;
    if (end > buffer.length) {
      throw new CodeFileError(
        `${name}: truncated label list at item ${i}, expected ${end} bytes, got ${buffer.length}`);
    }
    const list = new Uint32Array(nLabels);
    for (let l = 0; l < nLabels; l++) {
      list[l] = buffer.readUInt32LE(offset);
      offset += 4;
    }
    labels[i] = list;
  }
  if (offset !== buffer.length) {
    throw new CodeFileError(`${name}: ${buffer.length - offset} trailing bytes after label block`);
  }
  return { kBits, count, wordsPerCode: words, words32, ids, labels };
}

export function writeCodes(store: CodeStore): Buffer {
  const words = store.wordsPerCode;
  const labelBytes = store.labels.reduce((sum, l) => sum + 2 + 4 * l.length, 0);
  const buffer = Buffer.alloc(HEADER_SIZE + store.count * (8 + words * 8) + labelBytes);
  buffer.write(MAGIC, 0, 'latin1');
  buffer.writeUInt16LE(FORMAT_VERSION, 4);
  buffer.writeUInt16LE(store.kBits, 6);
  buffer.writeBigUInt64LE(BigInt(store.count), 8);
  let offset = HEADER_SIZE;
  for (let i = 0; i < store.count; i++) {
    buffer.writeBigUInt64LE(store.ids[i], offset);
    offset += 8;
    for (let w = 0; w < words; w++) {
      buffer.writeUInt32LE(store.words32[(i * words + w) * 2], offset);
      buffer.writeUInt32LE(store.words32[(i * words + w) * 2 + 1], offset + 4);
      offset += 8;
    }
  }
  for (let i = 0; i < store.count; i++) {
    const list = Array.from(store.labels[i]).sort((a, b) => a - b);
    buffer.writeUInt16LE(list.length, offset);
    offset += 2;
    for (const label of list) {
      buffer.writeUInt32LE(label, offset);
      offset += 4;
    }
  }
  return buffer;
}

/** Build a store from 0/1 bit rows (row-major, bit j = column j). */
export function storeFromBits(
  bits: number[][], kBits: number, ids: bigint[], labels: number[][],
): CodeStore {
  const count = bits.length;
  const words = wordsPerCode(kBits);
  const words32 = new Uint32Array(count * words * 2);
  for (let i = 0; i < count; i++) {
    for (let j = 0; j < kBits; j++) {
      if (bits[i][j]) {
        const word = Math.floor(j / 64);
        const bit = j % 64;
        const half = bit < 32 ? 0 : 1;
        words32[(i * words + word) * 2 + half] |= 1 << (bit % 32);
      }
    }
  }
  return {
    kBits,
    count,
    wordsPerCode: words,
    words32,
    ids: BigUint64Array.from(ids),
    labels: labels.map((l) => Uint32Array.from([...l].sort((a, b) => a - b))),
  };
}
