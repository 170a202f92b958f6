#!/usr/bin/env node
/**
 * Standalone executable over the shared code file format.
 *
 *   hamming-engine rank <codes.cukd> <queries.cukd> <N> [--out FILE]
 *     ranked-list text: one line per query, `query_id<TAB>id:dist ...`
 *   hamming-engine map <codes.cukd> <queries.cukd> <N> [--ap-out FILE]
 *     prints `mAP@N = <value>` and per-query `query_id,ap` CSV
 */

import * as fs from 'fs';

import { CodeFileError, loadCodes } from './codefile';
import { MapError, mapAtN } from './map';
import { RankingError, queryTopN, rankedListingText } from './ranking';

function fail(message: string, code = 1): never {
  process.stderr.write(`error: ${message}\n`);
  process.exit(code);
}

function parseArgs(argv: string[]): {
  command: string; codes: string; queries: string; n: number; out?: string;
} {
  const [command, codes, queries, nText, ...rest] = argv;
  if (!command || !['rank', 'map'].includes(command)) {
    fail('usage: hamming-engine <rank|map> <codes.cukd> <queries.cukd> <N> [--out FILE | --ap-out FILE]', 2);
  }
  if (!codes || !queries || !nText) {
    fail(`${command} needs <codes.cukd> <queries.cukd> <N>`, 2);
  }
  const n = Number(nText);
  if (!Number.isInteger(n) || n < 1) {
    fail(`N must be a positive integer, got ${nText}`, 2);
  }
  let out: string | undefined;
  for (let i = 0; i < rest.length; i += 2) {
    if (rest[i] === '--out' || rest[i] === '--ap-out') {
      out = rest[i + 1];
    } else {
      fail(`unknown flag ${rest[i]}`, 2);
    }
  }
  return { command, codes, queries, n, out };
}

function loadFile(path: string) {
  if (!fs.existsSync(path)) fail(`no such file: ${path}`, 2);
  return loadCodes(fs.readFileSync(path), path);
}

export function main(argv: string[]): void {
  const args = parseArgs(argv);
  const store = loadFile(args.codes);
  const queries = loadFile(args.queries);
  if (args.command === 'rank') {
    const text = rankedListingText(queries, queryTopN(store, queries, args.n));
    if (args.out) {
      fs.writeFileSync(args.out, text);
    } else {
      process.stdout.write(text);
    }
    return;
  }
  const result = mapAtN(store, queries, args.n);
  process.stdout.write(`mAP@${args.n} = ${result.map.toPrecision(17)}\n`);
  const csvLines = ['query_id,ap'];
  for (let qi = 0; qi < queries.count; qi++) {
    csvLines.push(`${queries.ids[qi]},${result.perQuery[qi].toPrecision(17)}`);
  }
  const csv = csvLines.join('\n') + '\n';
  if (args.out) {
    fs.writeFileSync(args.out, csv);
  } else {
    process.stdout.write(csv);
  }
}

if (require.main === module) {
  try {
    main(process.argv.slice(2));
  } catch (err) {
    if (err instanceof CodeFileError || err instanceof RankingError || err instanceof MapError) {
      fail(err.message);
    }
    throw err;
  }
}
