// Protocol conformance acceptance check: 1000 mixed drd/avd requests get
// order-aligned scores in [0, 1], and a generated fixture file carries
// exactly the scores the live service returns for the same items.

import type { Server } from 'node:http';
import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { generateFixtures } from '../src/fixtures.js';
import { createApp } from '../src/server.js';
import type { DiscriminatorId } from '../src/stub.js';

const STUB_SEED = 7;

interface Item {
  question_id: string;
  candidate_index: number;
  doc_id: string;
  discriminator: DiscriminatorId;
  question: string;
  answer?: string;
  document: string;
}

function makeItems(n: number): Item[] {
  const items: Item[] = [];
  for (let i = 0; i < n; i++) {
    const discriminator: DiscriminatorId = i % 2 === 0 ? 'drd' : 'avd';
    items.push({
      question_id: `q${Math.floor(i / 8)}`,
      candidate_index: i % 4,
      doc_id: `doc-${i}`,
      discriminator,
      question: `what is property number ${Math.floor(i / 8)}`,
      ...(discriminator === 'avd' ? { answer: `candidate ${i % 4}` } : {}),
      document: `document text ${i} about property ${Math.floor(i / 8)}`,
    });
  }
  return items;
}

let server: Server;
let base: string;

beforeAll(async () => {
  const app = createApp({ port: 0, mode: 'stub', stubSeed: STUB_SEED, maxBatch: 256 });
  await new Promise<void>((resolve) => {
    server = app.listen(0, resolve);
  });
  const address = server.address();
  if (address === null || typeof address === 'string') throw new Error('no port');
  base = `http://127.0.0.1:${address.port}`;
});

afterAll(() => {
  server.close();
});

async function liveScores(items: Item[]): Promise<number[]> {
  // batch by discriminator while preserving each item's position
  const out = new Array<number>(items.length);
  for (const discriminator of ['drd', 'avd'] as const) {
    const positions = items
      .map((item, i) => [item, i] as const)
      .filter(([item]) => item.discriminator === discriminator);
    for (let start = 0; start < positions.length; start += 250) {
      const chunk = positions.slice(start, start + 250);
      const res = await fetch(`${base}/v1/score`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({
          discriminator,
          items: chunk.map(([item]) => ({
            question: item.question,
            document: item.document,
            ...(item.answer !== undefined ? { answer: item.answer } : {}),
          })),
        }),
      });
      expect(res.status).toBe(200);
      const { scores } = (await res.json()) as { scores: number[] };
      expect(scores).toHaveLength(chunk.length);
      chunk.forEach(([, pos], j) => {
        out[pos] = scores[j];
      });
    }
  }
  return out;
}

describe('criterion 9: protocol conformance', () => {
  it('serves 1000 mixed requests and matches the fixture file', async () => {
    const items = makeItems(1000);
    const scores = await liveScores(items);

    const inRange = scores.every((s) => s >= 0 && s <= 1);
    const repeat = await liveScores(items.slice(0, 100));
    const aligned = repeat.every((s, i) => s === scores[i]);

    const dir = mkdtempSync(join(tmpdir(), 'fixtures-'));
    const itemsPath = join(dir, 'items.jsonl');
    writeFileSync(itemsPath, items.map((x) => JSON.stringify(x) + '\n').join(''));
    const outPath = join(dir, 'scores.tsv');
    generateFixtures(itemsPath, outPath, STUB_SEED);
    const rows = readFileSync(outPath, 'utf-8').trim().split('\n');
    const fixtureMatches =
      rows.length === items.length &&
      rows.every((row, i) => {
        const [qid, cand, docId, disc, score] = row.split('\t');
        const item = items[i];
        return (
          qid === item.question_id &&
          Number(cand) === item.candidate_index &&
          docId === item.doc_id &&
          disc === item.discriminator &&
          Number(score) === scores[i]
        );
      });

    // regenerating with the same seed is byte-identical
    const outPath2 = join(dir, 'scores2.tsv');
    generateFixtures(itemsPath, outPath2, STUB_SEED);
    const reproducible =
      readFileSync(outPath, 'utf-8') === readFileSync(outPath2, 'utf-8');

    const ok = inRange && aligned && fixtureMatches && reproducible;
    console.log(
      `criterion 9 protocol conformance: ${ok ? 'PASS' : 'FAIL'} ` +
        `(1000 requests, fixture ${fixtureMatches ? 'matches' : 'differs'})`,
    );
    expect(inRange).toBe(true);
    expect(aligned).toBe(true);
    expect(fixtureMatches).toBe(true);
    expect(reproducible).toBe(true);
  });
});
