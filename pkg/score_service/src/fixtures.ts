import { readFileSync, writeFileSync } from 'node:fs';

import { checkItem, stubScore } from './stub.js';
import type { DiscriminatorId } from './stub.js';

export interface FixtureItem {
  question_id: string;
  candidate_index: number;
  doc_id: string;
  discriminator: DiscriminatorId;
  question: string;
  answer?: string;
  document: string;
}

/** Parse the JSONL fixture-request file, one scoring item per line. */
export function readItems(path: string): FixtureItem[] {
  const items: FixtureItem[] = [];
  const lines = readFileSync(path, 'utf-8').split('\n');
  lines.forEach((line, i) => {
    if (!line.trim()) return;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}: line ${i + 1}: invalid JSON: ${(err as Error).message}`);
    }
    const disc = obj.discriminator;
    if (disc !== 'drd' && disc !== 'avd') {
      throw new Error(`${path}: line ${i + 1}: unknown discriminator ${JSON.stringify(disc)}`);
    }
    if (typeof obj.question_id !== 'string' || typeof obj.doc_id !== 'string'
        || typeof obj.candidate_index !== 'number') {
      throw new Error(`${path}: line ${i + 1}: needs question_id, candidate_index, doc_id`);
    }
    const checked = checkItem(disc, obj, i);
    items.push({
      question_id: obj.question_id,
      candidate_index: obj.candidate_index,
      doc_id: obj.doc_id,
      discriminator: disc,
      ...checked,
    });
  });
  return items;
}

/**
 * Write the precomputed-score TSV the ranking toolkit consumes:
 * question_id <TAB> candidate_index <TAB> doc_id <TAB> discriminator <TAB> score
 *
 * Scores come from the same stub function the live service uses, so a
 * fixture generated with seed s equals the responses of a server running
 * with seed s, and regenerating with the same seed is byte-identical.
 */
export function generateFixtures(
  itemsPath: string,
  outPath: string,
  stubSeed: number,
): number {
  const items = readItems(itemsPath);
  const rows = items.map((item) => {
    const score = stubScore(item.discriminator, item, stubSeed);
    return [
      item.question_id,
      String(item.candidate_index),
      item.doc_id,
      item.discriminator,
      String(score),
    ].join('\t');
  });
  writeFileSync(outPath, rows.map((r) => r + '\n').join(''), 'utf-8');
  return rows.length;
}
