import { createHash } from 'node:crypto';

export interface ScoreItem {
  question: string;
  answer?: string;
  document: string;
}

export type DiscriminatorId = 'drd' | 'avd';

// NUL never appears in the JSON text fields, so joining on it cannot collide
const SEPARATOR = '\u0000';

/**
 * Deterministic stub score in [0, 1).
 *
 * The score is the first 52 bits of sha256 over the request fields plus the
 * stub seed, divided by 2^52. Using a cryptographic hash (rather than any
 * in-process hash) keeps scores identical across process restarts and
 * platforms, which the fixture generator relies on.
 */
export function stubScore(
  discriminator: DiscriminatorId,
  item: ScoreItem,
  stubSeed: number,
): number {
  const digest = createHash('sha256')
    .update(
      [
        String(stubSeed),
        discriminator,
        item.question,
        item.answer ?? '',
        item.document,
      ].join(SEPARATOR),
    )
    .digest('hex');
  return parseInt(digest.slice(0, 13), 16) / 2 ** 52;
}

/** Validate one request item against the discriminator's answer contract. */
export function checkItem(
  discriminator: DiscriminatorId,
  item: unknown,
  index: number,
): ScoreItem {
  if (typeof item !== 'object' || item === null) {
    throw new Error(`item ${index} is not an object`);
  }
  const record = item as Record<string, unknown>;
  if (typeof record.question !== 'string') {
    throw new Error(`item ${index} is missing a string "question"`);
  }
  if (typeof record.document !== 'string') {
    throw new Error(`item ${index} is missing a string "document"`);
  }
  if (discriminator === 'drd' && record.answer !== undefined) {
    throw new Error(`item ${index}: drd items must not carry an answer`);
  }
  if (discriminator === 'avd' && typeof record.answer !== 'string') {
    throw new Error(`item ${index}: avd items require a string "answer"`);
  }
  return {
    question: record.question,
    document: record.document,
    ...(record.answer !== undefined ? { answer: record.answer as string } : {}),
  };
}
