#!/usr/bin/env node
import { parseArgs } from 'node:util';

import { generateFixtures } from './fixtures.js';
import { createApp, DEFAULT_CONFIG } from './server.js';

const USAGE = `usage:
  score-service serve [--port 8901] [--mode stub] [--stub-seed 0] [--max-batch 256]
  score-service fixtures --items <items.jsonl> --out <scores.tsv> [--stub-seed 0]`;

function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command === 'serve') {
    const { values } = parseArgs({
      args: rest,
      options: {
        port: { type: 'string' },
        mode: { type: 'string' },
        'stub-seed': { type: 'string' },
        'max-batch': { type: 'string' },
      },
    });
    const config = {
      ...DEFAULT_CONFIG,
      port: values.port ? Number(values.port) : DEFAULT_CONFIG.port,
      mode: (values.mode ?? 'stub') as 'stub' | 'model',
      stubSeed: values['stub-seed'] ? Number(values['stub-seed']) : 0,
      maxBatch: values['max-batch'] ? Number(values['max-batch']) : DEFAULT_CONFIG.maxBatch,
    };
    const app = createApp(config);
    app.listen(config.port, () => {
      console.log(`scoring service listening on port ${config.port} (seed ${config.stubSeed})`);
    });
    return 0;
  }
  if (command === 'fixtures') {
    const { values } = parseArgs({
      args: rest,
      options: {
        items: { type: 'string' },
        out: { type: 'string' },
        'stub-seed': { type: 'string' },
      },
    });
    if (!values.items || !values.out) {
      console.error(USAGE);
      return 2;
    }
    const seed = values['stub-seed'] ? Number(values['stub-seed']) : 0;
    const count = generateFixtures(values.items, values.out, seed);
    console.log(`wrote ${count} scores to ${values.out}`);
    return 0;
  }
  console.error(USAGE);
  return 2;
}

try {
  process.exitCode = main(process.argv.slice(2));
} catch (err) {
  console.error(JSON.stringify({ error: (err as Error).message }));
  process.exitCode = 1;
}
