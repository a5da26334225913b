import express from 'express';
import type { Express, NextFunction, Request, Response } from 'express';

import { checkItem, stubScore } from './stub.js';
import type { DiscriminatorId } from './stub.js';

export interface ServiceConfig {
  port: number;
  mode: 'stub' | 'model';
  stubSeed: number;
  maxBatch: number;
  modelId?: string;
}

export const DEFAULT_CONFIG: ServiceConfig = {
  port: 8901,
  mode: 'stub',
  stubSeed: 0,
  maxBatch: 256,
};

export function createApp(config: ServiceConfig): Express {
  if (config.mode !== 'stub') {
    throw new Error(
      `mode ${JSON.stringify(config.mode)} is not available in this build; ` +
        'only the deterministic stub mode is implemented',
    );
  }

  const app = express();
  app.use(express.json({ limit: '16mb' }));

  app.get('/v1/health', (_req: Request, res: Response) => {
    res.json({ status: 'ok' });
  });

  app.post('/v1/score', (req: Request, res: Response) => {
    const body = req.body as Record<string, unknown>;
    const discriminator = body?.discriminator;
    if (discriminator !== 'drd' && discriminator !== 'avd') {
      res.status(400).json({
        error: `unknown discriminator ${JSON.stringify(discriminator)}; expected "drd" or "avd"`,
      });
      return;
    }
    const items = body.items;
    if (!Array.isArray(items)) {
      res.status(400).json({ error: '"items" must be an array' });
      return;
    }
    if (items.length > config.maxBatch) {
      res.status(413).json({
        error: `batch of ${items.length} exceeds the limit of ${config.maxBatch}`,
      });
      return;
    }
    let scores: number[];
    try {
      scores = items.map((item, i) =>
        stubScore(
          discriminator as DiscriminatorId,
          checkItem(discriminator as DiscriminatorId, item, i),
          config.stubSeed,
        ),
      );
    } catch (err) {
      res.status(400).json({ error: (err as Error).message });
      return;
    }
    res.json({ scores });
  });

  // express.json() rejections (malformed JSON, oversized body) land here
  app.use((err: Error, _req: Request, res: Response, next: NextFunction) => {
    if (res.headersSent) {
      next(err);
      return;
    }
    const status = (err as { status?: number }).status ?? 400;
    res.status(status === 413 ? 413 : 400).json({ error: err.message });
  });

  return app;
}
