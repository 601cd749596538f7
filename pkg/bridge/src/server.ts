/**
 * Oracle wire protocol server.
 *
 *   GET  /meta      -> {"class_count": K, "shape": [H, W, 3], "name": "..."}
 *   POST /classify  <- {"shape": [H, W, 3], "count": N,
 *                       "data_b64": base64 of N*H*W*3 uint8 bytes,
 *                       row-major, RGB-interleaved, images concatenated}
 *                   -> {"probs": [[...K floats...] x N]}
 *
 * Responses preserve request order.  Requests are stateless; the model is
 * shared read-only.  Malformed requests get HTTP 400 with a reason; model
 * failures get HTTP 500.
 */

import express, { Express, Request, Response } from 'express';
import { ServedModel } from './model';

export const MAX_BATCH = 400;

function badRequest(res: Response, reason: string): void {
  res.status(400).json({ error: reason });
}

export function createApp(model: ServedModel): Express {
  const app = express();
  app.use(express.json({ limit: '256mb' }));

  app.get('/meta', (_req: Request, res: Response) => {
    res.json({
      class_count: model.meta.class_count,
      shape: model.meta.shape,
      name: model.meta.name,
    });
  });

  app.post('/classify', (req: Request, res: Response) => {
    const body = req.body;
    if (typeof body !== 'object' || body === null) {
      return badRequest(res, 'body must be a JSON object');
    }
    const { shape, count, data_b64 } = body;
    const expected = model.meta.shape;
    if (!Array.isArray(shape) || shape.length !== 3 ||
        !shape.every((v: unknown, i: number) => v === expected[i])) {
      return badRequest(res, `shape must be ${JSON.stringify(expected)}`);
    }
    if (!Number.isInteger(count) || count < 1 || count > MAX_BATCH) {
      return badRequest(res, `count must be an integer in [1, ${MAX_BATCH}]`);
    }
    if (typeof data_b64 !== 'string') {
      return badRequest(res, 'data_b64 must be a base64 string');
    }
    let pixels: Uint8Array;
    try {
      pixels = new Uint8Array(Buffer.from(data_b64, 'base64'));
    } catch {
      return badRequest(res, 'data_b64 is not valid base64');
    }
    const expectedBytes = count * expected[0] * expected[1] * expected[2];
    if (pixels.length !== expectedBytes) {
      return badRequest(res, `decoded ${pixels.length} bytes, expected ${expectedBytes}`);
    }
    try {
      res.json({ probs: model.predict(pixels, count) });
    } catch (err) {
      res.status(500).json({ error: `inference failed: ${err}` });
    }
  });

  return app;
}
