/**
 * Wire conformance tests against the committed conformance vector set.
 *
 * The same vectors (../../conformance/oracle_vectors.json) are also run
 * against the in-process oracle on the Python side; the checks here are the
 * server half of that shared contract: simplex-valid probabilities,
 * response order matching request order, repeat-call determinism, and the
 * batch-of-400 round-trip budget.
 */

import * as fs from 'fs';
import * as path from 'path';
import { fileURLToPath } from 'url';
import { Server } from 'http';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { loadModel, ServedModel } from '../src/model';
import { createApp, MAX_BATCH } from '../src/server';

const here = path.dirname(fileURLToPath(import.meta.url));
const VECTORS = JSON.parse(
  fs.readFileSync(path.resolve(here, '..', '..', 'conformance', 'oracle_vectors.json'), 'utf-8'),
);
const MODEL_PATH = path.resolve(here, '..', 'models', 'small_cnn.json');
const META_PATH = path.resolve(here, '..', 'models', 'small_cnn.meta.json');

let model: ServedModel;
let server: Server;
let base: string;

beforeAll(async () => {
  model = loadModel(MODEL_PATH, META_PATH);
  model.selfTest();
  const app = createApp(model);
  await new Promise<void>((resolve) => {
    server = app.listen(0, resolve);
  });
  const address = server.address();
  if (typeof address === 'object' && address) {
    base = `http://127.0.0.1:${address.port}`;
  }
});

afterAll(() => {
  server?.close();
});

function vectorImages(): Uint8Array {
  return new Uint8Array(Buffer.from(VECTORS.images_b64, 'base64'));
}

async function classify(images: Uint8Array, count: number) {
  const response = await fetch(`${base}/classify`, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify({
      shape: VECTORS.shape,
      count,
      data_b64: Buffer.from(images).toString('base64'),
    }),
  });
  return response;
}

function expectSimplex(probs: number[][], count: number) {
  expect(probs).toHaveLength(count);
  for (const row of probs) {
    expect(row).toHaveLength(model.meta.class_count);
    let sum = 0;
    for (const p of row) {
      expect(p).toBeGreaterThanOrEqual(0);
      sum += p;
    }
    expect(Math.abs(sum - 1)).toBeLessThanOrEqual(VECTORS.checks.prob_sum_tol);
  }
}

describe('meta endpoint', () => {
  it('echoes the served model descriptor', async () => {
    const response = await fetch(`${base}/meta`);
    expect(response.status).toBe(200);
    const meta = await response.json();
    expect(meta).toEqual({ class_count: 10, shape: [32, 32, 3], name: 'small-cnn-v1' });
  });
});

describe('conformance vectors', () => {
  it('zero image maps to a valid probability simplex', async () => {
    const [h, w, c] = VECTORS.shape;
    const response = await classify(new Uint8Array(h * w * c), 1);
    expect(response.status).toBe(200);
    expectSimplex((await response.json()).probs, 1);
  });

  it('all vectors produce simplex-valid probabilities', async () => {
    const response = await classify(vectorImages(), VECTORS.count);
    expect(response.status).toBe(200);
    expectSimplex((await response.json()).probs, VECTORS.count);
  });

  it('response order matches request order', async () => {
    const images = vectorImages();
    const [h, w, c] = VECTORS.shape;
    const stride = h * w * c;
    const reversed = new Uint8Array(images.length);
    for (let i = 0; i < VECTORS.count; i++) {
      reversed.set(
        images.subarray(i * stride, (i + 1) * stride),
        (VECTORS.count - 1 - i) * stride,
      );
    }
    const forward = (await (await classify(images, VECTORS.count)).json()).probs;
    const backward = (await (await classify(reversed, VECTORS.count)).json()).probs;
    for (let i = 0; i < VECTORS.count; i++) {
      for (let k = 0; k < model.meta.class_count; k++) {
        expect(Math.abs(forward[i][k] - backward[VECTORS.count - 1 - i][k]))
          .toBeLessThanOrEqual(VECTORS.checks.repeat_tol);
      }
    }
  });

  it('repeated batches are elementwise equal within tolerance', async () => {
    const first = (await (await classify(vectorImages(), VECTORS.count)).json()).probs;
    const second = (await (await classify(vectorImages(), VECTORS.count)).json()).probs;
    for (let i = 0; i < VECTORS.count; i++) {
      for (let k = 0; k < model.meta.class_count; k++) {
        expect(Math.abs(first[i][k] - second[i][k]))
          .toBeLessThanOrEqual(VECTORS.checks.repeat_tol);
      }
    }
  });

  it('a batch of 400 round-trips within the budget', async () => {
    const [h, w, c] = VECTORS.shape;
    const stride = h * w * c;
    const images = vectorImages();
    const batch = new Uint8Array(MAX_BATCH * stride);
    for (let i = 0; i < MAX_BATCH; i++) {
      const src = images.subarray((i % VECTORS.count) * stride, ((i % VECTORS.count) + 1) * stride);
      batch.set(src, i * stride);
    }
    const start = Date.now();
    const response = await classify(batch, MAX_BATCH);
    const elapsed = (Date.now() - start) / 1000;
    expect(response.status).toBe(200);
    expectSimplex((await response.json()).probs, MAX_BATCH);
    expect(elapsed).toBeLessThan(10);
  }, 30000);
});

describe('request validation', () => {
  it('rejects a wrong shape', async () => {
    const response = await fetch(`${base}/classify`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ shape: [16, 16, 3], count: 1, data_b64: '' }),
    });
    expect(response.status).toBe(400);
    expect((await response.json()).error).toMatch(/shape/);
  });

  it('rejects an oversized batch', async () => {
    const [h, w, c] = VECTORS.shape;
    const response = await fetch(`${base}/classify`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ shape: [h, w, c], count: MAX_BATCH + 1, data_b64: '' }),
    });
    expect(response.status).toBe(400);
  });

  it('rejects a byte-count mismatch', async () => {
    const response = await classify(new Uint8Array(17), 1);
    expect(response.status).toBe(400);
    expect((await response.json()).error).toMatch(/bytes/);
  });

  it('rejects missing fields', async () => {
    const response = await fetch(`${base}/classify`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({}),
    });
    expect(response.status).toBe(400);
  });
});
