/**
 * Regenerate models/small_cnn.json: a small CNN with seeded weights.
 *
 * The bridge's conformance contract is about the wire protocol (simplex
 * outputs, ordering, determinism), so the committed model only needs to be
 * a real CNN with fixed weights, not a trained one.
 */

import * as fs from 'fs';
import * as path from 'path';
import { encodeFloats, ModelArtifact } from './model';

/** mulberry32: tiny deterministic PRNG, good enough for weight init. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function heWeights(rand: () => number, count: number, fanIn: number): Float32Array {
  const scale = Math.sqrt(2 / fanIn);
  const values = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    // Box-Muller from two uniforms
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    values[i] = Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v) * scale;
  }
  return values;
}

function main(): void {
  const rand = mulberry32(20240811);
  const artifact: ModelArtifact = {
    name: 'small-cnn-v1',
    input_shape: [32, 32, 3],
    class_count: 10,
    output: 'logits',
    preprocessing: { scale: 1 / 255 },
    layers: [
      {
        type: 'conv2d', filters: 8, kernel: 3, strides: 2, activation: 'relu',
        kernel_b64: encodeFloats(heWeights(rand, 3 * 3 * 3 * 8, 3 * 3 * 3)),
        bias_b64: encodeFloats(heWeights(rand, 8, 8)),
      },
      {
        type: 'conv2d', filters: 16, kernel: 3, strides: 2, activation: 'relu',
        kernel_b64: encodeFloats(heWeights(rand, 3 * 3 * 8 * 16, 3 * 3 * 8)),
        bias_b64: encodeFloats(heWeights(rand, 16, 16)),
      },
      { type: 'globalAveragePooling2d' },
      {
        type: 'dense', units: 10,
        kernel_b64: encodeFloats(heWeights(rand, 16 * 10, 16)),
        bias_b64: encodeFloats(heWeights(rand, 10, 10)),
      },
    ],
  };
  const modelsDir = path.resolve(__dirname, '..', 'models');
  fs.mkdirSync(modelsDir, { recursive: true });
  fs.writeFileSync(path.join(modelsDir, 'small_cnn.json'), JSON.stringify(artifact, null, 1));
  fs.writeFileSync(
    path.join(modelsDir, 'small_cnn.meta.json'),
    JSON.stringify({ name: 'small-cnn-v1', class_count: 10, shape: [32, 32, 3] }, null, 1),
  );
  console.log(`wrote ${path.join(modelsDir, 'small_cnn.json')}`);
}

main();
