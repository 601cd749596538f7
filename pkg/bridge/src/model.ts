/**
 * CNN classifier loaded from a self-contained JSON artifact.
 *
 * The artifact stores the architecture and all weights (base64 float32), so
 * no framework-specific file handlers are needed.  Inference always emits
 * post-softmax probabilities; if the stored head produces logits the softmax
 * is applied here.
 */

import * as fs from 'fs';
import * as tf from '@tensorflow/tfjs';

export interface ConvLayerSpec {
  type: 'conv2d';
  filters: number;
  kernel: number;
  strides: number;
  activation: 'relu';
  kernel_b64: string;
  bias_b64: string;
}

export interface PoolLayerSpec {
  type: 'globalAveragePooling2d';
}

export interface DenseLayerSpec {
  type: 'dense';
  units: number;
  kernel_b64: string;
  bias_b64: string;
}

export type LayerSpec = ConvLayerSpec | PoolLayerSpec | DenseLayerSpec;

export interface ModelArtifact {
  name: string;
  input_shape: [number, number, number];
  class_count: number;
  output: 'logits' | 'probabilities';
  preprocessing: { scale: number };
  layers: LayerSpec[];
}

export interface ModelMeta {
  name: string;
  class_count: number;
  shape: [number, number, number];
}

export function decodeFloats(b64: string): Float32Array {
  const buffer = Buffer.from(b64, 'base64');
  return new Float32Array(buffer.buffer, buffer.byteOffset, buffer.byteLength / 4);
}

export function encodeFloats(values: Float32Array): string {
  return Buffer.from(values.buffer, values.byteOffset, values.byteLength).toString('base64');
}

export class ServedModel {
  readonly artifact: ModelArtifact;
  readonly meta: ModelMeta;
  private readonly weights: Map<number, { kernel: tf.Tensor; bias: tf.Tensor }> = new Map();

  constructor(artifact: ModelArtifact, meta?: Partial<ModelMeta>) {
    this.artifact = artifact;
    this.meta = {
      name: meta?.name ?? artifact.name,
      class_count: meta?.class_count ?? artifact.class_count,
      shape: meta?.shape ?? artifact.input_shape,
    };
    artifact.layers.forEach((layer, index) => {
      if (layer.type === 'conv2d') {
        const inChannels = this.channelsBefore(index);
        this.weights.set(index, {
          kernel: tf.tensor4d(decodeFloats(layer.kernel_b64),
            [layer.kernel, layer.kernel, inChannels, layer.filters]),
          bias: tf.tensor1d(decodeFloats(layer.bias_b64)),
        });
      } else if (layer.type === 'dense') {
        const inUnits = decodeFloats(layer.kernel_b64).length / layer.units;
        this.weights.set(index, {
          kernel: tf.tensor2d(decodeFloats(layer.kernel_b64), [inUnits, layer.units]),
          bias: tf.tensor1d(decodeFloats(layer.bias_b64)),
        });
      }
    });
  }

  private channelsBefore(index: number): number {
    for (let i = index - 1; i >= 0; i--) {
      const layer = this.artifact.layers[i];
      if (layer.type === 'conv2d') return layer.filters;
    }
    return this.artifact.input_shape[2];
  }

  /** Batch of HxWx3 images, values 0..255, flattened row-major. */
  predict(pixels: Uint8Array, count: number): number[][] {
    const [h, w, c] = this.artifact.input_shape;
    const result = tf.tidy(() => {
      let x: tf.Tensor = tf.tensor4d(Array.from(pixels), [count, h, w, c])
        .mul(this.artifact.preprocessing.scale);
      this.artifact.layers.forEach((layer, index) => {
        if (layer.type === 'conv2d') {
          const { kernel, bias } = this.weights.get(index)!;
          x = tf.conv2d(x as tf.Tensor4D, kernel as tf.Tensor4D, layer.strides, 'same');
          x = tf.add(x, bias);
          x = tf.relu(x);
        } else if (layer.type === 'globalAveragePooling2d') {
          x = tf.mean(x as tf.Tensor4D, [1, 2]);
        } else {
          const { kernel, bias } = this.weights.get(index)!;
          x = tf.add(tf.matMul(x as tf.Tensor2D, kernel as tf.Tensor2D), bias);
        }
      });
      if (this.artifact.output === 'logits') {
        x = tf.softmax(x as tf.Tensor2D);
      }
      return x;
    });
    const flat = result.dataSync();
    result.dispose();
    const k = this.meta.class_count;
    const rows: number[][] = [];
    for (let i = 0; i < count; i++) {
      rows.push(Array.from(flat.slice(i * k, (i + 1) * k)));
    }
    return rows;
  }

  /** Startup self-test: a zero image must map to a valid probability vector. */
  selfTest(): void {
    const [h, w, c] = this.artifact.input_shape;
    const probs = this.predict(new Uint8Array(h * w * c), 1)[0];
    const sum = probs.reduce((a, b) => a + b, 0);
    if (probs.length !== this.meta.class_count || Math.abs(sum - 1) > 1e-5 ||
        probs.some((p) => p < 0)) {
      throw new Error(`model self-test failed: invalid probability vector (sum=${sum})`);
    }
  }
}

export function loadModel(modelPath: string, metaPath?: string): ServedModel {
  const artifact = JSON.parse(fs.readFileSync(modelPath, 'utf-8')) as ModelArtifact;
  const meta = metaPath
    ? (JSON.parse(fs.readFileSync(metaPath, 'utf-8')) as Partial<ModelMeta>)
    : undefined;
  return new ServedModel(artifact, meta);
}
