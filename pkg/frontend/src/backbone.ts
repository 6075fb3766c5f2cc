/**
 * Frozen feature backbone.
 *
 * The exporter treats the backbone as a black box mapping a run of frames
 * to one feature step.  The shipped implementation is a deterministic
 * seeded network: spatial patch pooling (the tap point's H' x W' grid),
 * temporal mean over a stride-long window, then a fixed random projection
 * with tanh.  Its weights come from a seeded PRNG, never change, and make
 * exports bit-reproducible on any machine.  A real pretrained backbone can
 * be swapped in behind the same interface.
 */

import { Frame } from './video.js';

export interface Backbone {
  /** input frames consumed per output feature step */
  temporalStride: number;
  /** output feature dimension after flattening */
  channels: number;
  /** map one window of frames (length == temporalStride) to a feature row */
  encode(window: Frame[]): Float32Array;
}

export interface SeededBackboneOptions {
  seed?: number;
  /** patch grid per side; the tap point's spatial extent (H' == W') */
  patchGrid?: number;
  temporalStride?: number;
  channels?: number;
}

/** mulberry32: tiny deterministic PRNG, uniform in [0, 1) */
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

export class SeededConvBackbone implements Backbone {
  readonly temporalStride: number;
  readonly channels: number;
  readonly patchGrid: number;
  private readonly weights: Float32Array;
  private readonly bias: Float32Array;

  constructor(options: SeededBackboneOptions = {}) {
    this.patchGrid = options.patchGrid ?? 4;
    this.temporalStride = options.temporalStride ?? 8;
    this.channels = options.channels ?? 64;
    const inputDim = 3 * this.patchGrid * this.patchGrid;
    const rand = mulberry32(options.seed ?? 1234);
    // normal-ish weights via the sum of uniforms, scaled for unit fan-in
    const scale = Math.sqrt(3.0 / inputDim);
    this.weights = new Float32Array(this.channels * inputDim);
    for (let i = 0; i < this.weights.length; i++) {
      this.weights[i] = (rand() + rand() + rand() - 1.5) * 2 * scale;
    }
    this.bias = new Float32Array(this.channels);
    for (let i = 0; i < this.channels; i++) {
      this.bias[i] = (rand() - 0.5) * 0.2;
    }
  }

  /** mean RGB per patch, flattened over (channel, row, col) */
  private patchPool(frame: Frame): Float32Array {
    const g = this.patchGrid;
    const { width, height, rgb } = frame;
    const plane = width * height;
    const pooled = new Float32Array(3 * g * g);
    for (let pr = 0; pr < g; pr++) {
      const r0 = Math.floor((pr * height) / g);
      const r1 = Math.floor(((pr + 1) * height) / g);
      for (let pc = 0; pc < g; pc++) {
        const c0 = Math.floor((pc * width) / g);
        const c1 = Math.floor(((pc + 1) * width) / g);
        const count = (r1 - r0) * (c1 - c0);
        for (let ch = 0; ch < 3; ch++) {
          let acc = 0;
          for (let row = r0; row < r1; row++) {
            for (let col = c0; col < c1; col++) {
              acc += rgb[ch * plane + row * width + col];
            }
          }
          pooled[ch * g * g + pr * g + pc] = acc / count;
        }
      }
    }
    return pooled;
  }

  encode(window: Frame[]): Float32Array {
    if (window.length !== this.temporalStride) {
      throw new Error(
        `window of ${window.length} frames, expected ${this.temporalStride}`,
      );
    }
    const inputDim = 3 * this.patchGrid * this.patchGrid;
    const mean = new Float32Array(inputDim);
    for (const frame of window) {
      const pooled = this.patchPool(frame);
      for (let i = 0; i < inputDim; i++) mean[i] += pooled[i];
    }
    for (let i = 0; i < inputDim; i++) mean[i] /= window.length;

    const out = new Float32Array(this.channels);
    for (let o = 0; o < this.channels; o++) {
      let acc = this.bias[o];
      const base = o * inputDim;
      for (let i = 0; i < inputDim; i++) {
        acc += this.weights[base + i] * mean[i];
      }
      out[o] = Math.tanh(acc * 4);
    }
    return out;
  }
}
