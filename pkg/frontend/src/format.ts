/**
 * Binary feature files and the annotation document consumed by the
 * localization toolkit.
 *
 * Feature file layout (little endian): magic "AFSD", version u16, T u32,
 * C u32, fps f32, then T*C float32 values in row-major order.  One file per
 * (video, stream) named `<video>.<stream>.feat` under `<root>/features/`.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

export const FEATURE_MAGIC = 'AFSD';
export const FEATURE_VERSION = 1;
const HEADER_BYTES = 18;

export interface FeatureMatrix {
  steps: number;
  channels: number;
  /** row-major [steps * channels] */
  values: Float32Array;
}

export function encodeFeatures(matrix: FeatureMatrix, fps: number): Buffer {
  const { steps, channels, values } = matrix;
  if (values.length !== steps * channels) {
    throw new Error(`feature payload ${values.length} != ${steps}x${channels}`);
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * values.length);
  buf.write(FEATURE_MAGIC, 0, 'ascii');
  buf.writeUInt16LE(FEATURE_VERSION, 4);
  buf.writeUInt32LE(steps, 6);
  buf.writeUInt32LE(channels, 10);
  buf.writeFloatLE(fps, 14);
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], HEADER_BYTES + 4 * i);
  }
  return buf;
}

export function decodeFeatures(buf: Buffer): { matrix: FeatureMatrix; fps: number } {
  if (buf.subarray(0, 4).toString('ascii') !== FEATURE_MAGIC) {
    throw new Error('not a feature file (bad magic)');
  }
  const version = buf.readUInt16LE(4);
  if (version !== FEATURE_VERSION) {
    throw new Error(`unsupported feature version ${version}`);
  }
  const steps = buf.readUInt32LE(6);
  const channels = buf.readUInt32LE(10);
  const fps = buf.readFloatLE(14);
  const expected = HEADER_BYTES + 4 * steps * channels;
  if (buf.length !== expected) {
    throw new Error(`truncated payload (${buf.length} != ${expected})`);
  }
  const values = new Float32Array(steps * channels);
  for (let i = 0; i < values.length; i++) {
    values[i] = buf.readFloatLE(HEADER_BYTES + 4 * i);
  }
  return { matrix: { steps, channels, values }, fps };
}

export function writeFeatureFile(
  root: string,
  videoId: string,
  stream: string,
  matrix: FeatureMatrix,
  fps: number,
): string {
  const dir = path.join(root, 'features');
  fs.mkdirSync(dir, { recursive: true });
  const file = path.join(dir, `${videoId}.${stream}.feat`);
  fs.writeFileSync(file, encodeFeatures(matrix, fps));
  return file;
}

export interface InstanceRecord {
  /** frames at the document's fps */
  start: number;
  end: number;
  label: string;
}

export interface VideoMeta {
  duration_frames: number;
  fps: number;
  instances: InstanceRecord[];
}

export interface AnnotationDoc {
  labels: string[];
  videos: Record<string, VideoMeta>;
  splits?: Record<string, string[]>;
}

/** Stable-key JSON so reruns are byte-identical. */
function stableStringify(value: unknown, indent: string, level: number): string {
  if (value === null || typeof value !== 'object') {
    return JSON.stringify(value);
  }
  const pad = indent.repeat(level + 1);
  const close = indent.repeat(level);
  if (Array.isArray(value)) {
    if (value.length === 0) return '[]';
    const items = value.map((v) => pad + stableStringify(v, indent, level + 1));
    return '[\n' + items.join(',\n') + '\n' + close + ']';
  }
  const keys = Object.keys(value as Record<string, unknown>).sort();
  if (keys.length === 0) return '{}';
  const items = keys.map(
    (k) =>
      `${pad}${JSON.stringify(k)}: ` +
      stableStringify((value as Record<string, unknown>)[k], indent, level + 1),
  );
  return '{\n' + items.join(',\n') + '\n' + close + '}';
}

export function writeAnnotationDoc(root: string, doc: AnnotationDoc): string {
  fs.mkdirSync(root, { recursive: true });
  const file = path.join(root, 'annotations.json');
  fs.writeFileSync(file, stableStringify(doc, '  ', 0) + '\n');
  return file;
}
