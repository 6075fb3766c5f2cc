import { describe, expect, it } from 'vitest';

import { decodeFeatures, encodeFeatures, writeAnnotationDoc } from '../src/format.js';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

function randomMatrix(steps: number, channels: number, seed = 7) {
  const values = new Float32Array(steps * channels);
  let state = seed;
  for (let i = 0; i < values.length; i++) {
    state = (state * 1103515245 + 12345) % 2147483648;
    values[i] = state / 2147483648 - 0.5;
  }
  return { steps, channels, values };
}

describe('feature file encoding', () => {
  it('round trips through decode', () => {
    const matrix = randomMatrix(17, 5);
    const buf = encodeFeatures(matrix, 10.0);
    const { matrix: out, fps } = decodeFeatures(buf);
    expect(fps).toBe(10.0);
    expect(out.steps).toBe(17);
    expect(out.channels).toBe(5);
    expect([...out.values]).toEqual([...matrix.values]);
  });

  it('writes the documented header layout', () => {
    const buf = encodeFeatures(randomMatrix(3, 2), 12.5);
    expect(buf.subarray(0, 4).toString('ascii')).toBe('AFSD');
    expect(buf.readUInt16LE(4)).toBe(1);
    expect(buf.readUInt32LE(6)).toBe(3);
    expect(buf.readUInt32LE(10)).toBe(2);
    expect(buf.readFloatLE(14)).toBe(12.5);
    expect(buf.length).toBe(18 + 4 * 6);
  });

  it('re-encoding a decoded file is byte identical', () => {
    const buf = encodeFeatures(randomMatrix(9, 4), 10.0);
    const { matrix, fps } = decodeFeatures(buf);
    expect(encodeFeatures(matrix, fps).equals(buf)).toBe(true);
  });

  it('rejects bad magic and truncation', () => {
    const buf = encodeFeatures(randomMatrix(4, 2), 10.0);
    const bad = Buffer.from(buf);
    bad.write('NOPE', 0, 'ascii');
    expect(() => decodeFeatures(bad)).toThrow(/magic/);
    expect(() => decodeFeatures(buf.subarray(0, buf.length - 4))).toThrow(/truncated/);
  });
});

describe('annotation document', () => {
  it('writes stable sorted JSON', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'doc-'));
    const doc = {
      labels: ['b', 'a'],
      videos: {
        v2: { duration_frames: 100, fps: 10, instances: [] },
        v1: {
          duration_frames: 50,
          fps: 10,
          instances: [{ start: 5, end: 20, label: 'a' }],
        },
      },
    };
    const fileA = writeAnnotationDoc(dir, doc);
    const first = fs.readFileSync(fileA, 'utf-8');
    writeAnnotationDoc(dir, doc);
    expect(fs.readFileSync(fileA, 'utf-8')).toBe(first);
    const parsed = JSON.parse(first);
    expect(parsed.videos.v1.instances[0].label).toBe('a');
    expect(first.indexOf('"v1"')).toBeLessThan(first.indexOf('"v2"'));
  });
});
