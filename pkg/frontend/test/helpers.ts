/** Deterministic fixture builders shared by the tests. */

import { Frame } from '../src/video.js';

/** Tiny C420 YUV4MPEG2 clip with a moving bright square. */
export function makeY4m(options: {
  width?: number;
  height?: number;
  frames?: number;
  fpsNum?: number;
  fpsDen?: number;
}): Buffer {
  const width = options.width ?? 32;
  const height = options.height ?? 32;
  const count = options.frames ?? 96;
  const fpsNum = options.fpsNum ?? 10;
  const fpsDen = options.fpsDen ?? 1;
  const header = Buffer.from(
    `YUV4MPEG2 W${width} H${height} F${fpsNum}:${fpsDen} Ip A1:1 C420jpeg\n`,
    'ascii',
  );
  const ySize = width * height;
  const cSize = (width / 2) * (height / 2);
  const chunks: Buffer[] = [header];
  for (let t = 0; t < count; t++) {
    chunks.push(Buffer.from('FRAME\n', 'ascii'));
    const y = Buffer.alloc(ySize, 64);
    const cx = (t * 3) % (width - 8);
    for (let row = 8; row < 16; row++) {
      for (let col = cx; col < cx + 8; col++) {
        y[row * width + col] = 220;
      }
    }
    const u = Buffer.alloc(cSize, 128);
    const v = Buffer.alloc(cSize, 110 + (t % 40));
    chunks.push(y, u, v);
  }
  return Buffer.concat(chunks);
}

export function makePpm(width: number, height: number, fill: number): Buffer {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, 'ascii');
  const body = Buffer.alloc(3 * width * height, fill);
  return Buffer.concat([header, body]);
}

export function constantFrame(size: number, value: number): Frame {
  return {
    width: size,
    height: size,
    rgb: new Float32Array(3 * size * size).fill(value),
  };
}
