/**
 * Raw-video ingestion.
 *
 * Two uncompressed inputs are supported so the exporter stays free of
 * native decoders:
 *   - YUV4MPEG2 (`.y4m`) files, the standard uncompressed container
 *     (`ffmpeg -i clip.mp4 clip.y4m` converts anything common);
 *   - directories of binary PPM (`P6`) frames in lexical order, one image
 *     per frame, with the frame rate supplied by the caller.
 *
 * Frames are decoded to planar RGB floats in [0, 1].
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

export interface Frame {
  width: number;
  height: number;
  /** planar RGB: [3 * width * height], channel-major */
  rgb: Float32Array;
}

export interface VideoClip {
  frames: Frame[];
  fps: number;
}

function yuvToRgb(y: number, u: number, v: number): [number, number, number] {
  // BT.601 full-swing conversion
  const c = y - 16;
  const d = u - 128;
  const e = v - 128;
  const r = (298 * c + 409 * e + 128) >> 8;
  const g = (298 * c - 100 * d - 208 * e + 128) >> 8;
  const b = (298 * c + 516 * d + 128) >> 8;
  const clamp = (x: number) => Math.min(255, Math.max(0, x)) / 255;
  return [clamp(r), clamp(g), clamp(b)];
}

export function parseY4m(buf: Buffer): VideoClip {
  const headerEnd = buf.indexOf(0x0a);
  if (headerEnd < 0) throw new Error('missing YUV4MPEG2 header');
  const header = buf.subarray(0, headerEnd).toString('ascii');
  if (!header.startsWith('YUV4MPEG2')) {
    throw new Error('not a YUV4MPEG2 stream');
  }
  let width = 0;
  let height = 0;
  let fpsNum = 0;
  let fpsDen = 1;
  let chroma = '420';
  for (const token of header.split(' ').slice(1)) {
    const tag = token[0];
    const rest = token.slice(1);
    if (tag === 'W') width = parseInt(rest, 10);
    else if (tag === 'H') height = parseInt(rest, 10);
    else if (tag === 'F') {
      const [n, d] = rest.split(':');
      fpsNum = parseInt(n, 10);
      fpsDen = parseInt(d, 10);
    } else if (tag === 'C') chroma = rest;
  }
  if (!width || !height || !fpsNum) {
    throw new Error(`incomplete YUV4MPEG2 header: ${header}`);
  }
  const is444 = chroma.startsWith('444');
  if (!is444 && !chroma.startsWith('420')) {
    throw new Error(`unsupported chroma subsampling C${chroma}`);
  }
  const ySize = width * height;
  const cSize = is444 ? ySize : (width / 2) * (height / 2);
  const frameBytes = ySize + 2 * cSize;

  const frames: Frame[] = [];
  let offset = headerEnd + 1;
  while (offset < buf.length) {
    const lineEnd = buf.indexOf(0x0a, offset);
    if (lineEnd < 0) break;
    const marker = buf.subarray(offset, lineEnd).toString('ascii');
    if (!marker.startsWith('FRAME')) {
      throw new Error(`expected FRAME marker, got ${marker.slice(0, 16)}`);
    }
    offset = lineEnd + 1;
    if (offset + frameBytes > buf.length) {
      throw new Error('truncated frame payload');
    }
    const yPlane = buf.subarray(offset, offset + ySize);
    const uPlane = buf.subarray(offset + ySize, offset + ySize + cSize);
    const vPlane = buf.subarray(offset + ySize + cSize, offset + frameBytes);
    offset += frameBytes;

    const rgb = new Float32Array(3 * ySize);
    for (let row = 0; row < height; row++) {
      for (let col = 0; col < width; col++) {
        const yi = row * width + col;
        const ci = is444 ? yi : (row >> 1) * (width >> 1) + (col >> 1);
        const [r, g, b] = yuvToRgb(yPlane[yi], uPlane[ci], vPlane[ci]);
        rgb[yi] = r;
        rgb[ySize + yi] = g;
        rgb[2 * ySize + yi] = b;
      }
    }
    frames.push({ width, height, rgb });
  }
  return { frames, fps: fpsNum / fpsDen };
}

export function parsePpm(buf: Buffer): Frame {
  const tokens: string[] = [];
  let pos = 0;
  while (tokens.length < 4) {
    while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++;
    if (buf[pos] === 0x23) {
      // comment line
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    tokens.push(buf.subarray(start, pos).toString('ascii'));
  }
  pos++; // single whitespace after maxval
  const [magic, w, h, maxval] = tokens;
  if (magic !== 'P6') throw new Error(`unsupported PPM magic ${magic}`);
  const width = parseInt(w, 10);
  const height = parseInt(h, 10);
  const scale = parseInt(maxval, 10);
  const pixels = width * height;
  if (buf.length < pos + 3 * pixels) throw new Error('truncated PPM payload');
  const rgb = new Float32Array(3 * pixels);
  for (let i = 0; i < pixels; i++) {
    rgb[i] = buf[pos + 3 * i] / scale;
    rgb[pixels + i] = buf[pos + 3 * i + 1] / scale;
    rgb[2 * pixels + i] = buf[pos + 3 * i + 2] / scale;
  }
  return { width, height, rgb };
}

export function readFramesDirectory(dir: string, fps: number): VideoClip {
  const names = fs
    .readdirSync(dir)
    .filter((n) => n.endsWith('.ppm'))
    .sort();
  if (names.length === 0) throw new Error(`no .ppm frames in ${dir}`);
  const frames = names.map((n) => parsePpm(fs.readFileSync(path.join(dir, n))));
  return { frames, fps };
}

export function readVideo(input: string, framesFps: number): VideoClip {
  const stat = fs.statSync(input);
  if (stat.isDirectory()) {
    return readFramesDirectory(input, framesFps);
  }
  if (input.endsWith('.y4m')) {
    return parseY4m(fs.readFileSync(input));
  }
  throw new Error(
    `unsupported video input ${input}: use .y4m or a directory of .ppm frames ` +
      '(convert compressed containers with: ffmpeg -i IN OUT.y4m)',
  );
}

/** Nearest-index resample to the target frame rate. */
export function resampleFps(clip: VideoClip, targetFps: number): VideoClip {
  if (Math.abs(clip.fps - targetFps) < 1e-9) return clip;
  const duration = clip.frames.length / clip.fps;
  const count = Math.floor(duration * targetFps);
  const frames: Frame[] = [];
  for (let i = 0; i < count; i++) {
    const src = Math.min(
      clip.frames.length - 1,
      Math.floor((i * clip.fps) / targetFps),
    );
    frames.push(clip.frames[src]);
  }
  return { frames, fps: targetFps };
}

/** Bilinear resize of a planar RGB frame. */
export function resizeFrame(frame: Frame, size: number): Frame {
  if (frame.width === size && frame.height === size) return frame;
  const { width, height, rgb } = frame;
  const out = new Float32Array(3 * size * size);
  const plane = width * height;
  for (let row = 0; row < size; row++) {
    const sy = ((row + 0.5) * height) / size - 0.5;
    const y0 = Math.max(0, Math.floor(sy));
    const y1 = Math.min(height - 1, y0 + 1);
    const wy = Math.min(1, Math.max(0, sy - y0));
    for (let col = 0; col < size; col++) {
      const sx = ((col + 0.5) * width) / size - 0.5;
      const x0 = Math.max(0, Math.floor(sx));
      const x1 = Math.min(width - 1, x0 + 1);
      const wx = Math.min(1, Math.max(0, sx - x0));
      for (let c = 0; c < 3; c++) {
        const base = c * plane;
        const top = rgb[base + y0 * width + x0] * (1 - wx) + rgb[base + y0 * width + x1] * wx;
        const bottom = rgb[base + y1 * width + x0] * (1 - wx) + rgb[base + y1 * width + x1] * wx;
        out[c * size * size + row * size + col] = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return { width: size, height: size, rgb: out };
}
