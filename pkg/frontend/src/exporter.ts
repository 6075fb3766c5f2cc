/**
 * Export jobs: raw videos -> feature files + annotation document.
 *
 * The annotation input is the common JSON shape used by action datasets:
 * a `database` of videos with `duration` seconds, a `subset` name and
 * `annotations` carrying `[start, end]` second segments plus a string
 * label.  Output documents store frames at the export frame rate; the
 * written duration is trimmed to the frames the backbone actually
 * consumed, so feature steps always divide it evenly.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { Backbone, SeededConvBackbone } from './backbone.js';
import {
  AnnotationDoc,
  FeatureMatrix,
  InstanceRecord,
  writeAnnotationDoc,
  writeFeatureFile,
} from './format.js';
import { readVideo, resampleFps, resizeFrame } from './video.js';

export interface ExportJob {
  /** video id -> input path (.y4m file or .ppm frames directory) */
  videos: Record<string, string>;
  outDir: string;
  stream: 'rgb' | 'flow';
  /** sampling rate for feature extraction */
  targetFps: number;
  /** square spatial size frames are resized to before the backbone */
  spatialSize: number;
  backbone?: Backbone;
  /** frame rate assumed for .ppm frame directories */
  framesDirFps?: number;
}

export interface NativeVideoEntry {
  duration: number;
  subset?: string;
  annotations: { segment: [number, number]; label: string }[];
}

export interface NativeAnnotationDoc {
  database: Record<string, NativeVideoEntry>;
}

export interface ExportedVideo {
  id: string;
  steps: number;
  channels: number;
  durationFrames: number;
  file: string;
}

export interface ExportResult {
  exported: ExportedVideo[];
  skipped: { id: string; reason: string }[];
  annotationFile?: string;
}

const SPLIT_NAMES: Record<string, string> = {
  training: 'train',
  validation: 'val',
  testing: 'test',
};

export function extractFeatures(
  job: ExportJob,
  videoPath: string,
): { matrix: FeatureMatrix; durationFrames: number } {
  const backbone = job.backbone ?? new SeededConvBackbone();
  let clip = readVideo(videoPath, job.framesDirFps ?? job.targetFps);
  clip = resampleFps(clip, job.targetFps);
  const stride = backbone.temporalStride;
  const steps = Math.floor(clip.frames.length / stride);
  if (steps < 1) {
    throw new Error(
      `video too short: ${clip.frames.length} frames at ${job.targetFps} fps ` +
        `for temporal stride ${stride}`,
    );
  }
  const values = new Float32Array(steps * backbone.channels);
  for (let t = 0; t < steps; t++) {
    const window = clip.frames
      .slice(t * stride, (t + 1) * stride)
      .map((f) => resizeFrame(f, job.spatialSize));
    values.set(backbone.encode(window), t * backbone.channels);
  }
  return {
    matrix: { steps, channels: backbone.channels, values },
    durationFrames: steps * stride,
  };
}

export function convertAnnotations(
  native: NativeAnnotationDoc,
  exported: ExportedVideo[],
  targetFps: number,
): AnnotationDoc {
  const labels = new Set<string>();
  for (const entry of Object.values(native.database)) {
    for (const a of entry.annotations) labels.add(a.label);
  }
  const vocabulary = [...labels].sort();

  const videos: Record<string, { duration_frames: number; fps: number; instances: InstanceRecord[] }> = {};
  const splits: Record<string, string[]> = {};
  for (const video of exported) {
    const entry = native.database[video.id];
    if (!entry) continue;
    const instances: InstanceRecord[] = [];
    for (const a of entry.annotations) {
      const start = Math.max(0, a.segment[0] * targetFps);
      const end = Math.min(video.durationFrames, a.segment[1] * targetFps);
      if (end - start >= 1) {
        instances.push({ start, end, label: a.label });
      }
    }
    videos[video.id] = {
      duration_frames: video.durationFrames,
      fps: targetFps,
      instances,
    };
    const subset = entry.subset ?? 'train';
    const split = SPLIT_NAMES[subset] ?? subset;
    (splits[split] ??= []).push(video.id);
  }
  for (const ids of Object.values(splits)) ids.sort();
  return { labels: vocabulary, videos, splits };
}

export function runExport(job: ExportJob, native?: NativeAnnotationDoc): ExportResult {
  const result: ExportResult = { exported: [], skipped: [] };
  const ids = Object.keys(job.videos).sort();
  for (const id of ids) {
    const input = job.videos[id];
    try {
      const { matrix, durationFrames } = extractFeatures(job, input);
      const file = writeFeatureFile(job.outDir, id, job.stream, matrix, job.targetFps);
      result.exported.push({
        id,
        steps: matrix.steps,
        channels: matrix.channels,
        durationFrames,
        file,
      });
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      console.error(`skipping ${id}: ${reason}`);
      result.skipped.push({ id, reason });
    }
  }
  if (native) {
    const doc = convertAnnotations(native, result.exported, job.targetFps);
    result.annotationFile = writeAnnotationDoc(job.outDir, doc);
  }
  return result;
}

export function loadNativeDoc(file: string): NativeAnnotationDoc {
  const doc = JSON.parse(fs.readFileSync(file, 'utf-8')) as NativeAnnotationDoc;
  if (!doc.database || typeof doc.database !== 'object') {
    throw new Error(`${file}: expected a top-level "database" table`);
  }
  for (const [id, entry] of Object.entries(doc.database)) {
    if (typeof entry.duration !== 'number' || !Array.isArray(entry.annotations)) {
      throw new Error(`${file}: malformed entry for ${id}`);
    }
  }
  return doc;
}

export function videoIdFromPath(input: string): string {
  const base = path.basename(input);
  return base.endsWith('.y4m') ? base.slice(0, -4) : base;
}
