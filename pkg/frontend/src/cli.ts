/** Command line: export feature files + annotations from raw videos. */

import { parseArgs } from 'node:util';

import { SeededConvBackbone } from './backbone.js';
import { ExportJob, loadNativeDoc, runExport, videoIdFromPath } from './exporter.js';

const HELP = `usage: export --out-dir DIR [options] VIDEO...

Videos are .y4m files or directories of .ppm frames (convert compressed
containers first: ffmpeg -i IN OUT.y4m).

options:
  --out-dir DIR        dataset directory to write (required)
  --annotations FILE   native annotation JSON ({"database": {...}})
  --stream NAME        rgb | flow                       [rgb]
  --fps N              sampling frame rate              [10]
  --size N             spatial size before the backbone [96]
  --stride N           backbone temporal stride         [8]
  --channels N         backbone output channels         [64]
  --grid N             backbone patch grid per side     [4]
  --seed N             backbone weight seed             [1234]
  --frames-fps N       frame rate of .ppm directories   [fps]
`;

export function main(argv: string[]): number {
  const { values, positionals } = parseArgs({
    args: argv,
    allowPositionals: true,
    options: {
      'out-dir': { type: 'string' },
      annotations: { type: 'string' },
      stream: { type: 'string', default: 'rgb' },
      fps: { type: 'string', default: '10' },
      size: { type: 'string', default: '96' },
      stride: { type: 'string', default: '8' },
      channels: { type: 'string', default: '64' },
      grid: { type: 'string', default: '4' },
      seed: { type: 'string', default: '1234' },
      'frames-fps': { type: 'string' },
      help: { type: 'boolean', default: false },
    },
  });
  if (values.help || positionals.length === 0 || !values['out-dir']) {
    process.stderr.write(HELP);
    return values.help ? 0 : 1;
  }
  if (values.stream !== 'rgb' && values.stream !== 'flow') {
    process.stderr.write(`unknown stream ${values.stream}\n`);
    return 1;
  }
  const backbone = new SeededConvBackbone({
    seed: parseInt(values.seed!, 10),
    patchGrid: parseInt(values.grid!, 10),
    temporalStride: parseInt(values.stride!, 10),
    channels: parseInt(values.channels!, 10),
  });
  const videos: Record<string, string> = {};
  for (const input of positionals) {
    videos[videoIdFromPath(input)] = input;
  }
  const job: ExportJob = {
    videos,
    outDir: values['out-dir']!,
    stream: values.stream,
    targetFps: parseFloat(values.fps!),
    spatialSize: parseInt(values.size!, 10),
    backbone,
    framesDirFps: values['frames-fps']
      ? parseFloat(values['frames-fps'])
      : undefined,
  };
  const native = values.annotations ? loadNativeDoc(values.annotations) : undefined;
  const result = runExport(job, native);
  for (const v of result.exported) {
    process.stdout.write(
      `${v.id}: ${v.steps} x ${v.channels} (${v.durationFrames} frames) -> ${v.file}\n`,
    );
  }
  if (result.annotationFile) {
    process.stdout.write(`annotations -> ${result.annotationFile}\n`);
  }
  if (result.skipped.length > 0) {
    process.stdout.write(`skipped ${result.skipped.length} unreadable input(s)\n`);
  }
  return result.exported.length > 0 ? 0 : 1;
}

if (process.argv[1] && process.argv[1].endsWith('cli.js')) {
  process.exit(main(process.argv.slice(2)));
}
