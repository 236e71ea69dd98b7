import { writeFileSync, mkdirSync } from 'fs';
import * as path from 'path';
import { encodeFeatureMap } from './fmap';
import { loadImage } from './image';
import { loadScorer, PixelScorer } from './model';

export interface ExportJob {
  imagePaths: string[];
  outDir: string;
  modelId: string;
}

export interface FileFailure {
  path: string;
  reason: string;
}

export interface ExportReport {
  written: string[];
  failures: FileFailure[];
  classCount: number;
}

export function exportOne(scorer: PixelScorer, imagePath: string, outDir: string): string {
  const image = loadImage(imagePath);
  const scores = scorer.score(image);
  const buffer = encodeFeatureMap({
    width: image.width,
    height: image.height,
    channels: scorer.classCount,
    data: scores,
  });
  const stem = path.basename(imagePath).replace(/\.[^.]+$/, '');
  const outPath = path.join(outDir, `${stem}.fmap`);
  writeFileSync(outPath, buffer);
  return outPath;
}

export async function runExport(job: ExportJob): Promise<ExportReport> {
  if (job.imagePaths.length === 0) {
    throw new Error('no input images given');
  }
  const scorer = await loadScorer(job.modelId);
  mkdirSync(job.outDir, { recursive: true });
  const written: string[] = [];
  const failures: FileFailure[] = [];
  for (const imagePath of job.imagePaths) {
    try {
      written.push(exportOne(scorer, imagePath, job.outDir));
    } catch (e) {
      failures.push({ path: imagePath, reason: (e as Error).message });
    }
  }
  return { written, failures, classCount: scorer.classCount };
}
