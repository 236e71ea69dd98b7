import { readFileSync } from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';
import { RgbImage } from './image';

export const DEFAULT_MODEL_ID = 'default';
const DEFAULT_MODEL_DIR = path.join(__dirname, '..', 'default-model');

export interface PixelScorer {
  name: string;
  classCount: number;
  /** Per-pixel class scores, (row, column, channel) order, softmax outputs. */
  score(image: RgbImage): Float32Array;
}

interface ModelJson {
  format?: string;
  generatedBy?: string;
  convertedBy?: string | null;
  modelTopology: {};
  weightsManifest: Array<{ paths: string[]; weights: tf.io.WeightsManifestEntry[] }>;
}

/** Reads a model.json plus its weight shards from the local filesystem. */
function fileSystemHandler(modelJsonPath: string): tf.io.IOHandler {
  return {
    load: async () => {
      const raw = readFileSync(modelJsonPath, 'utf8');
      const spec = JSON.parse(raw) as ModelJson;
      if (!spec.modelTopology || !spec.weightsManifest) {
        throw new Error(`${modelJsonPath}: not a tfjs model.json`);
      }
      const dir = path.dirname(modelJsonPath);
      const weightSpecs: tf.io.WeightsManifestEntry[] = [];
      const shards: Buffer[] = [];
      for (const group of spec.weightsManifest) {
        weightSpecs.push(...group.weights);
        for (const shard of group.paths) {
          shards.push(readFileSync(path.join(dir, shard)));
        }
      }
      const weights = Buffer.concat(shards);
      return {
        modelTopology: spec.modelTopology,
        format: spec.format,
        generatedBy: spec.generatedBy,
        convertedBy: spec.convertedBy ?? undefined,
        weightSpecs,
        weightData: weights.buffer.slice(
          weights.byteOffset,
          weights.byteOffset + weights.byteLength
        ),
      };
    },
  };
}

function resolveModelJson(modelId: string): string {
  if (modelId === DEFAULT_MODEL_ID) {
    return path.join(DEFAULT_MODEL_DIR, 'model.json');
  }
  if (modelId.endsWith('model.json')) {
    return modelId;
  }
  return path.join(modelId, 'model.json');
}

export async function loadScorer(modelId: string): Promise<PixelScorer> {
  await tf.setBackend('cpu');
  const modelJsonPath = resolveModelJson(modelId);
  let spec: ModelJson;
  try {
    spec = JSON.parse(readFileSync(modelJsonPath, 'utf8')) as ModelJson;
  } catch (e) {
    throw new Error(`cannot load model '${modelId}': ${(e as Error).message}`);
  }
  const handler = fileSystemHandler(modelJsonPath);
  let model: tf.LayersModel | tf.GraphModel;
  try {
    model =
      spec.format === 'graph-model'
        ? await tf.loadGraphModel(handler)
        : await tf.loadLayersModel(handler);
  } catch (e) {
    throw new Error(`cannot load model '${modelId}': ${(e as Error).message}`);
  }

  const classCount = probeClassCount(model);
  return {
    name: modelId,
    classCount,
    score(image: RgbImage): Float32Array {
      const out = tf.tidy(() => {
        const pixels = new Float32Array(image.rgb.length);
        for (let i = 0; i < image.rgb.length; i++) {
          pixels[i] = image.rgb[i] / 255;
        }
        const input = tf.tensor4d(pixels, [1, image.height, image.width, 3]);
        let scores = (model.predict(input) as tf.Tensor).squeeze([0]) as tf.Tensor3D;
        if (scores.shape[0] !== image.height || scores.shape[1] !== image.width) {
          scores = tf.image.resizeBilinear(scores, [image.height, image.width]);
        }
        return scores;
      });
      const data = out.dataSync() as Float32Array;
      out.dispose();
      return data;
    },
  };
}

function probeClassCount(model: tf.LayersModel | tf.GraphModel): number {
  const probe = tf.tidy(() => {
    const input = tf.zeros([1, 8, 8, 3]);
    const out = model.predict(input) as tf.Tensor;
    return out.shape[out.shape.length - 1] as number;
  });
  if (!Number.isInteger(probe) || probe < 1) {
    throw new Error(`model produced an invalid class count ${probe}`);
  }
  return probe;
}
