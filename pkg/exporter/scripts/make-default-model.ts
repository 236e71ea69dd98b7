/**
 * Builds the bundled per-pixel scorer and writes it to default-model/ as a
 * standard tfjs layers model (model.json + weights.bin).
 *
 * Two 1x1 convolutions (8 tanh units, then 6 softmax classes) applied at
 * every pixel. Weights come from a fixed-seed PRNG so the artifact is
 * reproducible; no downloads are involved.
 */
import { writeFileSync, mkdirSync } from 'fs';
import * as path from 'path';
import * as tf from '@tensorflow/tfjs';

const OUT_DIR = path.join(__dirname, '..', 'default-model');
const SEED = 0x5eed;
const HIDDEN = 8;
const CLASSES = 6;

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

async function main(): Promise<void> {
  await tf.setBackend('cpu');
  const model = tf.sequential({
    layers: [
      tf.layers.conv2d({
        inputShape: [null, null, 3],
        filters: HIDDEN,
        kernelSize: 1,
        activation: 'tanh',
        name: 'pixel_mix',
      }),
      tf.layers.conv2d({
        filters: CLASSES,
        kernelSize: 1,
        activation: 'softmax',
        name: 'class_scores',
      }),
    ],
  });

  const rand = mulberry32(SEED);
  const seeded = model.getWeights().map(w => {
    const values = new Float32Array(w.size);
    for (let i = 0; i < w.size; i++) {
      values[i] = (rand() * 2 - 1) * 1.5;
    }
    return tf.tensor(values, w.shape);
  });
  model.setWeights(seeded);

  await model.save(
    tf.io.withSaveHandler(async artifacts => {
      mkdirSync(OUT_DIR, { recursive: true });
      const weightData = artifacts.weightData as ArrayBuffer;
      writeFileSync(path.join(OUT_DIR, 'weights.bin'), Buffer.from(weightData));
      const modelJson = {
        format: 'layers-model',
        generatedBy: 'semantic-feature-exporter make-default-model',
        convertedBy: null,
        modelTopology: artifacts.modelTopology,
        weightsManifest: [
          { paths: ['weights.bin'], weights: artifacts.weightSpecs },
        ],
      };
      writeFileSync(
        path.join(OUT_DIR, 'model.json'),
        JSON.stringify(modelJson, null, 2) + '\n'
      );
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(0),
          modelTopologyType: 'JSON',
        },
      };
    })
  );
  console.log(`wrote ${OUT_DIR} (hidden ${HIDDEN}, classes ${CLASSES}, seed ${SEED})`);
}

main().catch(e => {
  console.error(e);
  process.exitCode = 1;
});
