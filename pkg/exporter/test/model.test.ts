import { describe, expect, it } from 'vitest';
import { RgbImage } from '../src/image';
import { loadScorer } from '../src/model';

function uniformImage(width: number, height: number, value: number): RgbImage {
  return { width, height, rgb: new Uint8Array(width * height * 3).fill(value) };
}

function patternImage(width: number, height: number): RgbImage {
  const rgb = new Uint8Array(width * height * 3);
  for (let i = 0; i < rgb.length; i++) rgb[i] = (i * 37 + 11) % 256;
  return { width, height, rgb };
}

describe('loadScorer with the bundled default model', () => {
  it('reports six classes', async () => {
    const scorer = await loadScorer('default');
    expect(scorer.name).toBe('default');
    expect(scorer.classCount).toBe(6);
  });

  it('produces per-pixel softmax scores that sum to one', async () => {
    const scorer = await loadScorer('default');
    const image = patternImage(5, 4);
    const scores = scorer.score(image);
    expect(scores.length).toBe(5 * 4 * 6);
    for (let pixel = 0; pixel < 20; pixel++) {
      let total = 0;
      for (let c = 0; c < 6; c++) total += scores[pixel * 6 + c];
      expect(total).toBeCloseTo(1.0, 5);
    }
  });

  it('is deterministic across independent loads', async () => {
    const image = patternImage(7, 3);
    const first = (await loadScorer('default')).score(image);
    const second = (await loadScorer('default')).score(image);
    expect(Buffer.from(second.buffer).equals(Buffer.from(first.buffer))).toBe(true);
  });

  it('assigns a uniform image one dominant class on at least 90% of pixels', async () => {
    const scorer = await loadScorer('default');
    const image = uniformImage(6, 6, 128);
    const scores = scorer.score(image);
    const winners: number[] = [];
    for (let pixel = 0; pixel < 36; pixel++) {
      let best = 0;
      for (let c = 1; c < 6; c++) {
        if (scores[pixel * 6 + c] > scores[pixel * 6 + best]) best = c;
      }
      winners.push(best);
    }
    const counts = new Map<number, number>();
    for (const w of winners) counts.set(w, (counts.get(w) ?? 0) + 1);
    const dominant = Math.max(...counts.values());
    expect(dominant / winners.length).toBeGreaterThanOrEqual(0.9);
  });

  it('scales scoring to image size, one score vector per pixel', async () => {
    const scorer = await loadScorer('default');
    expect(scorer.score(uniformImage(2, 3, 10)).length).toBe(2 * 3 * 6);
    expect(scorer.score(uniformImage(9, 1, 10)).length).toBe(9 * 1 * 6);
  });
});

describe('loadScorer with a bad model id', () => {
  it('wraps the underlying failure with the model id', async () => {
    await expect(loadScorer('/definitely/not/there')).rejects.toThrow(
      /cannot load model '\/definitely\/not\/there'/
    );
  });
});
