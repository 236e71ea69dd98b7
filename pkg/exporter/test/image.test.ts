import { mkdtempSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import { join } from 'path';
import { PNG } from 'pngjs';
import { beforeAll, describe, expect, it } from 'vitest';
import { loadImage } from '../src/image';

let dir: string;

function writePng(name: string, width: number, height: number): string {
  const png = new PNG({ width, height });
  for (let i = 0; i < width * height; i++) {
    png.data[i * 4] = (i * 7) % 256;
    png.data[i * 4 + 1] = (i * 13) % 256;
    png.data[i * 4 + 2] = (i * 29) % 256;
    png.data[i * 4 + 3] = i % 2 === 0 ? 255 : 40;
  }
  const path = join(dir, name);
  writeFileSync(path, PNG.sync.write(png));
  return path;
}

function writePpm(name: string, header: string, payload: Buffer): string {
  const path = join(dir, name);
  writeFileSync(path, Buffer.concat([Buffer.from(header, 'ascii'), payload]));
  return path;
}

beforeAll(() => {
  dir = mkdtempSync(join(tmpdir(), 'exporter-image-'));
});

describe('loadImage with PNG input', () => {
  it('decodes pixels row-major and drops the alpha channel', () => {
    const image = loadImage(writePng('small.png', 3, 2));
    expect(image.width).toBe(3);
    expect(image.height).toBe(2);
    expect(image.rgb.length).toBe(3 * 2 * 3);
    expect(image.rgb[0]).toBe(0);
    expect(image.rgb[1]).toBe(0);
    expect(image.rgb[2]).toBe(0);
    expect(image.rgb[3]).toBe(7);
    expect(image.rgb[4]).toBe(13);
    expect(image.rgb[5]).toBe(29);
    expect(image.rgb[15]).toBe(35);
  });

  it('reports undecodable PNG bytes with the file name', () => {
    const path = join(dir, 'broken.png');
    writeFileSync(path, Buffer.concat([Buffer.from([0x89, 0x50, 0x4e, 0x47]), Buffer.alloc(16)]));
    expect(() => loadImage(path)).toThrow(/broken\.png: cannot decode PNG/);
  });
});

describe('loadImage with PPM input', () => {
  it('parses a P6 header with comments and whitespace', () => {
    const payload = Buffer.from([10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120]);
    const path = writePpm('plain.ppm', 'P6\n# a comment\n2 2\n# another\n255\n', payload);
    const image = loadImage(path);
    expect(image.width).toBe(2);
    expect(image.height).toBe(2);
    expect(Array.from(image.rgb)).toEqual(Array.from(payload));
  });

  it('rejects a maxval other than 255', () => {
    const path = writePpm('deep.ppm', 'P6\n1 1\n65535\n', Buffer.alloc(6));
    expect(() => loadImage(path)).toThrow(/only 8-bit PPM supported, got maxval 65535/);
  });

  it('rejects a truncated payload', () => {
    const path = writePpm('short.ppm', 'P6\n2 2\n255\n', Buffer.alloc(5));
    expect(() => loadImage(path)).toThrow(/PPM payload has 5 bytes, expected 12/);
  });

  it('rejects a header that never yields three numbers', () => {
    const path = writePpm('bad.ppm', 'P6\nabc\n', Buffer.alloc(0));
    expect(() => loadImage(path)).toThrow(/malformed PPM header/);
  });
});

describe('loadImage with unknown input', () => {
  it('rejects bytes that are neither PNG nor P6', () => {
    const path = join(dir, 'mystery.bin');
    writeFileSync(path, Buffer.from('GIF89a....', 'ascii'));
    expect(() => loadImage(path)).toThrow(/mystery\.bin: not a PNG or binary PPM image/);
  });
});
