import { readFileSync } from 'fs';
import { PNG } from 'pngjs';

export interface RgbImage {
  width: number;
  height: number;
  /** length = width * height * 3, row-major, 8-bit RGB */
  rgb: Uint8Array;
}

function decodePng(buffer: Buffer, source: string): RgbImage {
  let png: PNG;
  try {
    png = PNG.sync.read(buffer);
  } catch (e) {
    throw new Error(`${source}: cannot decode PNG: ${(e as Error).message}`);
  }
  const rgb = new Uint8Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    rgb[i * 3] = png.data[i * 4];
    rgb[i * 3 + 1] = png.data[i * 4 + 1];
    rgb[i * 3 + 2] = png.data[i * 4 + 2];
  }
  return { width: png.width, height: png.height, rgb };
}

/** Binary (P6) PPM with 8-bit samples; netpbm whitespace and # comment rules. */
function decodePpm(buffer: Buffer, source: string): RgbImage {
  let pos = 2; // past "P6"
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < buffer.length && /\s/.test(String.fromCharCode(buffer[pos]))) pos++;
    if (pos < buffer.length && buffer[pos] === 0x23) {
      while (pos < buffer.length && buffer[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < buffer.length && /\d/.test(String.fromCharCode(buffer[pos]))) pos++;
    if (pos === start) {
      throw new Error(`${source}: malformed PPM header`);
    }
    fields.push(parseInt(buffer.toString('ascii', start, pos), 10));
  }
  const [width, height, maxval] = fields;
  if (width < 1 || height < 1) {
    throw new Error(`${source}: PPM dimensions ${width}x${height} must be >= 1`);
  }
  if (maxval !== 255) {
    throw new Error(`${source}: only 8-bit PPM supported, got maxval ${maxval}`);
  }
  pos++; // single whitespace byte after maxval
  const expected = width * height * 3;
  if (buffer.length - pos < expected) {
    throw new Error(
      `${source}: PPM payload has ${buffer.length - pos} bytes, expected ${expected}`
    );
  }
  return { width, height, rgb: new Uint8Array(buffer.subarray(pos, pos + expected)) };
}

export function loadImage(path: string): RgbImage {
  const buffer = readFileSync(path);
  if (buffer.length >= 8 && buffer.readUInt32BE(0) === 0x89504e47) {
    return decodePng(buffer, path);
  }
  if (buffer.length >= 2 && buffer.toString('ascii', 0, 2) === 'P6') {
    return decodePpm(buffer, path);
  }
  throw new Error(`${path}: not a PNG or binary PPM image`);
}
