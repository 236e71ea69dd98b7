/**
 * FMAP v1 container: a dense (height, width, channels) float32 raster.
 *
 * Layout, all little-endian:
 *   bytes 0..3   magic "FMAP"
 *   bytes 4..7   version, uint32 (currently 1)
 *   bytes 8..11  width, uint32
 *   bytes 12..15 height, uint32
 *   bytes 16..19 channels, uint32
 *   bytes 20..   float32 samples in row-major (row, column, channel) order
 */

export const FMAP_MAGIC = 'FMAP';
export const FMAP_VERSION = 1;
export const HEADER_BYTES = 20;

export interface FeatureMap {
  width: number;
  height: number;
  channels: number;
  /** length = width * height * channels, (row, column, channel) order */
  data: Float32Array;
}

function checkDimension(name: string, value: number): void {
  if (!Number.isInteger(value) || value < 1) {
    throw new Error(`${name} must be a positive integer, got ${value}`);
  }
}

export function encodeFeatureMap(map: FeatureMap): Buffer {
  checkDimension('width', map.width);
  checkDimension('height', map.height);
  checkDimension('channels', map.channels);
  const expected = map.width * map.height * map.channels;
  if (map.data.length !== expected) {
    throw new Error(
      `data has ${map.data.length} samples, expected ${expected} for ` +
        `${map.width}x${map.height}x${map.channels}`
    );
  }
  const buffer = Buffer.alloc(HEADER_BYTES + expected * 4);
  buffer.write(FMAP_MAGIC, 0, 'ascii');
  buffer.writeUInt32LE(FMAP_VERSION, 4);
  buffer.writeUInt32LE(map.width, 8);
  buffer.writeUInt32LE(map.height, 12);
  buffer.writeUInt32LE(map.channels, 16);
  for (let i = 0; i < expected; i++) {
    buffer.writeFloatLE(map.data[i], HEADER_BYTES + i * 4);
  }
  return buffer;
}

export function decodeFeatureMap(buffer: Buffer, source = '<bytes>'): FeatureMap {
  if (buffer.length < HEADER_BYTES) {
    throw new Error(
      `${source}: file is ${buffer.length} bytes, shorter than the ${HEADER_BYTES}-byte header`
    );
  }
  const magic = buffer.toString('ascii', 0, 4);
  if (magic !== FMAP_MAGIC) {
    throw new Error(`${source}: bad magic ${JSON.stringify(magic)}, expected "FMAP"`);
  }
  const version = buffer.readUInt32LE(4);
  if (version !== FMAP_VERSION) {
    throw new Error(`${source}: unsupported version ${version}, expected ${FMAP_VERSION}`);
  }
  const width = buffer.readUInt32LE(8);
  const height = buffer.readUInt32LE(12);
  const channels = buffer.readUInt32LE(16);
  if (width < 1 || height < 1 || channels < 1) {
    throw new Error(`${source}: dimensions ${width}x${height}x${channels} must all be >= 1`);
  }
  const count = width * height * channels;
  const expectedBytes = HEADER_BYTES + count * 4;
  if (buffer.length !== expectedBytes) {
    throw new Error(`${source}: file is ${buffer.length} bytes, expected ${expectedBytes}`);
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buffer.readFloatLE(HEADER_BYTES + i * 4);
  }
  return { width, height, channels, data };
}
