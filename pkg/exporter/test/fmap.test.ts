import { describe, expect, it } from 'vitest';
import { decodeFeatureMap, encodeFeatureMap, FeatureMap, HEADER_BYTES } from '../src/fmap';

function tinyMap(): FeatureMap {
  return {
    width: 2,
    height: 2,
    channels: 1,
    data: new Float32Array([1.5, -2.25, 0.125, 3.0]),
  };
}

describe('encodeFeatureMap', () => {
  it('lays out the 20-byte header plus little-endian float32 samples', () => {
    const buffer = encodeFeatureMap(tinyMap());
    expect(buffer.length).toBe(HEADER_BYTES + 4 * 4);
    expect(buffer.toString('ascii', 0, 4)).toBe('FMAP');
    expect(buffer.readUInt32LE(4)).toBe(1);
    expect(buffer.readUInt32LE(8)).toBe(2);
    expect(buffer.readUInt32LE(12)).toBe(2);
    expect(buffer.readUInt32LE(16)).toBe(1);
    expect(buffer.readFloatLE(20)).toBe(1.5);
    expect(buffer.readFloatLE(24)).toBe(-2.25);
    expect(buffer.readFloatLE(32)).toBe(3.0);
  });

  it('rejects a data length that disagrees with the dimensions', () => {
    const map = tinyMap();
    map.data = new Float32Array(3);
    expect(() => encodeFeatureMap(map)).toThrow(/3 samples, expected 4/);
  });

  it('rejects non-positive dimensions', () => {
    const map = tinyMap();
    map.channels = 0;
    expect(() => encodeFeatureMap(map)).toThrow(/channels/);
  });
});

describe('decodeFeatureMap', () => {
  it('round-trips encode output exactly', () => {
    const original = tinyMap();
    const decoded = decodeFeatureMap(encodeFeatureMap(original));
    expect(decoded.width).toBe(2);
    expect(decoded.height).toBe(2);
    expect(decoded.channels).toBe(1);
    expect(Array.from(decoded.data)).toEqual(Array.from(original.data));
  });

  it('round-trips multi-channel maps byte for byte', () => {
    const data = new Float32Array(3 * 2 * 4);
    for (let i = 0; i < data.length; i++) data[i] = Math.fround(Math.sin(i) * 7);
    const first = encodeFeatureMap({ width: 3, height: 2, channels: 4, data });
    const second = encodeFeatureMap(decodeFeatureMap(first));
    expect(second.equals(first)).toBe(true);
  });

  it('rejects buffers shorter than the header', () => {
    expect(() => decodeFeatureMap(Buffer.alloc(12), 'x.fmap')).toThrow(
      /x\.fmap: file is 12 bytes, shorter than the 20-byte header/
    );
  });

  it('rejects a bad magic', () => {
    const buffer = encodeFeatureMap(tinyMap());
    buffer.write('JUNK', 0, 'ascii');
    expect(() => decodeFeatureMap(buffer)).toThrow(/bad magic/);
  });

  it('rejects an unsupported version', () => {
    const buffer = encodeFeatureMap(tinyMap());
    buffer.writeUInt32LE(9, 4);
    expect(() => decodeFeatureMap(buffer)).toThrow(/unsupported version 9/);
  });

  it('rejects truncated payloads', () => {
    const buffer = encodeFeatureMap(tinyMap());
    expect(() => decodeFeatureMap(buffer.subarray(0, buffer.length - 4))).toThrow(
      /32 bytes, expected 36/
    );
  });

  it('rejects zero dimensions', () => {
    const buffer = encodeFeatureMap(tinyMap());
    buffer.writeUInt32LE(0, 8);
    expect(() => decodeFeatureMap(buffer)).toThrow(/must all be >= 1/);
  });
});
