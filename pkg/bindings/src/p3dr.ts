/**
 * P3DR raster interchange: magic `P3DR`, uint32 height, uint32 width,
 * uint32 channels (little-endian), then height*width*channels float32
 * values in row-major order.
 *
 * Rasters cross the boundary as a contiguous Float32Array plus a
 * (height, width, channels) descriptor. Decoding is zero-copy when the
 * payload is 4-byte aligned inside the source buffer and the platform is
 * little-endian; otherwise exactly one copy is made.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const P3DR_MAGIC = "P3DR";
const HEADER_BYTES = 16;

export interface Raster {
  readonly height: number;
  readonly width: number;
  readonly channels: number;
  /** Row-major [height][width][channels] values, length = h*w*c. */
  readonly data: Float32Array;
}

const LITTLE_ENDIAN: boolean = (() => {
  const probe = new Uint8Array(new Uint32Array([1]).buffer);
  return probe[0] === 1;
})();

export function decodeRaster(buf: Buffer): Raster {
  if (buf.byteLength < HEADER_BYTES || buf.toString("latin1", 0, 4) !== P3DR_MAGIC) {
    throw new Error("not a P3DR raster");
  }
  const height = buf.readUInt32LE(4);
  const width = buf.readUInt32LE(8);
  const channels = buf.readUInt32LE(12);
  const count = height * width * channels;
  if (buf.byteLength !== HEADER_BYTES + count * 4) {
    throw new Error(
      `truncated P3DR raster: expected ${HEADER_BYTES + count * 4} bytes, got ${buf.byteLength}`
    );
  }
  const payloadOffset = buf.byteOffset + HEADER_BYTES;
  let data: Float32Array;
  if (LITTLE_ENDIAN && payloadOffset % 4 === 0) {
    data = new Float32Array(buf.buffer, payloadOffset, count);
  } else {
    data = new Float32Array(count);
    const view = new DataView(buf.buffer, payloadOffset, count * 4);
    for (let i = 0; i < count; i++) {
      data[i] = view.getFloat32(i * 4, true);
    }
  }
  return { height, width, channels, data };
}

export function encodeRaster(raster: Raster): Buffer {
  const { height, width, channels, data } = raster;
  if (data.length !== height * width * channels) {
    throw new Error(
      `raster data length ${data.length} does not match ${height}x${width}x${channels}`
    );
  }
  const out = Buffer.alloc(HEADER_BYTES + data.length * 4);
  out.write(P3DR_MAGIC, 0, "latin1");
  out.writeUInt32LE(height, 4);
  out.writeUInt32LE(width, 8);
  out.writeUInt32LE(channels, 12);
  if (LITTLE_ENDIAN) {
    out.set(new Uint8Array(data.buffer, data.byteOffset, data.byteLength), HEADER_BYTES);
  } else {
    for (let i = 0; i < data.length; i++) {
      out.writeFloatLE(data[i], HEADER_BYTES + i * 4);
    }
  }
  return out;
}

export function readRaster(path: string): Raster {
  return decodeRaster(readFileSync(path));
}

export function writeRaster(path: string, raster: Raster): void {
  writeFileSync(path, encodeRaster(raster));
}

/** Value at (row, col, channel) without materializing anything. */
export function rasterAt(raster: Raster, row: number, col: number, channel = 0): number {
  return raster.data[(row * raster.width + col) * raster.channels + channel];
}
