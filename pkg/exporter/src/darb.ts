/**
 * The binary embedding-blob format consumed by the primary toolkit:
 * 4 ASCII bytes "DARB", u32 LE version (1), u64 LE rows, u64 LE cols,
 * then rows*cols float32 LE in row-major order.
 */

import { readFileSync, writeFileSync } from 'node:fs';

export const DARB_MAGIC = 'DARB';
export const DARB_VERSION = 1;
export const HEADER_BYTES = 24;

export function encodeDarb(rows: Float32Array[], cols: number): Buffer {
  const buf = Buffer.alloc(HEADER_BYTES + rows.length * cols * 4);
  buf.write(DARB_MAGIC, 0, 'ascii');
  buf.writeUInt32LE(DARB_VERSION, 4);
  buf.writeBigUInt64LE(BigInt(rows.length), 8);
  buf.writeBigUInt64LE(BigInt(cols), 16);
  let offset = HEADER_BYTES;
  for (const row of rows) {
    if (row.length !== cols) {
      throw new Error(`row has ${row.length} values, expected ${cols}`);
    }
    for (const value of row) {
      if (!Number.isFinite(value)) {
        throw new Error('non-finite value in embedding row');
      }
      buf.writeFloatLE(value, offset);
      offset += 4;
    }
  }
  return buf;
}

export function writeDarb(path: string, rows: Float32Array[], cols: number): void {
  writeFileSync(path, encodeDarb(rows, cols));
}

export function readDarb(path: string): { rows: number; cols: number; data: Float32Array } {
  const buf = readFileSync(path);
  if (buf.length < HEADER_BYTES) {
    throw new Error(`${path}: truncated header (${buf.length} bytes)`);
  }
  if (buf.toString('ascii', 0, 4) !== DARB_MAGIC) {
    throw new Error(`${path}: bad magic`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== DARB_VERSION) {
    throw new Error(`${path}: unsupported version ${version}`);
  }
  const rows = Number(buf.readBigUInt64LE(8));
  const cols = Number(buf.readBigUInt64LE(16));
  const expected = HEADER_BYTES + rows * cols * 4;
  if (buf.length !== expected) {
    throw new Error(`${path}: truncated payload (${buf.length} bytes, header promises ${expected})`);
  }
  const data = new Float32Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(HEADER_BYTES + i * 4);
  }
  return { rows, cols, data };
}
