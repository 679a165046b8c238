/**
 * VGGW writer (and a parser used for verification).
 *
 * Little-endian: magic "VGGW" | u32 version=1 | u32 entry_count | entries of
 * { u32 name_len | UTF-8 name | u8 ndim | ndim x u32 dims | f32 data }.
 * Kernels [out,in,kh,kw] under the layer name, biases under "<layer>.bias";
 * entries in network order, kernel before bias.
 */

import { endianness } from "node:os";

export const MAGIC = "VGGW";
export const VERSION = 1;

export interface VggwEntry {
  name: string;
  dims: number[];
  data: Float32Array;
}

export class VggwFormatError extends Error {}

const HOST_LE = endianness() === "LE";

/** f32 array -> little-endian bytes, independent of host order. */
export function floatsToLeBytes(data: Float32Array): Buffer {
  if (HOST_LE) {
    return Buffer.from(data.buffer.slice(data.byteOffset, data.byteOffset + data.byteLength));
  }
  const out = Buffer.alloc(4 * data.length);
  for (let i = 0; i < data.length; i++) out.writeFloatLE(data[i], 4 * i);
  return out;
}

/** little-endian bytes -> f32 array, independent of host order. */
export function leBytesToFloats(bytes: Buffer): Float32Array {
  const n = bytes.length / 4;
  if (HOST_LE) {
    const copy = new Uint8Array(bytes.length);
    copy.set(bytes);
    return new Float32Array(copy.buffer);
  }
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = bytes.readFloatLE(4 * i);
  return out;
}

export function serializeVggw(entries: VggwEntry[]): Buffer {
  const chunks: Buffer[] = [];
  const head = Buffer.alloc(12);
  head.write(MAGIC, 0, "ascii");
  head.writeUInt32LE(VERSION, 4);
  head.writeUInt32LE(entries.length, 8);
  chunks.push(head);
  for (const entry of entries) {
    const name = Buffer.from(entry.name, "utf-8");
    const count = entry.dims.reduce((a, b) => a * b, 1);
    if (count !== entry.data.length) {
      throw new VggwFormatError(
        `entry ${entry.name}: dims [${entry.dims}] hold ${count} values, data has ${entry.data.length}`,
      );
    }
    const meta = Buffer.alloc(4 + name.length + 1 + 4 * entry.dims.length);
    meta.writeUInt32LE(name.length, 0);
    name.copy(meta, 4);
    meta.writeUInt8(entry.dims.length, 4 + name.length);
    entry.dims.forEach((d, i) => meta.writeUInt32LE(d, 4 + name.length + 1 + 4 * i));
    chunks.push(meta, floatsToLeBytes(entry.data));
  }
  return Buffer.concat(chunks);
}

export function parseVggw(buf: Buffer): VggwEntry[] {
  let pos = 0;
  const take = (n: number): Buffer => {
    if (pos + n > buf.length) {
      throw new VggwFormatError(`file ends at ${buf.length}, needed ${pos + n}`);
    }
    const out = buf.subarray(pos, pos + n);
    pos += n;
    return out;
  };
  if (take(4).toString("ascii") !== MAGIC) {
    throw new VggwFormatError("bad magic");
  }
  const version = take(4).readUInt32LE(0);
  if (version !== VERSION) {
    throw new VggwFormatError(`unsupported version ${version}`);
  }
  const count = take(4).readUInt32LE(0);
  const entries: VggwEntry[] = [];
  for (let e = 0; e < count; e++) {
    const nameLen = take(4).readUInt32LE(0);
    const name = take(nameLen).toString("utf-8");
    const ndim = take(1).readUInt8(0);
    const dims: number[] = [];
    for (let i = 0; i < ndim; i++) dims.push(take(4).readUInt32LE(0));
    const n = dims.reduce((a, b) => a * b, 1);
    entries.push({ name, dims, data: leBytesToFloats(take(4 * n)) });
  }
  if (pos !== buf.length) {
    throw new VggwFormatError(`${buf.length - pos} trailing bytes`);
  }
  return entries;
}
