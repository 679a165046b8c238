/**
 * Minimal safetensors reader/writer: u64 LE header length, JSON header
 * mapping tensor name -> { dtype, shape, data_offsets }, then raw data.
 * Only F32 tensors are accepted; checkpoints are expected to be float32.
 */

import * as fs from "node:fs";

import { floatsToLeBytes, leBytesToFloats } from "./vggw";

export interface TensorEntry {
  dtype: string;
  shape: number[];
  data: Float32Array;
}

export class CheckpointError extends Error {}

interface HeaderEntry {
  dtype: string;
  shape: number[];
  data_offsets: [number, number];
}

export function parseSafetensors(buf: Buffer): Map<string, TensorEntry> {
  if (buf.length < 8) {
    throw new CheckpointError(`file too short (${buf.length} bytes) for a safetensors header`);
  }
  const headerLen = Number(buf.readBigUInt64LE(0));
  if (8 + headerLen > buf.length) {
    throw new CheckpointError(`header claims ${headerLen} bytes but file has ${buf.length - 8}`);
  }
  let header: Record<string, HeaderEntry>;
  try {
    header = JSON.parse(buf.subarray(8, 8 + headerLen).toString("utf-8"));
  } catch (err) {
    throw new CheckpointError(`unparseable safetensors header: ${err}`);
  }
  const dataStart = 8 + headerLen;
  const tensors = new Map<string, TensorEntry>();
  for (const [name, entry] of Object.entries(header)) {
    if (name === "__metadata__") continue;
    const { dtype, shape, data_offsets: offsets } = entry;
    if (dtype !== "F32") {
      throw new CheckpointError(`tensor ${name}: dtype ${dtype} not supported (F32 only)`);
    }
    const count = shape.reduce((a, b) => a * b, 1);
    const [start, end] = offsets;
    if (end - start !== count * 4 || dataStart + end > buf.length) {
      throw new CheckpointError(`tensor ${name}: bad data offsets [${start}, ${end}]`);
    }
    // Copy out so alignment is guaranteed regardless of the header length.
    const bytes = buf.subarray(dataStart + start, dataStart + end);
    tensors.set(name, { dtype, shape, data: leBytesToFloats(bytes) });
  }
  return tensors;
}

export function readSafetensors(path: string): Map<string, TensorEntry> {
  return parseSafetensors(fs.readFileSync(path));
}

/** Serialize tensors (test fixtures use this to fabricate checkpoints). */
export function buildSafetensors(tensors: Map<string, { shape: number[]; data: Float32Array }>): Buffer {
  const header: Record<string, HeaderEntry> = {};
  let offset = 0;
  const chunks: Buffer[] = [];
  for (const [name, t] of tensors) {
    const bytes = floatsToLeBytes(t.data);
    header[name] = { dtype: "F32", shape: t.shape, data_offsets: [offset, offset + bytes.length] };
    chunks.push(bytes);
    offset += bytes.length;
  }
  const headerBuf = Buffer.from(JSON.stringify(header), "utf-8");
  const lenBuf = Buffer.alloc(8);
  lenBuf.writeBigUInt64LE(BigInt(headerBuf.length));
  return Buffer.concat([lenBuf, headerBuf, ...chunks]);
}
