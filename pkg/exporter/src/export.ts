/**
 * The export flow: read the checkpoint, validate all 13 conv layers against
 * the VGG16 architecture, normalize kernel layout to [out,in,kh,kw], write
 * the VGGW file atomically, and report per-layer shapes plus a checksum.
 * Any validation failure aborts before the output file exists.
 */

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

import { VGG16_CONV_LAYERS, kernelShape, totalParameterCount } from "./architecture";
import { ExportManifest } from "./manifest";
import { CheckpointError, TensorEntry, readSafetensors } from "./safetensors";
import { VggwEntry, serializeVggw } from "./vggw";

export class ExportError extends Error {}

export interface ExportResult {
  output: string;
  bytes: number;
  sha256: string;
  parameterCount: number;
}

function shapesEqual(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((d, i) => d === b[i]);
}

/** [kh,kw,in,out] -> [out,in,kh,kw]. */
export function transposeHwioToOihw(t: TensorEntry): { shape: number[]; data: Float32Array } {
  const [kh, kw, ci, co] = t.shape;
  const out = new Float32Array(t.data.length);
  for (let o = 0; o < co; o++) {
    for (let i = 0; i < ci; i++) {
      for (let h = 0; h < kh; h++) {
        for (let w = 0; w < kw; w++) {
          out[((o * ci + i) * kh + h) * kw + w] = t.data[((h * kw + w) * ci + i) * co + o];
        }
      }
    }
  }
  return { shape: [co, ci, kh, kw], data: out };
}

export function exportVggw(manifest: ExportManifest, log: (line: string) => void = console.log): ExportResult {
  let tensors: Map<string, TensorEntry>;
  try {
    tensors = readSafetensors(manifest.input);
  } catch (err) {
    if (err instanceof CheckpointError) throw new ExportError(`${manifest.input}: ${err.message}`);
    throw new ExportError(`${manifest.input}: ${(err as Error).message}`);
  }

  const entries: VggwEntry[] = [];
  let parameterCount = 0;
  for (let i = 0; i < manifest.mapping.length; i++) {
    const { layer, kernelKey, biasKey } = manifest.mapping[i];
    const arch = VGG16_CONV_LAYERS[i];
    const kernelSrc = tensors.get(kernelKey);
    const biasSrc = tensors.get(biasKey);
    if (!kernelSrc || !biasSrc) {
      throw new ExportError(`checkpoint is missing ${!kernelSrc ? kernelKey : biasKey} for ${layer}`);
    }
    const kernel =
      manifest.layout === "HWIO"
        ? transposeHwioToOihw(kernelSrc)
        : { shape: kernelSrc.shape, data: kernelSrc.data };
    if (!shapesEqual(kernel.shape, kernelShape(arch))) {
      throw new ExportError(
        `${layer}: kernel shape [${kernel.shape}] does not match architecture [${kernelShape(arch)}]`,
      );
    }
    if (!shapesEqual(biasSrc.shape, [arch.outChannels])) {
      throw new ExportError(`${layer}: bias shape [${biasSrc.shape}] does not match [${arch.outChannels}]`);
    }
    entries.push({ name: layer, dims: kernel.shape, data: kernel.data });
    entries.push({ name: `${layer}.bias`, dims: biasSrc.shape, data: biasSrc.data });
    parameterCount += kernel.data.length + biasSrc.data.length;
    log(`${layer.padEnd(10)} kernels ${kernel.shape.join("x").padEnd(12)} bias ${biasSrc.data.length}`);
  }
  if (parameterCount !== totalParameterCount()) {
    throw new ExportError(
      `parameter count ${parameterCount} does not match the architecture (${totalParameterCount()})`,
    );
  }

  const payload = serializeVggw(entries);
  const tmp = path.join(
    path.dirname(path.resolve(manifest.output)),
    `.vggw-${process.pid}-${Date.now()}.tmp`,
  );
  fs.writeFileSync(tmp, payload);
  fs.renameSync(tmp, manifest.output);

  const sha256 = createHash("sha256").update(payload).digest("hex");
  log(`total parameters: ${parameterCount}`);
  log(`wrote ${manifest.output} (${payload.length} bytes, sha256 ${sha256})`);
  return { output: manifest.output, bytes: payload.length, sha256, parameterCount };
}
