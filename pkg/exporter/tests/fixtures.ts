/** Synthetic VGG16 checkpoints with deterministic values, for tests. */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { VGG16_CONV_LAYERS } from "../src/architecture";
import { buildSafetensors } from "../src/safetensors";

export function patternData(count: number, salt: number): Float32Array {
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = (((i + salt * 131) % 997) - 498) / 499;
  }
  return data;
}

export function torchvisionCheckpoint(skipLayers: string[] = []): Buffer {
  const indices = [0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28];
  const tensors = new Map<string, { shape: number[]; data: Float32Array }>();
  VGG16_CONV_LAYERS.forEach((layer, i) => {
    if (skipLayers.includes(layer.name)) return;
    const kShape = [layer.outChannels, layer.inChannels, layer.kernel, layer.kernel];
    const kCount = kShape.reduce((a, b) => a * b, 1);
    tensors.set(`features.${indices[i]}.weight`, { shape: kShape, data: patternData(kCount, i) });
    tensors.set(`features.${indices[i]}.bias`, {
      shape: [layer.outChannels],
      data: patternData(layer.outChannels, 1000 + i),
    });
  });
  return buildSafetensors(tensors);
}

export function kerasCheckpoint(): Buffer {
  const tensors = new Map<string, { shape: number[]; data: Float32Array }>();
  VGG16_CONV_LAYERS.forEach((layer, i) => {
    const kShape = [layer.kernel, layer.kernel, layer.inChannels, layer.outChannels];
    const kCount = kShape.reduce((a, b) => a * b, 1);
    tensors.set(`block${layer.name[4]}_conv${layer.name[6]}.kernel`, {
      shape: kShape,
      data: patternData(kCount, i),
    });
    tensors.set(`block${layer.name[4]}_conv${layer.name[6]}.bias`, {
      shape: [layer.outChannels],
      data: patternData(layer.outChannels, 1000 + i),
    });
  });
  return buildSafetensors(tensors);
}

export function tempDir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "vggw-exporter-"));
}
