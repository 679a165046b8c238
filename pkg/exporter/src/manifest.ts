/**
 * Export manifests: which checkpoint tensors feed which conv layers, and how
 * kernels are laid out in the source.
 *
 * Naming presets:
 *   torchvision  features.<idx>.weight / .bias, kernels already [out,in,kh,kw]
 *   keras        block<b>_conv<i>.kernel / .bias, kernels [kh,kw,in,out]
 *   plain        conv<b>_<i> / conv<b>_<i>.bias, kernels [out,in,kh,kw]
 */

import { VGG16_CONV_LAYERS } from "./architecture";

export type KernelLayout = "OIHW" | "HWIO";

export interface LayerMapping {
  layer: string; // conv1_1 .. conv5_3
  kernelKey: string;
  biasKey: string;
}

export interface ExportManifest {
  input: string;
  output: string;
  naming: string;
  layout: KernelLayout;
  mapping: LayerMapping[]; // exactly the 13 conv layers, network order
}

// torchvision's nn.Sequential indices for the conv modules of vgg16.features.
const TORCHVISION_INDICES = [0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28];

function mappingFor(naming: string): { layout: KernelLayout; mapping: LayerMapping[] } {
  switch (naming) {
    case "torchvision":
      return {
        layout: "OIHW",
        mapping: VGG16_CONV_LAYERS.map((l, i) => ({
          layer: l.name,
          kernelKey: `features.${TORCHVISION_INDICES[i]}.weight`,
          biasKey: `features.${TORCHVISION_INDICES[i]}.bias`,
        })),
      };
    case "keras":
      return {
        layout: "HWIO",
        mapping: VGG16_CONV_LAYERS.map((l) => {
          const [block, idx] = l.name.replace("conv", "").split("_");
          return {
            layer: l.name,
            kernelKey: `block${block}_conv${idx}.kernel`,
            biasKey: `block${block}_conv${idx}.bias`,
          };
        }),
      };
    case "plain":
      return {
        layout: "OIHW",
        mapping: VGG16_CONV_LAYERS.map((l) => ({
          layer: l.name,
          kernelKey: l.name,
          biasKey: `${l.name}.bias`,
        })),
      };
    default:
      throw new Error(`unknown naming preset '${naming}' (torchvision | keras | plain)`);
  }
}

export function makeManifest(input: string, output: string, naming = "torchvision"): ExportManifest {
  const { layout, mapping } = mappingFor(naming);
  return { input, output, naming, layout, mapping };
}
