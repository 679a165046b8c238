/**
 * The 13-conv VGG16 feature stack: five blocks of (2,2,3,3,3) conv layers at
 * widths (64,128,256,512,512), all 3x3 kernels. Fully-connected layers are
 * never exported.
 */

export interface ConvLayer {
  name: string; // conv<block>_<index>
  inChannels: number;
  outChannels: number;
  kernel: number;
}

const BLOCKS: Array<[depth: number, width: number]> = [
  [2, 64],
  [2, 128],
  [3, 256],
  [3, 512],
  [3, 512],
];

export const VGG16_CONV_LAYERS: ConvLayer[] = (() => {
  const layers: ConvLayer[] = [];
  let channels = 3;
  BLOCKS.forEach(([depth, width], blockIdx) => {
    for (let i = 1; i <= depth; i++) {
      layers.push({
        name: `conv${blockIdx + 1}_${i}`,
        inChannels: channels,
        outChannels: width,
        kernel: 3,
      });
      channels = width;
    }
  });
  return layers;
})();

/** Kernel + bias parameter count over all 13 conv layers (= 14,714,688). */
export function totalParameterCount(): number {
  return VGG16_CONV_LAYERS.reduce(
    (sum, l) => sum + l.outChannels * l.inChannels * l.kernel * l.kernel + l.outChannels,
    0,
  );
}

export function kernelShape(layer: ConvLayer): number[] {
  return [layer.outChannels, layer.inChannels, layer.kernel, layer.kernel];
}
