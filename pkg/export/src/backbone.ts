import { RawImage, resizeToRgb } from './image'

/**
 * A feature extractor mapping decoded images to fixed-dimension vectors.
 * Embeddings are emitted raw (not l2-normalized); the consuming toolkit
 * normalizes where its algorithms require it.
 */
export type Backbone = {
  name: string
  dim: number
  embedBatch: (images: RawImage[]) => Float32Array[]
}

function patchBackbone(name: string, size: number): Backbone {
  return {
    name,
    dim: size * size * 3,
    embedBatch: images => images.map(image => resizeToRgb(image, size)),
  }
}

/**
 * Built-in deterministic backbones. These are analytic image-statistics
 * extractors, not pretrained networks: the sandbox this tool targets has
 * no model weights available for download, and the dataset format is
 * agnostic to where the vectors came from.
 *
 *   patch8   8x8 RGB patch means, dim 192
 *   patch16  16x16 RGB patch means, dim 768
 */
export const BACKBONES: Record<string, () => Backbone> = {
  patch8: () => patchBackbone('patch8', 8),
  patch16: () => patchBackbone('patch16', 16),
}

export function loadBackbone(name: string): Backbone {
  let factory = BACKBONES[name]
  if (!factory) {
    throw new Error(
      `unknown backbone "${name}" (available: ${Object.keys(BACKBONES).join(', ')})`,
    )
  }
  return factory()
}
