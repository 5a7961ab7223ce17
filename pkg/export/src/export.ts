import * as fs from 'fs'
import * as path from 'path'
import { loadBackbone } from './backbone'
import { decodeImage, isImageFile, RawImage } from './image'
import { ClassEntry, writeDataset } from './format'

export type ExportSpec = {
  /** Directory-per-class image root. */
  images: string
  /** Backbone identifier, see backbone.ts. */
  backbone: string
  /** Images decoded and embedded per batch. */
  batchSize?: number
  /** Accepted for interface compatibility; the built-in backbones are CPU-only. */
  device?: string
  /** Called once per skipped (undecodable) image. */
  onWarning?: (message: string) => void
}

/**
 * Export every image under a directory-per-class root as one embedding
 * record, writing a dataset directory (manifest, embeddings, labels, ids).
 *
 * Class ids follow the lexicographic order of the class directory names.
 * Undecodable images are skipped with a warning and excluded from all
 * counts; a class with no decodable image is an error.
 */
export function exportDataset(spec: ExportSpec, out: string) {
  let warn = spec.onWarning ?? (message => console.warn(`warning: ${message}`))
  let batchSize = spec.batchSize ?? 64
  if (batchSize < 1) {
    throw new Error(`batch size must be >= 1, got ${batchSize}`)
  }
  if (!fs.existsSync(spec.images) || !fs.statSync(spec.images).isDirectory()) {
    throw new Error(`image root is not a directory: ${spec.images}`)
  }
  let classDirs = fs
    .readdirSync(spec.images)
    .filter(name => fs.statSync(path.join(spec.images, name)).isDirectory())
    .sort()
  if (classDirs.length === 0) {
    throw new Error(`no class directories under ${spec.images}`)
  }

  let backbone = loadBackbone(spec.backbone)
  let vectors: Float32Array[] = []
  let labels: number[] = []
  let ids: string[] = []
  let classes: ClassEntry[] = []

  let pendingImages: RawImage[] = []
  let pendingMeta: { label: number; id: string }[] = []
  let flush = () => {
    if (pendingImages.length === 0) return
    for (let vector of backbone.embedBatch(pendingImages)) {
      vectors.push(vector)
    }
    for (let meta of pendingMeta) {
      labels.push(meta.label)
      ids.push(meta.id)
    }
    pendingImages = []
    pendingMeta = []
  }

  for (let classId = 0; classId < classDirs.length; classId++) {
    let className = classDirs[classId]
    let classPath = path.join(spec.images, className)
    let count = 0
    for (let file of fs.readdirSync(classPath).sort()) {
      let filePath = path.join(classPath, file)
      if (!fs.statSync(filePath).isFile()) continue
      if (!isImageFile(file)) {
        warn(`skipping non-image file ${className}/${file}`)
        continue
      }
      let image: RawImage
      try {
        image = decodeImage(filePath)
      } catch (error) {
        warn(`skipping undecodable image ${className}/${file}: ${error}`)
        continue
      }
      pendingImages.push(image)
      pendingMeta.push({ label: classId, id: `${className}/${file}` })
      count++
      if (pendingImages.length >= batchSize) flush()
    }
    if (count === 0) {
      throw new Error(`class "${className}" has no decodable image`)
    }
    classes.push({ id: classId, name: className, count })
  }
  flush()

  writeDataset({ out, dim: backbone.dim, vectors, labels, classes, ids })
  return { numRecords: vectors.length, dim: backbone.dim, classes }
}
