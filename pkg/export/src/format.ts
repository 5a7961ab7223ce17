import * as fs from 'fs'
import * as path from 'path'

/** Class table entry of the labeled-embedding dataset format. */
export type ClassEntry = {
  id: number
  name: string
  count: number
}

export type DatasetManifest = {
  format_version: 1
  dim: number
  num_records: number
  dtype: 'f32le'
  classes: ClassEntry[]
}

/**
 * Write a dataset directory:
 *   manifest.json   header with the class table
 *   embeddings.bin  num_records x dim float32 little-endian, row-major
 *   labels.bin      num_records uint32 little-endian
 *   ids.txt         one source identifier per record
 */
export function writeDataset(options: {
  out: string
  dim: number
  vectors: Float32Array[]
  labels: number[]
  classes: ClassEntry[]
  ids: string[]
}) {
  let { out, dim, vectors, labels, classes, ids } = options
  if (vectors.length !== labels.length || labels.length !== ids.length) {
    throw new Error(
      `inconsistent record count: ${vectors.length} vectors, ${labels.length} labels, ${ids.length} ids`,
    )
  }
  fs.mkdirSync(out, { recursive: true })

  let embeddings = Buffer.alloc(vectors.length * dim * 4)
  for (let row = 0; row < vectors.length; row++) {
    let v = vectors[row]
    if (v.length !== dim) {
      throw new Error(`record ${row} has dim ${v.length}, expected ${dim}`)
    }
    for (let j = 0; j < dim; j++) {
      embeddings.writeFloatLE(v[j], (row * dim + j) * 4)
    }
  }
  let labelBuf = Buffer.alloc(labels.length * 4)
  for (let row = 0; row < labels.length; row++) {
    labelBuf.writeUInt32LE(labels[row], row * 4)
  }

  let manifest: DatasetManifest = {
    format_version: 1,
    dim,
    num_records: vectors.length,
    dtype: 'f32le',
    classes: [...classes].sort((a, b) => a.id - b.id),
  }
  fs.writeFileSync(path.join(out, 'manifest.json'), JSON.stringify(manifest, null, 1) + '\n')
  fs.writeFileSync(path.join(out, 'embeddings.bin'), embeddings)
  fs.writeFileSync(path.join(out, 'labels.bin'), labelBuf)
  fs.writeFileSync(path.join(out, 'ids.txt'), ids.map(line => line + '\n').join(''))
}

/** Read a dataset directory back (used by the tests for round-trip checks). */
export function readDataset(dir: string) {
  let manifest: DatasetManifest = JSON.parse(
    fs.readFileSync(path.join(dir, 'manifest.json'), 'utf-8'),
  )
  let embeddings = fs.readFileSync(path.join(dir, 'embeddings.bin'))
  let labelBuf = fs.readFileSync(path.join(dir, 'labels.bin'))
  let expectEmb = manifest.num_records * manifest.dim * 4
  if (embeddings.length !== expectEmb) {
    throw new Error(`embeddings.bin is ${embeddings.length} bytes, expected ${expectEmb}`)
  }
  if (labelBuf.length !== manifest.num_records * 4) {
    throw new Error(`labels.bin is ${labelBuf.length} bytes, expected ${manifest.num_records * 4}`)
  }
  let vectors: Float32Array[] = []
  for (let row = 0; row < manifest.num_records; row++) {
    let v = new Float32Array(manifest.dim)
    for (let j = 0; j < manifest.dim; j++) {
      v[j] = embeddings.readFloatLE((row * manifest.dim + j) * 4)
    }
    vectors.push(v)
  }
  let labels: number[] = []
  for (let row = 0; row < manifest.num_records; row++) {
    labels.push(labelBuf.readUInt32LE(row * 4))
  }
  let idsPath = path.join(dir, 'ids.txt')
  let ids = fs.existsSync(idsPath)
    ? fs.readFileSync(idsPath, 'utf-8').split('\n').filter(line => line.length > 0)
    : undefined
  return { manifest, vectors, labels, ids }
}
