import * as fs from 'fs'
import * as path from 'path'
import * as jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

/** Decoded image: RGBA bytes, row-major. */
export type RawImage = {
  width: number
  height: number
  data: Uint8Array
}

const DECODABLE = new Set(['.png', '.jpg', '.jpeg'])

export function isImageFile(file: string): boolean {
  return DECODABLE.has(path.extname(file).toLowerCase())
}

/** Decode a PNG or JPEG file. Throws on anything undecodable. */
export function decodeImage(file: string): RawImage {
  let ext = path.extname(file).toLowerCase()
  let buffer = fs.readFileSync(file)
  if (ext === '.png') {
    let png = PNG.sync.read(buffer)
    return { width: png.width, height: png.height, data: new Uint8Array(png.data) }
  }
  if (ext === '.jpg' || ext === '.jpeg') {
    let decoded = jpeg.decode(buffer, { useTArray: true, maxMemoryUsageInMB: 64 })
    return { width: decoded.width, height: decoded.height, data: decoded.data }
  }
  throw new Error(`unsupported image extension: ${file}`)
}

/**
 * Bilinear resize to size x size, returning RGB floats in [0, 1]
 * (channel-interleaved, length size*size*3). Alpha is dropped.
 */
export function resizeToRgb(image: RawImage, size: number): Float32Array {
  let { width, height, data } = image
  let out = new Float32Array(size * size * 3)
  let scaleX = width / size
  let scaleY = height / size
  for (let y = 0; y < size; y++) {
    let srcY = Math.min((y + 0.5) * scaleY - 0.5, height - 1)
    let y0 = Math.max(Math.floor(srcY), 0)
    let y1 = Math.min(y0 + 1, height - 1)
    let fy = srcY - y0
    for (let x = 0; x < size; x++) {
      let srcX = Math.min((x + 0.5) * scaleX - 0.5, width - 1)
      let x0 = Math.max(Math.floor(srcX), 0)
      let x1 = Math.min(x0 + 1, width - 1)
      let fx = srcX - x0
      for (let c = 0; c < 3; c++) {
        let p00 = data[(y0 * width + x0) * 4 + c]
        let p01 = data[(y0 * width + x1) * 4 + c]
        let p10 = data[(y1 * width + x0) * 4 + c]
        let p11 = data[(y1 * width + x1) * 4 + c]
        let top = p00 + (p01 - p00) * fx
        let bottom = p10 + (p11 - p10) * fx
        out[(y * size + x) * 3 + c] = (top + (bottom - top) * fy) / 255
      }
    }
  }
  return out
}
