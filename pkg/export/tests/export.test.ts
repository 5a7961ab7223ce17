import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import { spawnSync } from 'child_process'
import * as jpeg from 'jpeg-js'
import { PNG } from 'pngjs'
import { afterEach, describe, expect, it } from 'vitest'
import { loadBackbone } from '../src/backbone'
import { exportDataset } from '../src/export'
import { readDataset } from '../src/format'

let tmpDirs: string[] = []

function tmpDir(prefix: string): string {
  let dir = fs.mkdtempSync(path.join(os.tmpdir(), prefix))
  tmpDirs.push(dir)
  return dir
}

afterEach(() => {
  for (let dir of tmpDirs) {
    fs.rmSync(dir, { recursive: true, force: true })
  }
  tmpDirs = []
})

function writePng(file: string, width: number, height: number, seedByte: number) {
  let png = new PNG({ width, height })
  for (let i = 0; i < width * height * 4; i++) {
    png.data[i] = (i * 31 + seedByte * 101) % 256
  }
  fs.writeFileSync(file, PNG.sync.write(png))
}

function writeJpeg(file: string, width: number, height: number, seedByte: number) {
  let data = Buffer.alloc(width * height * 4)
  for (let i = 0; i < data.length; i++) {
    data[i] = (i * 17 + seedByte * 13) % 256
  }
  fs.writeFileSync(file, jpeg.encode({ data, width, height }, 90).data)
}

function makeFixture(options?: { corrupt?: boolean; jpeg?: boolean }): string {
  let root = tmpDir('fsdd-images-')
  let specs: Array<[string, number]> = [
    ['birds', 3],
    ['airplanes', 3],
  ]
  for (let [cls, n] of specs) {
    fs.mkdirSync(path.join(root, cls))
    for (let i = 0; i < n; i++) {
      if (options?.jpeg && i === 0) {
        writeJpeg(path.join(root, cls, `img_${i}.jpg`), 20, 16, i + cls.length)
      } else {
        writePng(path.join(root, cls, `img_${i}.png`), 20, 16, i + cls.length)
      }
    }
  }
  if (options?.corrupt) {
    fs.writeFileSync(path.join(root, 'birds', 'broken.png'), Buffer.from('not a png'))
  }
  return root
}

describe('backbones', () => {
  it('reports the advertised dimensions', () => {
    expect(loadBackbone('patch8').dim).toBe(192)
    expect(loadBackbone('patch16').dim).toBe(768)
  })

  it('rejects unknown names', () => {
    expect(() => loadBackbone('resnet50')).toThrow(/unknown backbone/)
  })
})

describe('exportDataset', () => {
  it('exports a 2-class x 3-image fixture with correct counts and ids', () => {
    let root = makeFixture()
    let out = tmpDir('fsdd-out-')
    let result = exportDataset({ images: root, backbone: 'patch8', batchSize: 2 }, out)
    expect(result.numRecords).toBe(6)
    expect(result.dim).toBe(192)

    let ds = readDataset(out)
    expect(ds.manifest.num_records).toBe(6)
    expect(ds.manifest.dim).toBe(192)
    expect(ds.manifest.dtype).toBe('f32le')
    // class ids follow sorted directory names
    expect(ds.manifest.classes).toEqual([
      { id: 0, name: 'airplanes', count: 3 },
      { id: 1, name: 'birds', count: 3 },
    ])
    // ids.txt line i names the source of record i, consistent with labels
    expect(ds.ids).toHaveLength(6)
    for (let row = 0; row < 6; row++) {
      let className = ds.manifest.classes[ds.labels[row]].name
      expect(ds.ids![row].startsWith(className + '/')).toBe(true)
    }
    // exact blob sizes
    expect(fs.statSync(path.join(out, 'embeddings.bin')).size).toBe(6 * 192 * 4)
    expect(fs.statSync(path.join(out, 'labels.bin')).size).toBe(6 * 4)
  })

  it('emits finite raw features in [0, 1] for patch backbones', () => {
    let root = makeFixture()
    let out = tmpDir('fsdd-out-')
    exportDataset({ images: root, backbone: 'patch16' }, out)
    let ds = readDataset(out)
    for (let v of ds.vectors) {
      for (let x of v) {
        expect(Number.isFinite(x)).toBe(true)
        expect(x).toBeGreaterThanOrEqual(0)
        expect(x).toBeLessThanOrEqual(1)
      }
    }
  })

  it('decodes jpeg images too', () => {
    let root = makeFixture({ jpeg: true })
    let out = tmpDir('fsdd-out-')
    let result = exportDataset({ images: root, backbone: 'patch8' }, out)
    expect(result.numRecords).toBe(6)
  })

  it('skips undecodable images with a warning and keeps counts consistent', () => {
    let root = makeFixture({ corrupt: true })
    let out = tmpDir('fsdd-out-')
    let warnings: string[] = []
    let result = exportDataset(
      { images: root, backbone: 'patch8', onWarning: m => warnings.push(m) },
      out,
    )
    expect(result.numRecords).toBe(6) // broken.png excluded
    expect(warnings.some(m => m.includes('broken.png'))).toBe(true)
    let ds = readDataset(out)
    let birds = ds.manifest.classes.find(c => c.name === 'birds')!
    expect(birds.count).toBe(3)
    expect(ds.labels.filter(l => l === birds.id)).toHaveLength(3)
  })

  it('errors on a class with no decodable image', () => {
    let root = makeFixture()
    fs.mkdirSync(path.join(root, 'empty'))
    let out = tmpDir('fsdd-out-')
    expect(() => exportDataset({ images: root, backbone: 'patch8' }, out)).toThrow(
      /no decodable image/,
    )
  })

  it('errors on a missing image root', () => {
    let out = tmpDir('fsdd-out-')
    expect(() =>
      exportDataset({ images: path.join(out, 'nope'), backbone: 'patch8' }, out),
    ).toThrow(/not a directory/)
  })

  it('is deterministic: same input gives identical bytes', () => {
    let root = makeFixture()
    let outA = tmpDir('fsdd-out-')
    let outB = tmpDir('fsdd-out-')
    exportDataset({ images: root, backbone: 'patch8' }, outA)
    exportDataset({ images: root, backbone: 'patch8' }, outB)
    for (let name of ['manifest.json', 'embeddings.bin', 'labels.bin', 'ids.txt']) {
      expect(fs.readFileSync(path.join(outA, name))).toEqual(
        fs.readFileSync(path.join(outB, name)),
      )
    }
  })

  it('batch size does not change the output', () => {
    let root = makeFixture()
    let outA = tmpDir('fsdd-out-')
    let outB = tmpDir('fsdd-out-')
    exportDataset({ images: root, backbone: 'patch8', batchSize: 1 }, outA)
    exportDataset({ images: root, backbone: 'patch8', batchSize: 64 }, outB)
    expect(fs.readFileSync(path.join(outA, 'embeddings.bin'))).toEqual(
      fs.readFileSync(path.join(outB, 'embeddings.bin')),
    )
  })
})

describe('consuming toolkit integration', () => {
  it('exported directory is accepted by the fsdd CLI', () => {
    let probe = spawnSync('fsdd', ['--version'], { encoding: 'utf-8' })
    if (probe.error || probe.status !== 0) {
      console.warn('fsdd CLI not on PATH, skipping integration check')
      return
    }
    let root = makeFixture()
    let out = tmpDir('fsdd-out-')
    exportDataset({ images: root, backbone: 'patch8' }, out)
    let statsCsv = path.join(out, 'stats.csv')
    let run = spawnSync(
      'fsdd',
      ['stats', '--dataset', out, '--test-dataset', out, '--out', statsCsv],
      { encoding: 'utf-8' },
    )
    expect(run.status, run.stderr).toBe(0)
    let lines = fs.readFileSync(statsCsv, 'utf-8').trim().split('\n')
    expect(lines).toHaveLength(3) // header + 2 classes
  })
})
