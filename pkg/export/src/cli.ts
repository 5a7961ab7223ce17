#!/usr/bin/env node
import { parseArgs } from 'util'
import { BACKBONES } from './backbone'
import { exportDataset } from './export'

const USAGE = `usage: fsdd-export --images DIR --backbone NAME [--batch N] [--device HINT] --out DIR

Export a directory-per-class image tree as a labeled-embedding dataset.
Backbones: ${Object.keys(BACKBONES).join(', ')}`

function main(): number {
  let args
  try {
    args = parseArgs({
      options: {
        images: { type: 'string' },
        backbone: { type: 'string' },
        batch: { type: 'string', default: '64' },
        device: { type: 'string', default: 'cpu' },
        out: { type: 'string' },
        help: { type: 'boolean', default: false },
      },
    }).values
  } catch (error) {
    console.error(`error: ${(error as Error).message}`)
    console.error(USAGE)
    return 2
  }
  if (args.help) {
    console.log(USAGE)
    return 0
  }
  if (!args.images || !args.backbone || !args.out) {
    console.error('error: --images, --backbone and --out are required')
    console.error(USAGE)
    return 2
  }
  try {
    let result = exportDataset(
      {
        images: args.images,
        backbone: args.backbone,
        batchSize: parseInt(args.batch!, 10),
        device: args.device,
      },
      args.out,
    )
    console.log(
      `wrote ${result.numRecords} records (dim ${result.dim}, ` +
        `${result.classes.length} classes) to ${args.out}`,
    )
    return 0
  } catch (error) {
    console.error(`error: ${(error as Error).message}`)
    return 1
  }
}

process.exit(main())
