#!/usr/bin/env node
/**
 * extract-embeddings: labelled image folder -> KEB1 + manifest + drop log.
 *
 * Exit codes: 0 success, 1 usage error, 2 data error.
 */
import { parseArgs } from 'node:util'
import { pathToFileURL } from 'node:url'

import { ExtractError } from './errors.js'
import { extract, type ExtractModels } from './extract.js'
import { loadDetector, loadEmbedder } from './models.js'

const USAGE = `usage: extract-embeddings --images DIR --labels CSV
         --out-manifest FILE --out-embeddings FILE --drop-log FILE
         [--on-miss drop|resize] [--confidence 0.5]
         [--detector-module FILE.js] [--embedder-module FILE.js]`

export async function main(argv: string[]): Promise<number> {
  let args
  try {
    args = parseArgs({
      args: argv,
      options: {
        images: { type: 'string' },
        labels: { type: 'string' },
        'out-manifest': { type: 'string' },
        'out-embeddings': { type: 'string' },
        'drop-log': { type: 'string' },
        'on-miss': { type: 'string', default: 'drop' },
        confidence: { type: 'string', default: '0.5' },
        'detector-module': { type: 'string' },
        'embedder-module': { type: 'string' },
        help: { type: 'boolean', default: false },
      },
    }).values
  } catch (err) {
    console.error(`error: usage: ${(err as Error).message}`)
    return 1
  }
  if (args.help) {
    console.log(USAGE)
    return 0
  }
  for (const flag of ['images', 'labels', 'out-manifest', 'out-embeddings', 'drop-log']) {
    if (!(args as Record<string, unknown>)[flag]) {
      console.error(`error: usage: --${flag} is required`)
      return 1
    }
  }
  if (args['on-miss'] !== 'drop' && args['on-miss'] !== 'resize') {
    console.error('error: usage: --on-miss must be drop or resize')
    return 1
  }
  const confidence = Number(args.confidence)
  if (!(confidence >= 0 && confidence <= 1)) {
    console.error('error: usage: --confidence must be in [0, 1]')
    return 1
  }

  try {
    const models: ExtractModels = {}
    if (args['detector-module']) {
      models.detector = await loadDetector(args['detector-module'])
    }
    if (args['embedder-module']) {
      models.embedder = await loadEmbedder(args['embedder-module'])
    }
    const summary = await extract(
      {
        imageRoot: args.images!,
        labelsPath: args.labels!,
        manifestPath: args['out-manifest']!,
        embeddingsPath: args['out-embeddings']!,
        dropLogPath: args['drop-log']!,
      },
      { detectorConfidence: confidence, onMiss: args['on-miss'] },
      models,
    )
    console.log(
      `kept ${summary.kept}, dropped ${summary.dropped}, ` +
        `fallback-resized ${summary.fallbacks}`,
    )
    return 0
  } catch (err) {
    if (err instanceof ExtractError || (err as NodeJS.ErrnoException).code === 'ENOENT') {
      console.error(`error: data: ${(err as Error).message}`)
      return 2
    }
    throw err
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href
if (invokedDirectly) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(`error: internal: ${err}`)
      process.exit(3)
    },
  )
}
