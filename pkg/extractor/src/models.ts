/**
 * Dynamic loading of replacement detector/embedder modules. A module must
 * export `createDetector(): FaceDetector` or `createEmbedder(): FaceEmbedder`.
 */
import { pathToFileURL } from 'node:url'

import type { FaceDetector } from './detect.js'
import type { FaceEmbedder } from './embed.js'
import { ModelLoadError } from './errors.js'

async function importModule(modulePath: string): Promise<Record<string, unknown>> {
  try {
    return await import(pathToFileURL(modulePath).href)
  } catch (err) {
    throw new ModelLoadError(`cannot load ${modulePath}: ${(err as Error).message}`)
  }
}

export async function loadDetector(modulePath: string): Promise<FaceDetector> {
  const mod = await importModule(modulePath)
  const factory = mod.createDetector
  if (typeof factory !== 'function') {
    throw new ModelLoadError(`${modulePath} does not export createDetector()`)
  }
  const detector = factory() as FaceDetector
  if (typeof detector?.detect !== 'function') {
    throw new ModelLoadError(`${modulePath} createDetector() returned no detect()`)
  }
  return detector
}

export async function loadEmbedder(modulePath: string): Promise<FaceEmbedder> {
  const mod = await importModule(modulePath)
  const factory = mod.createEmbedder
  if (typeof factory !== 'function') {
    throw new ModelLoadError(`${modulePath} does not export createEmbedder()`)
  }
  const embedder = factory() as FaceEmbedder
  if (typeof embedder?.embed !== 'function' || typeof embedder.dim !== 'number') {
    throw new ModelLoadError(`${modulePath} createEmbedder() returned no embed()/dim`)
  }
  return embedder
}
