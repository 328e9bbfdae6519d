/**
 * Batch extraction: walk a labelled image folder, detect and align each face,
 * embed it, and write the KEB1 + manifest pair the verification pipeline
 * consumes, plus a CSV log of dropped images.
 *
 * Images whose detection confidence falls below the policy threshold are
 * either dropped (training/validation data) or resized whole into the
 * embedder and flagged detected=false (test data), so downstream stages can
 * keep scoring them without retraining on them.
 */
import { readFile, writeFile } from 'node:fs/promises'
import path from 'node:path'

import { BrightRegionDetector, type FaceDetector } from './detect.js'
import { GridEmbedder, type FaceEmbedder } from './embed.js'
import { UnreadableImageError } from './errors.js'
import { decodeImage, resize, warpToTemplate } from './image.js'
import { encodeKeb1 } from './keb1.js'
import { parseLabels } from './labels.js'
import { encodeManifest, type ManifestRecord } from './manifest.js'

export interface ExtractionPolicy {
  /** keep a detection only at or above this confidence */
  detectorConfidence: number
  /** what to do with images that fail detection */
  onMiss: 'drop' | 'resize'
}

export interface ExtractPaths {
  imageRoot: string
  labelsPath: string
  manifestPath: string
  embeddingsPath: string
  dropLogPath: string
}

export interface ExtractModels {
  detector?: FaceDetector
  embedder?: FaceEmbedder
}

export interface ExtractSummary {
  kept: number
  dropped: number
  fallbacks: number
}

export async function extract(
  paths: ExtractPaths,
  policy: ExtractionPolicy,
  models: ExtractModels = {},
): Promise<ExtractSummary> {
  const detector = models.detector ?? new BrightRegionDetector()
  const embedder = models.embedder ?? new GridEmbedder()
  const labels = parseLabels(await readFile(paths.labelsPath, 'utf8'))
  const images = [...labels.keys()].sort()

  const records: ManifestRecord[] = []
  const vectors: Float32Array[] = []
  const dropped: string[] = []
  let fallbacks = 0
  for (const image of images) {
    const label = labels.get(image)!
    let buffer: Buffer
    try {
      buffer = await readFile(path.join(paths.imageRoot, image))
    } catch (err) {
      throw new UnreadableImageError(`${image}: ${(err as Error).message}`)
    }
    const gray = decodeImage(buffer, image)
    const detection = detector.detect(gray)
    let aligned
    let detected
    if (detection.confidence >= policy.detectorConfidence) {
      aligned = warpToTemplate(gray, detection.landmarks)
      detected = true
    } else if (policy.onMiss === 'drop') {
      dropped.push(
        `${image},confidence ${detection.confidence.toFixed(4)} below ` +
          `${policy.detectorConfidence}`,
      )
      continue
    } else {
      aligned = resize(gray, embedder.inputSize, embedder.inputSize)
      detected = false
      fallbacks += 1
    }
    records.push({
      image_id: image,
      person_id: label.personId,
      family_id: label.familyId,
      row: vectors.length,
      detected,
    })
    vectors.push(embedder.embed(aligned))
  }

  await writeFile(paths.embeddingsPath, encodeKeb1(vectors, embedder.dim))
  await writeFile(paths.manifestPath, encodeManifest(records))
  const dropLines = ['path,reason', ...dropped]
  await writeFile(paths.dropLogPath, dropLines.map((l) => l + '\n').join(''))
  return { kept: records.length, dropped: dropped.length, fallbacks }
}
