/**
 * Grayscale image handling: binary PGM (P5) / PPM (P6) decoding, bilinear
 * resampling, and the five-landmark similarity warp used for face alignment.
 */
import { UnreadableImageError } from './errors.js'

export interface GrayImage {
  width: number
  height: number
  /** row-major luminance, 0..255 */
  data: Float64Array
}

export interface Point {
  x: number
  y: number
}

/** Similarity transform (x, y) -> (a*x - b*y + tx, b*x + a*y + ty). */
export interface Similarity {
  a: number
  b: number
  tx: number
  ty: number
}

/** Canonical five-point template (112x112): eyes, nose tip, mouth corners. */
export const ALIGN_SIZE = 112
export const ALIGN_TEMPLATE: Point[] = [
  { x: 38.2946, y: 51.6963 },
  { x: 73.5318, y: 51.5014 },
  { x: 56.0252, y: 71.7366 },
  { x: 41.5493, y: 92.3655 },
  { x: 70.7299, y: 92.2041 },
]

function parseHeader(buffer: Buffer, path: string) {
  // magic, width, height, maxval separated by whitespace; '#' starts a comment
  let offset = 2
  const fields: number[] = []
  while (fields.length < 3) {
    if (offset >= buffer.length) {
      throw new UnreadableImageError(`${path}: truncated header`)
    }
    const ch = buffer[offset]
    if (ch === 0x23) {
      while (offset < buffer.length && buffer[offset] !== 0x0a) offset += 1
      offset += 1
    } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
      offset += 1
    } else {
      let end = offset
      while (end < buffer.length && buffer[end] >= 0x30 && buffer[end] <= 0x39) {
        end += 1
      }
      if (end === offset) {
        throw new UnreadableImageError(`${path}: malformed header`)
      }
      fields.push(Number(buffer.subarray(offset, end).toString('ascii')))
      offset = end
    }
  }
  offset += 1 // single whitespace after maxval
  return { width: fields[0], height: fields[1], maxval: fields[2], offset }
}

/** Decode a binary PGM/PPM buffer to grayscale (Rec.601 luma for colour). */
export function decodeImage(buffer: Buffer, path = '<buffer>'): GrayImage {
  if (buffer.length < 2) {
    throw new UnreadableImageError(`${path}: not a PGM/PPM file`)
  }
  const magic = buffer.subarray(0, 2).toString('ascii')
  if (magic !== 'P5' && magic !== 'P6') {
    throw new UnreadableImageError(`${path}: unsupported format ${magic}`)
  }
  const { width, height, maxval, offset } = parseHeader(buffer, path)
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
    throw new UnreadableImageError(`${path}: unsupported dimensions or depth`)
  }
  const channels = magic === 'P6' ? 3 : 1
  const expected = width * height * channels
  if (buffer.length < offset + expected) {
    throw new UnreadableImageError(`${path}: truncated pixel data`)
  }
  const data = new Float64Array(width * height)
  const scale = 255 / maxval
  for (let i = 0; i < width * height; i += 1) {
    if (channels === 1) {
      data[i] = buffer[offset + i] * scale
    } else {
      const r = buffer[offset + 3 * i]
      const g = buffer[offset + 3 * i + 1]
      const b = buffer[offset + 3 * i + 2]
      data[i] = (0.299 * r + 0.587 * g + 0.114 * b) * scale
    }
  }
  return { width, height, data }
}

function sampleBilinear(img: GrayImage, x: number, y: number): number {
  const cx = Math.min(Math.max(x, 0), img.width - 1)
  const cy = Math.min(Math.max(y, 0), img.height - 1)
  const x0 = Math.floor(cx)
  const y0 = Math.floor(cy)
  const x1 = Math.min(x0 + 1, img.width - 1)
  const y1 = Math.min(y0 + 1, img.height - 1)
  const fx = cx - x0
  const fy = cy - y0
  const top = img.data[y0 * img.width + x0] * (1 - fx) + img.data[y0 * img.width + x1] * fx
  const bottom = img.data[y1 * img.width + x0] * (1 - fx) + img.data[y1 * img.width + x1] * fx
  return top * (1 - fy) + bottom * fy
}

export function resize(img: GrayImage, width: number, height: number): GrayImage {
  const data = new Float64Array(width * height)
  const sx = img.width / width
  const sy = img.height / height
  for (let y = 0; y < height; y += 1) {
    for (let x = 0; x < width; x += 1) {
      data[y * width + x] = sampleBilinear(img, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5)
    }
  }
  return { width, height, data }
}

/**
 * Least-squares similarity transform mapping src points onto dst points
 * (no reflection). Requires at least two distinct source points.
 */
export function fitSimilarity(src: Point[], dst: Point[]): Similarity {
  if (src.length !== dst.length || src.length < 2) {
    throw new Error('need matching point lists of length >= 2')
  }
  const n = src.length
  let sx = 0
  let sy = 0
  let su = 0
  let sv = 0
  let sxxyy = 0
  let sxu_yv = 0
  let sxv_yu = 0
  for (let i = 0; i < n; i += 1) {
    sx += src[i].x
    sy += src[i].y
    su += dst[i].x
    sv += dst[i].y
    sxxyy += src[i].x ** 2 + src[i].y ** 2
    sxu_yv += src[i].x * dst[i].x + src[i].y * dst[i].y
    sxv_yu += src[i].x * dst[i].y - src[i].y * dst[i].x
  }
  const denom = sxxyy - (sx * sx + sy * sy) / n
  if (denom === 0) {
    throw new Error('source points are coincident')
  }
  const a = (sxu_yv - (sx * su + sy * sv) / n) / denom
  const b = (sxv_yu - (sx * sv - sy * su) / n) / denom
  const tx = (su - a * sx + b * sy) / n
  const ty = (sv - b * sx - a * sy) / n
  return { a, b, tx, ty }
}

export function applySimilarity(t: Similarity, p: Point): Point {
  return { x: t.a * p.x - t.b * p.y + t.tx, y: t.b * p.x + t.a * p.y + t.ty }
}

/** Warp the input so detected landmarks land on the canonical template. */
export function warpToTemplate(
  img: GrayImage,
  landmarks: Point[],
  template: Point[] = ALIGN_TEMPLATE,
  size: number = ALIGN_SIZE,
): GrayImage {
  const t = fitSimilarity(landmarks, template)
  const scaleSq = t.a * t.a + t.b * t.b
  const data = new Float64Array(size * size)
  for (let v = 0; v < size; v += 1) {
    for (let u = 0; u < size; u += 1) {
      // inverse transform back into the source image
      const dx = u - t.tx
      const dy = v - t.ty
      const x = (t.a * dx + t.b * dy) / scaleSq
      const y = (-t.b * dx + t.a * dy) / scaleSq
      data[v * size + u] = sampleBilinear(img, x, y)
    }
  }
  return { width: size, height: size, data }
}
