/**
 * Synthetic portrait rendering for tests: a bright face oval with dark eyes
 * and mouth over a darker noisy background, encoded as binary PPM. Identity
 * is a handful of geometric/tonal parameters; per-image jitter moves the
 * face and reseeds the noise without changing identity.
 */

export interface Identity {
  skinTone: number
  faceAspect: number
  eyeRadius: number
  eyeOffset: number
  mouthWidth: number
}

export const IDENTITIES: Record<string, Identity> = {
  ada: { skinTone: 215, faceAspect: 1.3, eyeRadius: 0.11, eyeOffset: 0.48, mouthWidth: 0.62 },
  ben: { skinTone: 185, faceAspect: 1.15, eyeRadius: 0.14, eyeOffset: 0.6, mouthWidth: 0.5 },
  cam: { skinTone: 232, faceAspect: 1.45, eyeRadius: 0.08, eyeOffset: 0.54, mouthWidth: 0.72 },
}

export function lcg(seed: number): () => number {
  let state = seed >>> 0
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0
    return state / 2 ** 32
  }
}

function encodePpm(size: number, pixels: Float64Array): Buffer {
  const header = Buffer.from(`P6\n${size} ${size}\n255\n`, 'ascii')
  const body = Buffer.alloc(size * size * 3)
  for (let i = 0; i < size * size; i += 1) {
    const v = Math.max(0, Math.min(255, Math.round(pixels[i])))
    body[3 * i] = v
    body[3 * i + 1] = v
    body[3 * i + 2] = v
  }
  return Buffer.concat([header, body])
}

export function renderFacePpm(identity: Identity, jitterSeed: number, size = 128): Buffer {
  const rand = lcg(jitterSeed)
  const cx = size / 2 + (rand() - 0.5) * 8
  const cy = size / 2 + (rand() - 0.5) * 8
  const brightness = (rand() - 0.5) * 14
  const rx = 0.3 * size
  const ry = rx * identity.faceAspect

  const pixels = new Float64Array(size * size)
  for (let y = 0; y < size; y += 1) {
    for (let x = 0; x < size; x += 1) {
      pixels[y * size + x] = 55 + (rand() - 0.5) * 40
    }
  }
  const paintDisk = (px: number, py: number, r: number, value: number) => {
    for (let y = Math.floor(py - r); y <= Math.ceil(py + r); y += 1) {
      for (let x = Math.floor(px - r); x <= Math.ceil(px + r); x += 1) {
        if (x < 0 || y < 0 || x >= size || y >= size) continue
        if ((x - px) ** 2 + (y - py) ** 2 <= r * r) {
          pixels[y * size + x] = value
        }
      }
    }
  }
  // face oval with a mild vertical shading gradient
  for (let y = 0; y < size; y += 1) {
    for (let x = 0; x < size; x += 1) {
      const dx = (x - cx) / rx
      const dy = (y - cy) / ry
      if (dx * dx + dy * dy <= 1) {
        pixels[y * size + x] = identity.skinTone + brightness - 12 * dy
      }
    }
  }
  const eyeY = cy - 0.3 * ry
  const eyeR = identity.eyeRadius * rx
  paintDisk(cx - identity.eyeOffset * rx, eyeY, eyeR, 40)
  paintDisk(cx + identity.eyeOffset * rx, eyeY, eyeR, 40)
  // mouth: a flat dark ellipse
  const mouthY = cy + 0.45 * ry
  const mouthHalf = identity.mouthWidth * rx * 0.5
  for (let y = Math.floor(mouthY - 2.5); y <= Math.ceil(mouthY + 2.5); y += 1) {
    for (let x = Math.floor(cx - mouthHalf); x <= Math.ceil(cx + mouthHalf); x += 1) {
      if (x < 0 || y < 0 || x >= size || y >= size) continue
      pixels[y * size + x] = 70
    }
  }
  return encodePpm(size, pixels)
}

export function renderNoisePpm(seed: number, size = 128): Buffer {
  const rand = lcg(seed)
  const pixels = new Float64Array(size * size)
  for (let i = 0; i < size * size; i += 1) {
    pixels[i] = 40 + rand() * 170
  }
  return encodePpm(size, pixels)
}

export function cosine(a: Float32Array, b: Float32Array): number {
  let dot = 0
  let na = 0
  let nb = 0
  for (let i = 0; i < a.length; i += 1) {
    dot += a[i] * b[i]
    na += a[i] * a[i]
    nb += b[i] * b[i]
  }
  return dot / Math.sqrt(na * nb)
}
