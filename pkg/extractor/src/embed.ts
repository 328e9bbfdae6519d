/**
 * Embedding models. The built-in one hashes an aligned 112x112 face into a
 * 512-dimensional descriptor: a 16x16 grid of block intensities plus a 16x16
 * grid of block gradient energies, each half centred, the whole vector
 * L2-normalized. It is deterministic and format-compatible with any other
 * 512-d embedder; swap in a neural model for real recognition quality.
 */
import type { GrayImage } from './image.js'

export interface FaceEmbedder {
  /** output dimensionality */
  dim: number
  /** expected square input size in pixels */
  inputSize: number
  embed(aligned: GrayImage): Float32Array
}

const GRID = 16

export class GridEmbedder implements FaceEmbedder {
  dim = 2 * GRID * GRID
  inputSize = 112

  embed(img: GrayImage): Float32Array {
    const { width, height, data } = img
    if (width !== this.inputSize || height !== this.inputSize) {
      throw new Error(`embedder expects ${this.inputSize}px squares, got ${width}x${height}`)
    }
    const block = width / GRID
    const means = new Float64Array(GRID * GRID)
    const grads = new Float64Array(GRID * GRID)
    const counts = new Float64Array(GRID * GRID)
    for (let y = 0; y < height; y += 1) {
      const by = Math.min(GRID - 1, Math.floor(y / block))
      for (let x = 0; x < width; x += 1) {
        const bx = Math.min(GRID - 1, Math.floor(x / block))
        const cell = by * GRID + bx
        const v = data[y * width + x]
        means[cell] += v
        const gx =
          x > 0 && x < width - 1
            ? (data[y * width + x + 1] - data[y * width + x - 1]) / 2
            : 0
        const gy =
          y > 0 && y < height - 1
            ? (data[(y + 1) * width + x] - data[(y - 1) * width + x]) / 2
            : 0
        grads[cell] += Math.hypot(gx, gy)
        counts[cell] += 1
      }
    }
    const vector = new Float64Array(this.dim)
    for (let i = 0; i < GRID * GRID; i += 1) {
      vector[i] = means[i] / counts[i]
      vector[GRID * GRID + i] = grads[i] / counts[i]
    }
    // centre each half so global brightness does not dominate cosine scores
    for (const start of [0, GRID * GRID]) {
      let mean = 0
      for (let i = 0; i < GRID * GRID; i += 1) mean += vector[start + i]
      mean /= GRID * GRID
      for (let i = 0; i < GRID * GRID; i += 1) vector[start + i] -= mean
    }
    let norm = 0
    for (const v of vector) norm += v * v
    norm = Math.sqrt(norm)
    const out = new Float32Array(this.dim)
    for (let i = 0; i < this.dim; i += 1) {
      out[i] = norm > 0 ? vector[i] / norm : 0
    }
    return out
  }
}
