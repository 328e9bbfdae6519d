/**
 * Face localisation with five landmarks.
 *
 * The built-in detector is heuristic: it finds the largest bright connected
 * region (the face oval), then locates the two darkest spots in its upper
 * half (eyes) and the darkest spot in its lower band (mouth). Confidence
 * combines region plausibility, eye contrast and eye symmetry, so blank or
 * noise-only frames score near zero. Any detector honouring the interface
 * can replace it.
 */
import type { GrayImage, Point } from './image.js'

export interface Box {
  x: number
  y: number
  w: number
  h: number
}

export interface FaceDetection {
  confidence: number
  box: Box
  /** left eye, right eye, nose tip, mouth left, mouth right */
  landmarks: Point[]
}

export interface FaceDetector {
  detect(image: GrayImage): FaceDetection
}

const NO_FACE: FaceDetection = {
  confidence: 0,
  box: { x: 0, y: 0, w: 0, h: 0 },
  landmarks: [
    { x: 0, y: 0 },
    { x: 0, y: 0 },
    { x: 0, y: 0 },
    { x: 0, y: 0 },
    { x: 0, y: 0 },
  ],
}

function largestBrightComponent(img: GrayImage, threshold: number) {
  const { width, height, data } = img
  const labels = new Int32Array(width * height).fill(-1)
  let best = { size: 0, minX: 0, maxX: 0, minY: 0, maxY: 0 }
  let current = 0
  const stack: number[] = []
  for (let start = 0; start < data.length; start += 1) {
    if (labels[start] >= 0 || data[start] < threshold) continue
    let size = 0
    let minX = width
    let maxX = 0
    let minY = height
    let maxY = 0
    stack.push(start)
    labels[start] = current
    while (stack.length > 0) {
      const pixel = stack.pop() as number
      const px = pixel % width
      const py = (pixel / width) | 0
      size += 1
      if (px < minX) minX = px
      if (px > maxX) maxX = px
      if (py < minY) minY = py
      if (py > maxY) maxY = py
      const neighbours = [pixel - 1, pixel + 1, pixel - width, pixel + width]
      for (const n of neighbours) {
        if (n < 0 || n >= data.length) continue
        if (n === pixel - 1 && px === 0) continue
        if (n === pixel + 1 && px === width - 1) continue
        if (labels[n] >= 0 || data[n] < threshold) continue
        labels[n] = current
        stack.push(n)
      }
    }
    if (size > best.size) {
      best = { size, minX, maxX, minY, maxY }
    }
    current += 1
  }
  return best
}

function darkestWindow(img: GrayImage, box: Box): { point: Point; value: number } {
  // darkest 3x3 neighbourhood centre within the box
  let bestValue = Infinity
  let best: Point = { x: box.x + box.w / 2, y: box.y + box.h / 2 }
  const x0 = Math.max(1, Math.floor(box.x))
  const y0 = Math.max(1, Math.floor(box.y))
  const x1 = Math.min(img.width - 2, Math.ceil(box.x + box.w))
  const y1 = Math.min(img.height - 2, Math.ceil(box.y + box.h))
  for (let y = y0; y <= y1; y += 1) {
    for (let x = x0; x <= x1; x += 1) {
      let sum = 0
      for (let dy = -1; dy <= 1; dy += 1) {
        for (let dx = -1; dx <= 1; dx += 1) {
          sum += img.data[(y + dy) * img.width + (x + dx)]
        }
      }
      const value = sum / 9
      if (value < bestValue) {
        bestValue = value
        best = { x, y }
      }
    }
  }
  return { point: best, value: bestValue }
}

function clamp01(v: number): number {
  return Math.min(1, Math.max(0, v))
}

export class BrightRegionDetector implements FaceDetector {
  detect(img: GrayImage): FaceDetection {
    const { width, height, data } = img
    if (width < 8 || height < 8) return NO_FACE
    let mean = 0
    let max = 0
    for (const v of data) {
      mean += v
      if (v > max) max = v
    }
    mean /= data.length
    const threshold = mean + 0.25 * (max - mean)
    const region = largestBrightComponent(img, threshold)
    if (region.size === 0) return NO_FACE
    const box: Box = {
      x: region.minX,
      y: region.minY,
      w: region.maxX - region.minX + 1,
      h: region.maxY - region.minY + 1,
    }

    // plausible face ovals fill a moderate share of the frame
    const areaFraction = region.size / (width * height)
    const areaScore =
      areaFraction >= 0.08 && areaFraction <= 0.6
        ? 1
        : clamp01(1 - (areaFraction < 0.08 ? 0.08 - areaFraction : areaFraction - 0.6) / 0.05)

    const eyeBand = { y: box.y + 0.15 * box.h, h: 0.35 * box.h }
    const leftEye = darkestWindow(img, {
      x: box.x + 0.1 * box.w,
      y: eyeBand.y,
      w: 0.35 * box.w,
      h: eyeBand.h,
    })
    const rightEye = darkestWindow(img, {
      x: box.x + 0.55 * box.w,
      y: eyeBand.y,
      w: 0.35 * box.w,
      h: eyeBand.h,
    })
    const mouth = darkestWindow(img, {
      x: box.x + 0.25 * box.w,
      y: box.y + 0.6 * box.h,
      w: 0.5 * box.w,
      h: 0.3 * box.h,
    })

    let faceMean = 0
    let count = 0
    for (let y = region.minY; y <= region.maxY; y += 1) {
      for (let x = region.minX; x <= region.maxX; x += 1) {
        faceMean += data[y * width + x]
        count += 1
      }
    }
    faceMean /= count
    const eyeContrast = clamp01(
      (faceMean - (leftEye.value + rightEye.value) / 2) / 60,
    )
    const eyeSymmetry = clamp01(
      1 - Math.abs(leftEye.point.y - rightEye.point.y) / (0.2 * box.h),
    )

    const eyeMid: Point = {
      x: (leftEye.point.x + rightEye.point.x) / 2,
      y: (leftEye.point.y + rightEye.point.y) / 2,
    }
    const nose: Point = {
      x: (eyeMid.x + mouth.point.x) / 2,
      y: (eyeMid.y + mouth.point.y) / 2,
    }
    const mouthHalf = 0.18 * box.w
    return {
      confidence: areaScore * eyeContrast * eyeSymmetry,
      box,
      landmarks: [
        leftEye.point,
        rightEye.point,
        nose,
        { x: mouth.point.x - mouthHalf, y: mouth.point.y },
        { x: mouth.point.x + mouthHalf, y: mouth.point.y },
      ],
    }
  }
}
