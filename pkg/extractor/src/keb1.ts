/**
 * KEB1 embedding container: "KEB1" magic, u32 version=1, u32 row count,
 * u32 dimension (all little-endian), then row-major float32 values.
 */
const MAGIC = 'KEB1'
const VERSION = 1
const HEADER_BYTES = 16

export function encodeKeb1(vectors: Float32Array[], dim: number): Buffer {
  const buffer = Buffer.alloc(HEADER_BYTES + vectors.length * dim * 4)
  buffer.write(MAGIC, 0, 'ascii')
  buffer.writeUInt32LE(VERSION, 4)
  buffer.writeUInt32LE(vectors.length, 8)
  buffer.writeUInt32LE(dim, 12)
  let offset = HEADER_BYTES
  for (const vector of vectors) {
    if (vector.length !== dim) {
      throw new Error(`vector has ${vector.length} values, expected ${dim}`)
    }
    for (const value of vector) {
      buffer.writeFloatLE(value, offset)
      offset += 4
    }
  }
  return buffer
}

export function decodeKeb1(buffer: Buffer): { n: number; dim: number; values: Float32Array } {
  if (buffer.length < HEADER_BYTES || buffer.subarray(0, 4).toString('ascii') !== MAGIC) {
    throw new Error('not a KEB1 buffer')
  }
  const version = buffer.readUInt32LE(4)
  if (version !== VERSION) {
    throw new Error(`unsupported KEB1 version ${version}`)
  }
  const n = buffer.readUInt32LE(8)
  const dim = buffer.readUInt32LE(12)
  if (buffer.length !== HEADER_BYTES + n * dim * 4) {
    throw new Error('KEB1 size mismatch')
  }
  const values = new Float32Array(n * dim)
  for (let i = 0; i < values.length; i += 1) {
    values[i] = buffer.readFloatLE(HEADER_BYTES + 4 * i)
  }
  return { n, dim, values }
}
