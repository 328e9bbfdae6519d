/** JSON Lines manifest matching the embedding-store schema. */

export interface ManifestRecord {
  image_id: string
  person_id: string
  family_id: string
  row: number
  detected: boolean
}

export function encodeManifest(records: ManifestRecord[]): string {
  return records
    .map((r) =>
      JSON.stringify({
        image_id: r.image_id,
        person_id: r.person_id,
        family_id: r.family_id,
        row: r.row,
        detected: r.detected,
      }),
    )
    .map((line) => line + '\n')
    .join('')
}

export function decodeManifest(text: string): ManifestRecord[] {
  return text
    .split('\n')
    .filter((line) => line.length > 0)
    .map((line) => JSON.parse(line) as ManifestRecord)
}
