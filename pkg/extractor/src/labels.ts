/** Image labels CSV: header image,person_id,family_id; one row per image. */
import { LabelsError } from './errors.js'

export interface ImageLabel {
  personId: string
  familyId: string
}

export function parseLabels(text: string): Map<string, ImageLabel> {
  const lines = text.split('\n').filter((line) => line.length > 0)
  if (lines.length === 0 || lines[0].trim() !== 'image,person_id,family_id') {
    throw new LabelsError('labels file needs header image,person_id,family_id')
  }
  const labels = new Map<string, ImageLabel>()
  for (let i = 1; i < lines.length; i += 1) {
    const parts = lines[i].split(',')
    if (parts.length !== 3 || parts.some((p) => p.length === 0)) {
      throw new LabelsError(`labels line ${i + 1}: expected image,person_id,family_id`)
    }
    const [image, personId, familyId] = parts
    if (labels.has(image)) {
      throw new LabelsError(`labels line ${i + 1}: duplicate image ${image}`)
    }
    labels.set(image, { personId, familyId })
  }
  return labels
}
