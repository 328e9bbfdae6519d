export class ExtractError extends Error {}

/** A detector/embedder module could not be loaded or has the wrong shape. */
export class ModelLoadError extends ExtractError {}

/** An input image could not be decoded. */
export class UnreadableImageError extends ExtractError {}

/** The labels file is malformed or does not cover an image. */
export class LabelsError extends ExtractError {}
