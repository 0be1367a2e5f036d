/** Payload types of the review service HTTP API. */

export type Phase = "ED" | "ES";

export interface CaseInfo {
  patient_id: string;
  phases: Phase[];
  slices: Record<string, number>;
}

export interface FlaggedRegion {
  row0: number;
  col0: number;
  rows: number;
  cols: number;
}

/** [value, runLength] pairs covering a flattened slice. */
export type MaskRuns = [number, number][];
/** [startIndex, runLength] pairs of a sparse voxel set. */
export type IndexRuns = [number, number][];

export interface SlicePayload {
  patient_id: string;
  phase: Phase;
  slice: number;
  slice_count: number;
  shape: [number, number];
  image_png: string;
  umap_png: string;
  mask_rle: MaskRuns;
  reference_rle: MaskRuns;
  flagged: FlaggedRegion[];
}

export interface SubEdit {
  slice: number;
  runs: IndexRuns;
  label: number;
}

export interface StructureMetrics {
  dice: number;
  hausdorff_mm: number | null;
}

export interface SessionReport {
  before: Record<string, StructureMetrics>;
  after: Record<string, StructureMetrics>;
  delta: Record<string, StructureMetrics>;
  session_id?: string;
  patient_id: string;
  phase: string;
  edits?: number;
}

export const LABEL_NAMES = ["background", "RV", "LVM", "LV"] as const;
