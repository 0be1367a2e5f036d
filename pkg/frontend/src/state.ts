/** Client-side view and editing state for one correction session. */

import { buildFlagMask, brushIndices, clipToFlagged } from "./geometry.js";
import { decodeMask, encodeIndexRuns } from "./rle.js";
import type { SlicePayload, SubEdit } from "./types.js";

export interface OverlayToggles {
  mask: boolean;
  uncertainty: boolean;
  flags: boolean;
}

export interface Stroke {
  slice: number;
  label: number;
  indices: number[]; // already clipped to flagged regions
}

export class SliceState {
  readonly shape: [number, number];
  readonly baseMask: Uint8Array;
  readonly flagMask: Uint8Array;
  readonly payload: SlicePayload;

  constructor(payload: SlicePayload) {
    this.payload = payload;
    this.shape = payload.shape;
    const total = payload.shape[0] * payload.shape[1];
    this.baseMask = decodeMask(payload.mask_rle, total);
    this.flagMask = buildFlagMask(payload.flagged, payload.shape[0], payload.shape[1]);
  }

  get editable(): boolean {
    return this.payload.flagged.length > 0;
  }
}

export class ViewState {
  caseId: string;
  phase: string;
  sliceIndex = 0;
  overlays: OverlayToggles = { mask: true, uncertainty: false, flags: true };
  activeLabel = 3;
  brushSize = 4;
  version = 0;
  private slices = new Map<number, SliceState>();
  private strokes: Stroke[] = [];
  /** voxels the last paint attempt had to drop (outside flagged regions) */
  lastClippedOut: number[] = [];

  constructor(caseId: string, phase: string) {
    this.caseId = caseId;
    this.phase = phase;
  }

  loadSlice(payload: SlicePayload): SliceState {
    const state = new SliceState(payload);
    this.slices.set(payload.slice, state);
    return state;
  }

  slice(index = this.sliceIndex): SliceState | undefined {
    return this.slices.get(index);
  }

  /** Paint a brush stamp; only voxels inside flagged regions enter the buffer. */
  paint(row: number, col: number): Stroke | null {
    const slice = this.slice();
    if (!slice || !slice.editable) return null;
    const [h, w] = slice.shape;
    const stamp = brushIndices(row, col, this.brushSize, h, w);
    const { inside, outside } = clipToFlagged(stamp, slice.flagMask);
    this.lastClippedOut = outside;
    if (inside.length === 0) return null;
    const stroke: Stroke = { slice: this.sliceIndex, label: this.activeLabel, indices: inside };
    this.strokes.push(stroke);
    return stroke;
  }

  /** Remove the most recent stroke (any slice); mask state recomputes exactly. */
  undo(): boolean {
    return this.strokes.pop() !== undefined;
  }

  pendingStrokes(): readonly Stroke[] {
    return this.strokes;
  }

  clearPending(): void {
    this.strokes = [];
  }

  /** Base mask with all pending strokes applied, in order. */
  effectiveMask(index = this.sliceIndex): Uint8Array {
    const slice = this.slices.get(index);
    if (!slice) throw new Error(`slice ${index} not loaded`);
    const mask = slice.baseMask.slice();
    for (const stroke of this.strokes) {
      if (stroke.slice !== index) continue;
      for (const idx of stroke.indices) mask[idx] = stroke.label;
    }
    return mask;
  }

  /** Pending buffer as one atomic edit batch (posted in a single request). */
  buildEditBatch(): SubEdit[] {
    return this.strokes.map((stroke) => ({
      slice: stroke.slice,
      runs: encodeIndexRuns(stroke.indices),
      label: stroke.label,
    }));
  }
}
