/** Brush footprints and flagged-region masks in slice coordinates. */

import type { FlaggedRegion } from "./types.js";

/** 1 where editing is allowed (inside any flagged region), else 0. */
export function buildFlagMask(
  flagged: FlaggedRegion[],
  height: number,
  width: number,
): Uint8Array {
  const mask = new Uint8Array(height * width);
  for (const region of flagged) {
    const r1 = Math.min(region.row0 + region.rows, height);
    const c1 = Math.min(region.col0 + region.cols, width);
    for (let r = Math.max(region.row0, 0); r < r1; r++) {
      mask.fill(1, r * width + Math.max(region.col0, 0), r * width + c1);
    }
  }
  return mask;
}

/** Flat indices of a round brush stamp centered on (row, col), clamped to the slice. */
export function brushIndices(
  row: number,
  col: number,
  brushSize: number,
  height: number,
  width: number,
): number[] {
  const radius = Math.max(0.5, brushSize / 2);
  const out: number[] = [];
  const r0 = Math.max(0, Math.floor(row - radius));
  const r1 = Math.min(height - 1, Math.ceil(row + radius));
  const c0 = Math.max(0, Math.floor(col - radius));
  const c1 = Math.min(width - 1, Math.ceil(col + radius));
  for (let r = r0; r <= r1; r++) {
    for (let c = c0; c <= c1; c++) {
      const dr = r - row;
      const dc = c - col;
      if (dr * dr + dc * dc <= radius * radius) out.push(r * width + c);
    }
  }
  return out;
}

/** Split voxel indices into those inside and outside the flagged regions. */
export function clipToFlagged(
  indices: number[],
  flagMask: Uint8Array,
): { inside: number[]; outside: number[] } {
  const inside: number[] = [];
  const outside: number[] = [];
  for (const idx of indices) {
    (flagMask[idx] ? inside : outside).push(idx);
  }
  return { inside, outside };
}
