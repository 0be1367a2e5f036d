/** Slice compositor: emits draw commands a canvas adapter can replay. */

import type { SliceState, ViewState } from "./state.js";

export type DrawCommand =
  | { kind: "image"; rgba: Uint8ClampedArray; width: number; height: number }
  | { kind: "rect"; row0: number; col0: number; rows: number; cols: number; color: string }
  | { kind: "banner"; text: string };

export const LABEL_COLORS: Record<number, [number, number, number]> = {
  1: [255, 165, 0], // RV
  2: [60, 200, 80], // LVM
  3: [230, 60, 60], // LV
};

const MASK_ALPHA = 0.38;
const UMAP_ALPHA = 0.45;
const CLIP_HIGHLIGHT: [number, number, number] = [255, 0, 255];

export function compositeSlice(
  view: ViewState,
  slice: SliceState,
  grayscale: Uint8ClampedArray,
  umap: Uint8ClampedArray | null,
): Uint8ClampedArray {
  const [h, w] = slice.shape;
  const rgba = new Uint8ClampedArray(h * w * 4);
  const mask = view.effectiveMask(slice.payload.slice);
  for (let i = 0; i < h * w; i++) {
    let r = grayscale[i];
    let g = grayscale[i];
    let b = grayscale[i];
    if (view.overlays.uncertainty && umap) {
      // simple heat ramp: dark -> red -> yellow
      const u = umap[i] / 255;
      const hr = Math.min(255, 510 * u);
      const hg = Math.max(0, 510 * (u - 0.5));
      r = r * (1 - UMAP_ALPHA * u) + hr * UMAP_ALPHA * u;
      g = g * (1 - UMAP_ALPHA * u) + hg * UMAP_ALPHA * u;
      b = b * (1 - UMAP_ALPHA * u);
    }
    if (view.overlays.mask) {
      const color = LABEL_COLORS[mask[i]];
      if (color) {
        r = r * (1 - MASK_ALPHA) + color[0] * MASK_ALPHA;
        g = g * (1 - MASK_ALPHA) + color[1] * MASK_ALPHA;
        b = b * (1 - MASK_ALPHA) + color[2] * MASK_ALPHA;
      }
    }
    rgba[i * 4] = r;
    rgba[i * 4 + 1] = g;
    rgba[i * 4 + 2] = b;
    rgba[i * 4 + 3] = 255;
  }
  for (const idx of view.lastClippedOut) {
    rgba[idx * 4] = CLIP_HIGHLIGHT[0];
    rgba[idx * 4 + 1] = CLIP_HIGHLIGHT[1];
    rgba[idx * 4 + 2] = CLIP_HIGHLIGHT[2];
  }
  return rgba;
}

/**
 * Full render pass for the current slice. Flagged regions come back as rect
 * commands at volume coordinates (the service already applied the crop
 * offset), so an 80x80 crop at offset (12,20) draws rectangles shifted by
 * exactly (12,20).
 */
export function renderSlice(
  view: ViewState,
  grayscale: Uint8ClampedArray,
  umap: Uint8ClampedArray | null,
): DrawCommand[] {
  const slice = view.slice();
  if (!slice) return [{ kind: "banner", text: "slice not loaded - retry" }];
  const [h, w] = slice.shape;
  const commands: DrawCommand[] = [
    { kind: "image", rgba: compositeSlice(view, slice, grayscale, umap), width: w, height: h },
  ];
  if (view.overlays.flags) {
    for (const region of slice.payload.flagged) {
      commands.push({
        kind: "rect",
        row0: region.row0,
        col0: region.col0,
        rows: region.rows,
        cols: region.cols,
        color: "yellow",
      });
    }
  }
  if (!slice.editable) {
    commands.push({ kind: "banner", text: "no flagged regions - editing disabled" });
  }
  return commands;
}

/** Brush interaction is only live when the slice has flagged regions. */
export function brushEnabled(view: ViewState): boolean {
  const slice = view.slice();
  return !!slice && slice.editable;
}
