/** Run-length codecs matching the service wire format. */

import type { IndexRuns, MaskRuns } from "./types.js";

/** Expand full-coverage [value, length] runs into a label buffer. */
export function decodeMask(runs: MaskRuns, total: number): Uint8Array {
  const out = new Uint8Array(total);
  let pos = 0;
  for (const [value, length] of runs) {
    if (length <= 0) throw new Error("non-positive run length");
    out.fill(value, pos, pos + length);
    pos += length;
  }
  if (pos !== total) throw new Error(`runs cover ${pos} of ${total} voxels`);
  return out;
}

/** Compress a label buffer into full-coverage [value, length] runs. */
export function encodeMask(mask: Uint8Array): MaskRuns {
  const runs: MaskRuns = [];
  if (mask.length === 0) return runs;
  let value = mask[0];
  let length = 1;
  for (let i = 1; i < mask.length; i++) {
    if (mask[i] === value) {
      length++;
    } else {
      runs.push([value, length]);
      value = mask[i];
      length = 1;
    }
  }
  runs.push([value, length]);
  return runs;
}

/** Compress sorted unique flat indices into [start, length] runs. */
export function encodeIndexRuns(indices: number[]): IndexRuns {
  const sorted = Array.from(new Set(indices)).sort((a, b) => a - b);
  const runs: IndexRuns = [];
  let start = -1;
  let prev = -2;
  for (const idx of sorted) {
    if (idx === prev + 1) {
      prev = idx;
      continue;
    }
    if (start >= 0) runs.push([start, prev - start + 1]);
    start = idx;
    prev = idx;
  }
  if (start >= 0) runs.push([start, prev - start + 1]);
  return runs;
}

export function decodeIndexRuns(runs: IndexRuns): number[] {
  const out: number[] = [];
  for (const [start, length] of runs) {
    if (start < 0 || length <= 0) throw new Error("invalid index run");
    for (let i = 0; i < length; i++) out.push(start + i);
  }
  return out;
}
