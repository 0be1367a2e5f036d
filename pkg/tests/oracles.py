"""Independent brute-force reference implementations used only by the tests.

Everything here is deliberately naive (loops, all-pairs distances, BFS) so it
shares no code path with the package implementations it checks.
"""

from collections import deque

import numpy as np


def brute_dice(pred, ref, cls):
    a = pred == cls
    b = ref == cls
    na, nb = int(a.sum()), int(b.sum())
    if na + nb == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / (na + nb)


def brute_surface(mask):
    """Foreground voxels with a 6-neighbor that is background or outside."""
    pts = []
    nz, ny, nx = mask.shape
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if not mask[z, y, x]:
                    continue
                for dz, dy, dx in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    zz, yy, xx = z + dz, y + dy, x + dx
                    if not (0 <= zz < nz and 0 <= yy < ny and 0 <= xx < nx) or not mask[zz, yy, xx]:
                        pts.append((z, y, x))
                        break
    return pts


def brute_hausdorff(pred, ref, cls, spacing):
    dx, dy, dz = spacing
    a = brute_surface(pred == cls)
    b = brute_surface(ref == cls)
    assert a and b

    def mm(p):
        return (p[0] * dz, p[1] * dy, p[2] * dx)

    def directed(src, dst):
        worst = 0.0
        for p in src:
            pz, py, px = mm(p)
            best = min(
                ((pz - qz) ** 2 + (py - qy) ** 2 + (px - qx) ** 2) ** 0.5
                for qz, qy, qx in (mm(q) for q in dst)
            )
            worst = max(worst, best)
        return worst

    return max(directed(a, b), directed(b, a))


def brute_boundary_distance(ref_slice, cls):
    """All-pairs distance to the 4-connected boundary of class `cls`."""
    h, w = ref_slice.shape
    border = []
    for r in range(h):
        for c in range(w):
            if ref_slice[r, c] != cls:
                continue
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w) or ref_slice[rr, cc] != cls:
                    border.append((r, c))
                    break
    out = np.full((h, w), np.inf)
    for r in range(h):
        for c in range(w):
            if border:
                out[r, c] = min(((r - br) ** 2 + (c - bc) ** 2) ** 0.5 for br, bc in border)
    return out


def brute_failure_mask(pred, ref, outside, inside, min_cluster):
    """Naive re-implementation of the failure rules (per slice, per class)."""
    nz, h, w = pred.shape
    fg = [z for z in range(nz) if (ref[z] > 0).any()]
    apex = fg[0] if fg else None
    base = fg[-1] if fg else None
    mask = np.zeros_like(pred, dtype=bool)
    for z in range(nz):
        errors = pred[z] != ref[z]
        if apex is None or z < apex or z > base:
            mask[z] = errors
            continue
        for cls in (1, 2, 3):
            dist = brute_boundary_distance(ref[z], cls)
            cand = np.zeros((h, w), dtype=bool)
            for r in range(h):
                for c in range(w):
                    if pred[z, r, c] == cls and ref[z, r, c] != cls and dist[r, c] > outside:
                        cand[r, c] = True
                    if ref[z, r, c] == cls and pred[z, r, c] != cls and dist[r, c] > inside:
                        cand[r, c] = True
            if z != apex:
                cand = _bfs_size_filter(cand, min_cluster)
            mask[z] |= cand
    return mask


def _bfs_size_filter(cand, min_cluster):
    h, w = cand.shape
    seen = np.zeros_like(cand, dtype=bool)
    out = np.zeros_like(cand, dtype=bool)
    for r in range(h):
        for c in range(w):
            if not cand[r, c] or seen[r, c]:
                continue
            comp = []
            queue = deque([(r, c)])
            seen[r, c] = True
            while queue:
                cr, cc = queue.popleft()
                comp.append((cr, cc))
                for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    rr, cc2 = cr + dr, cc + dc
                    if 0 <= rr < h and 0 <= cc2 < w and cand[rr, cc2] and not seen[rr, cc2]:
                        seen[rr, cc2] = True
                        queue.append((rr, cc2))
            if len(comp) >= min_cluster:
                for cr, cc in comp:
                    out[cr, cc] = True
    return out


def brute_average_precision(scores, labels):
    """AP with the interpolated precision envelope, enumerated point by point."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    points = []
    for thr in sorted(set(scores), reverse=True):
        flagged = scores >= thr
        tp = int((flagged & labels).sum())
        fp = int((flagged & ~labels).sum())
        points.append((tp / labels.sum(), tp / (tp + fp)))
    ap = 0.0
    prev_r = 0.0
    for recall, _ in points:
        envelope = max(p for r, p in points if r >= recall)
        ap += (recall - prev_r) * envelope
        prev_r = recall
    return ap
