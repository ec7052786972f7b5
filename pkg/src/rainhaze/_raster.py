"""Compiled inner loops for impulse stamping and patch averaging.

Both routes to a rain intensity (full layer render + mask + box filter, and
the masked fast path) go through these two functions, so their per-pixel
accumulation order is identical and results agree bit for bit.
"""

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def stamp_runs(buf, row0, rows, cols, run_dr, run_dc, run_start, run_len, values):
    """Add a run-length encoded kernel at each (row, col) impulse.

    ``buf`` holds raster rows ``row0 .. row0 + buf.shape[0]``; contributions
    falling outside it are dropped. Impulses are applied in the given order.
    """
    nrows, ncols = buf.shape
    for n in range(rows.shape[0]):
        r0 = rows[n] - row0
        c0 = cols[n]
        for j in range(run_dr.shape[0]):
            r = r0 + run_dr[j]
            if r < 0 or r >= nrows:
                continue
            c = c0 + run_dc[j]
            length = run_len[j]
            lo = 0
            if c < 0:
                lo = -c
            hi = length
            if c + length > ncols:
                hi = ncols - c
            if lo >= hi:
                continue
            s = run_start[j]
            row = buf[r]
            for t in range(lo, hi):
                row[c + t] += values[s + t]


@njit(nogil=True, cache=True)
def patch_mean(buf, p, vis):
    """Mean of min(buf, 1) over each p x p block where ``vis`` is set, else 0."""
    bh, bw = vis.shape
    out = np.zeros((bh, bw), dtype=np.float64)
    area = p * p
    for y in range(bh):
        for x in range(bw):
            if not vis[y, x]:
                continue
            s = 0.0
            for a in range(p):
                row = buf[y * p + a]
                for b in range(x * p, x * p + p):
                    v = row[b]
                    if v > 1.0:
                        v = 1.0
                    s += v
            out[y, x] = s / area
    return out
