"""Development-only cross-check: solve a ConicProgram with SCS."""
import math
import numpy as np
import scipy.sparse as sp
import scs


def scs_min(prog, eps=1e-8, max_iters=400000, verbose=False):
    n = prog.n_vars
    rows, cols, vals = [], [], []
    brows = []
    offset = 0
    A = prog.A.tocoo()
    if prog.n_eq:
        rows.extend(A.row.tolist()); cols.extend(A.col.tolist()); vals.extend(A.data.tolist())
        brows.extend([(i, v) for i, v in enumerate(prog.b)])
        offset = prog.n_eq
    psd_dims = []
    for blk in prog.blocks:
        d = blk.dim
        def sidx(r, c):
            return r * d - (r * (r - 1)) // 2 + (c - r)
        for (r, c), combo in blk.entries.items():
            scale = 1.0 if r == c else math.sqrt(2.0)
            for v, co in combo.items():
                rows.append(offset + sidx(r, c)); cols.append(v); vals.append(-co * scale)
        for (r, c), val in blk.const.items():
            scale = 1.0 if r == c else math.sqrt(2.0)
            brows.append((offset + sidx(r, c), val * scale))
        psd_dims.append(d)
        offset += d * (d + 1) // 2
    Am = sp.csc_matrix((vals, (rows, cols)), shape=(offset, n))
    b = np.zeros(offset)
    for i, v in brows:
        b[i] += v
    data = {"A": Am, "b": b, "c": prog.c}
    cone = {"z": prog.n_eq, "s": psd_dims}
    solver = scs.SCS(data, cone, eps_abs=eps, eps_rel=eps, max_iters=max_iters,
                     verbose=verbose)
    out = solver.solve()
    return out["info"]["pobj"], np.array(out["x"]), out["info"]["status"]
