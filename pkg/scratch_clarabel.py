"""Development-only cross-check: solve a ConicProgram with Clarabel IPM."""
import math
import numpy as np
import scipy.sparse as sp
import clarabel


def clarabel_min(prog, tol=1e-9, verbose=False):
    n = prog.n_vars
    rows, cols, vals = [], [], []
    brows = []
    cones = []
    offset = 0
    A = prog.A.tocoo()
    if prog.n_eq:
        rows.extend(A.row.tolist()); cols.extend(A.col.tolist()); vals.extend(A.data.tolist())
        brows.extend([(i, v) for i, v in enumerate(prog.b)])
        cones.append(clarabel.ZeroConeT(prog.n_eq))
        offset = prog.n_eq
    for blk in prog.blocks:
        d = blk.dim
        def sidx(r, c):
            return c * (c + 1) // 2 + r
        for (r, c), combo in blk.entries.items():
            scale = 1.0 if r == c else math.sqrt(2.0)
            for v, co in combo.items():
                rows.append(offset + sidx(r, c)); cols.append(v); vals.append(-co * scale)
        for (r, c), val in blk.const.items():
            scale = 1.0 if r == c else math.sqrt(2.0)
            brows.append((offset + sidx(r, c), val * scale))
        cones.append(clarabel.PSDTriangleConeT(d))
        offset += d * (d + 1) // 2
    Acl = sp.csc_matrix((vals, (rows, cols)), shape=(offset, n))
    b = np.zeros(offset)
    for i, v in brows:
        b[i] += v
    P = sp.csc_matrix((n, n))
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    sol = clarabel.DefaultSolver(P, prog.c, Acl, b, cones, settings).solve()
    return sol.obj_val, np.array(sol.x), str(sol.status)
