"""SDPA sparse (.dat-s) import and export.

Convention documented in the file header we write: the program is
min c'x  with  sum_i x_i F_i - F_0 >= 0 blockwise; our linear equalities
A x = b are encoded as a trailing diagonal block holding the paired rows
(Ax - b >= 0 and b - Ax >= 0), which import folds back into equalities.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import IoError, ParseError
from .program import ConicProgram, PSDBlock

_HEADER = (
    '"dnpo conic program: min c\'x s.t. sum_i x_i F_i - F0 >= 0 per block;',
    '"equalities Ax=b appear as the final diagonal block in +/- row pairs.',
)


def export_sdpa(p: ConicProgram, destination=None) -> str:
    """Serialize to SDPA sparse format; returns the text and optionally
    writes it to a path or file object."""
    m = p.n_vars
    n_eq = p.n_eq
    sizes = [blk.dim for blk in p.blocks]
    if n_eq:
        sizes.append(-2 * n_eq)

    lines = list(_HEADER)
    lines.append(f"{m} = mDIM")
    lines.append(f"{len(sizes)} = nBLOCK")
    lines.append(" ".join(str(s) for s in sizes) + " = bLOCKsTRUCT")
    lines.append(" ".join(f"{v:.17g}" for v in p.c) if m else "")

    quint = []
    for bno, blk in enumerate(p.blocks, start=1):
        for (r, c), val in sorted(blk.const.items()):
            if val != 0.0:
                quint.append((0, bno, r + 1, c + 1, -val))
        for (r, c), combo in sorted(blk.entries.items()):
            for v, co in sorted(combo.items()):
                if co != 0.0:
                    quint.append((v + 1, bno, r + 1, c + 1, co))
    if n_eq:
        bno = len(p.blocks) + 1
        A = p.A.tocoo()
        for i, v, co in sorted(zip(A.row.tolist(), A.col.tolist(), A.data.tolist())):
            if co != 0.0:
                quint.append((v + 1, bno, 2 * i + 1, 2 * i + 1, co))
                quint.append((v + 1, bno, 2 * i + 2, 2 * i + 2, -co))
        for i, rhs in enumerate(p.b):
            if rhs != 0.0:
                quint.append((0, bno, 2 * i + 1, 2 * i + 1, rhs))
                quint.append((0, bno, 2 * i + 2, 2 * i + 2, -rhs))

    quint.sort()
    for mat, bno, i, j, val in quint:
        lines.append(f"{mat} {bno} {i} {j} {val:.17g}")
    text = "\n".join(lines) + "\n"

    if destination is not None:
        try:
            if hasattr(destination, "write"):
                destination.write(text)
            else:
                Path(destination).write_text(text)
        except OSError as exc:
            raise IoError(f"cannot write SDPA file: {exc}") from exc
    return text


def import_sdpa(source) -> ConicProgram:
    """Parse SDPA sparse format; inverse of export_sdpa on its image."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        path = Path(str(source))
        if path.exists():
            try:
                text = path.read_text()
            except OSError as exc:
                raise IoError(f"cannot read SDPA file: {exc}") from exc
        else:
            text = str(source)

    raw = [ln.strip() for ln in io.StringIO(text)]
    body = []
    for no, ln in enumerate(raw, start=1):
        if not ln or ln.startswith('"') or ln.startswith("*"):
            continue
        body.append((no, ln))
    if len(body) < 3:
        raise ParseError("truncated SDPA file")

    def ints(line, lineno, count=None):
        toks = line.replace(",", " ").replace("(", " ").replace(")", " ").replace("{", " ").replace("}", " ").split()
        toks = [t for t in toks if t not in ("=",)]
        vals = []
        for t in toks:
            try:
                vals.append(int(float(t)))
            except ValueError:
                break
        if count is not None and len(vals) < count:
            raise ParseError(f"expected {count} integers", line=lineno)
        return vals

    (l1, s1), (l2, s2), (l3, s3) = body[0], body[1], body[2]
    m = ints(s1, l1, 1)[0]
    nblocks = ints(s2, l2, 1)[0]
    sizes = ints(s3, l3)[:nblocks]
    if len(sizes) != nblocks:
        raise ParseError("bad block structure line", line=l3)

    if m > 0:
        if len(body) < 4:
            raise ParseError("missing objective line")
        l4, s4 = body[3]
        toks = s4.replace(",", " ").replace("{", " ").replace("}", " ").split()
        try:
            cvec = np.array([float(t) for t in toks[:m]])
        except ValueError as exc:
            raise ParseError("bad objective entry", line=l4) from exc
        if len(cvec) != m:
            raise ParseError(f"objective needs {m} entries", line=l4)
        rest = body[4:]
    else:
        cvec = np.zeros(0)
        rest = body[3:]

    consts = [dict() for _ in sizes]
    entmaps = [dict() for _ in sizes]
    for lineno, ln in rest:
        toks = ln.split()
        if len(toks) != 5:
            raise ParseError(f"expected 5 fields, got {len(toks)}", line=lineno)
        try:
            mat, bno, i, j = (int(float(t)) for t in toks[:4])
            val = float(toks[4])
        except ValueError as exc:
            raise ParseError("bad quintuple", line=lineno) from exc
        if not (0 <= mat <= m) or not (1 <= bno <= nblocks):
            raise ParseError("matrix or block number out of range", line=lineno)
        if i > j:
            raise ParseError("lower-triangle entry (i > j)", line=lineno)
        dim = abs(sizes[bno - 1])
        if not (1 <= i <= dim and 1 <= j <= dim):
            raise ParseError("entry outside block", line=lineno)
        if sizes[bno - 1] < 0 and i != j:
            raise ParseError("off-diagonal entry in diagonal block", line=lineno)
        key = (i - 1, j - 1)
        if mat == 0:
            consts[bno - 1][key] = consts[bno - 1].get(key, 0.0) - val
        else:
            cell = entmaps[bno - 1].setdefault(key, {})
            cell[mat - 1] = cell.get(mat - 1, 0.0) + val

    # detect our equality encoding: a trailing diagonal block of even size
    # whose odd/even rows are exact +/- pairs
    eq_rows, eq_rhs = [], []
    n_psd = nblocks
    if sizes and sizes[-1] < 0 and sizes[-1] % 2 == 0:
        dim = -sizes[-1]
        cm, em = consts[-1], entmaps[-1]
        paired = True
        for k in range(0, dim, 2):
            plus = em.get((k, k), {})
            minus = em.get((k + 1, k + 1), {})
            if not plus or set(plus) != set(minus):
                paired = False
                break
            if any(abs(plus[v] + minus[v]) > 1e-12 * max(1.0, abs(plus[v])) for v in plus):
                paired = False
                break
            bp = -cm.get((k, k), 0.0)
            bm = -cm.get((k + 1, k + 1), 0.0)
            if abs(bp + bm) > 1e-12 * max(1.0, abs(bp)):
                paired = False
                break
        if paired:
            n_psd = nblocks - 1
            for k in range(0, dim, 2):
                eq_rows.append(entmaps[-1].get((k, k), {}))
                eq_rhs.append(-consts[-1].get((k, k), 0.0))

    blocks = []
    for bno in range(n_psd):
        size = sizes[bno]
        if size < 0:
            for d in range(-size):
                cell = entmaps[bno].get((d, d), {})
                cval = consts[bno].get((d, d), 0.0)
                if cell or cval:
                    blocks.append(PSDBlock(1, {(0, 0): cell} if cell else {},
                                           {(0, 0): cval} if cval else {}, None, "diag"))
        else:
            blocks.append(PSDBlock(size, entmaps[bno], consts[bno], None, ""))

    data, ri, ci = [], [], []
    for i, row in enumerate(eq_rows):
        for v, co in row.items():
            ri.append(i)
            ci.append(v)
            data.append(co)
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(eq_rows), m))
    return ConicProgram(m, cvec, A, np.array(eq_rhs), blocks, [])
