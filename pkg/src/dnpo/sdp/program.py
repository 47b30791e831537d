"""Standard-form block-PSD conic programs.

A program asks for  min c'x  subject to  A x = b  and, for every block,
sum_i x_i E_i + C  positive semidefinite.  Complex Hermitian symbolic blocks
are realified with the faithful embedding M -> [[Re M, -Im M], [Im M, Re M]];
blocks remember their complex origin so the solver can project in the smaller
Hermitian geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..errors import DnpoError, NotHermitian


@dataclass
class PSDBlock:
    dim: int
    entries: dict                 # (r, c) with r <= c -> {var: float coeff}
    const: dict = field(default_factory=dict)   # (r, c) with r <= c -> float
    complex_dim: Optional[int] = None
    label: str = ""

    def vars_used(self):
        out = set()
        for combo in self.entries.values():
            out.update(combo)
        return out

    def dense_at(self, x: np.ndarray) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        for (r, c), val in self.const.items():
            m[r, c] += val
            if r != c:
                m[c, r] += val
        for (r, c), combo in self.entries.items():
            v = sum(x[i] * co for i, co in combo.items())
            m[r, c] += v
            if r != c:
                m[c, r] += v
        return m

    def canonical(self):
        ent = tuple(sorted((r, c, v, round(co, 12))
                           for (r, c), combo in self.entries.items()
                           for v, co in combo.items()))
        con = tuple(sorted((r, c, round(val, 12)) for (r, c), val in self.const.items()))
        return (self.dim, ent, con)


@dataclass
class ConicProgram:
    n_vars: int
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    blocks: list
    var_names: list = field(default_factory=list)
    objective_offset: float = 0.0
    var_bounds: Optional[np.ndarray] = None   # |x_i| <= var_bounds[i], if known

    @property
    def n_eq(self) -> int:
        return self.A.shape[0]

    def structurally_equal(self, other: "ConicProgram") -> bool:
        if self.n_vars != other.n_vars or self.n_eq != other.n_eq:
            return False
        if not np.allclose(self.c, other.c, atol=1e-12):
            return False
        if not np.allclose(self.b, other.b, atol=1e-12):
            return False
        if (self.A != other.A).nnz != 0:
            return False
        mine = sorted(blk.canonical() for blk in self.blocks)
        theirs = sorted(blk.canonical() for blk in other.blocks)
        return mine == theirs


def realify_block(dim: int, entries: dict, const: dict | None = None,
                  label: str = "") -> PSDBlock:
    """Realify a complex Hermitian symbolic block given by its upper triangle.

    Purely real blocks pass through unchanged; otherwise the dimension doubles
    and the block records its complex origin.
    """
    const = const or {}
    tol = 1e-12
    has_imag = any(abs(co.imag) > tol * max(1.0, abs(co))
                   for combo in entries.values() for co in combo.values())
    has_imag = has_imag or any(
        isinstance(v, complex) and abs(v.imag) > tol for v in const.values())
    if not has_imag:
        ent = {rc: {v: float(co.real) if isinstance(co, complex) else float(co)
                    for v, co in combo.items()}
               for rc, combo in entries.items()}
        con = {rc: float(v.real) if isinstance(v, complex) else float(v)
               for rc, v in const.items()}
        con = {rc: v for rc, v in con.items() if v != 0.0}
        return PSDBlock(dim, ent, con, None, label)

    for (r, c), combo in entries.items():
        if r == c and any(abs(co.imag) > 1e-9 * max(1.0, abs(co)) for co in combo.values()):
            raise NotHermitian(f"diagonal entry ({r},{r}) not real")

    ent: dict = {}
    con: dict = {}

    def _add(table, r, c, v, val):
        if abs(val) <= tol:
            return
        key = (r, c)
        if v is None:
            table[key] = table.get(key, 0.0) + val
        else:
            cell = table.setdefault(key, {})
            cell[v] = cell.get(v, 0.0) + val

    d = dim
    for (r, c), combo in entries.items():
        for v, co in combo.items():
            a, bpart = float(np.real(co)), float(np.imag(co))
            _add(ent, r, c, v, a)
            _add(ent, d + r, d + c, v, a)
            if r != c or bpart != 0.0:
                _add(ent, r, d + c, v, -bpart)
                _add(ent, c, d + r, v, bpart)
    for (r, c), val in const.items():
        a, bpart = float(np.real(val)), float(np.imag(val))
        _add(con, r, c, None, a)
        _add(con, d + r, d + c, None, a)
        _add(con, r, d + c, None, -bpart)
        _add(con, c, d + r, None, bpart)
    ent = {rc: {v: co for v, co in combo.items() if co != 0.0} for rc, combo in ent.items()}
    ent = {rc: combo for rc, combo in ent.items() if combo}
    return PSDBlock(2 * dim, ent, con, dim, label)


def realify(matrix: np.ndarray) -> np.ndarray:
    """Faithful real embedding of a constant complex Hermitian matrix."""
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DnpoError("square matrix expected")
    if np.max(np.abs(m - m.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(m))):
        raise NotHermitian("matrix is not Hermitian")
    if np.max(np.abs(m.imag)) <= 1e-14 * max(1.0, np.max(np.abs(m))):
        return m.real.copy()
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


# -- presolve -----------------------------------------------------------


@dataclass
class Presolved:
    program: ConicProgram
    fixed: dict                 # original var -> constant
    merged: dict                # original var -> (kept var original id, gamma, delta)
    keep: list                  # original ids of surviving vars, in order

    def lift(self, x_red: np.ndarray, n_orig: int) -> np.ndarray:
        x = np.zeros(n_orig)
        pos = {orig: i for i, orig in enumerate(self.keep)}
        for orig, i in pos.items():
            x[orig] = x_red[i]
        for orig, val in self.fixed.items():
            x[orig] = val
        changed = True
        guard = 0
        while changed:
            changed = False
            guard += 1
            if guard > 64:
                raise DnpoError("presolve substitution chain too deep")
            for orig, (src, gamma, delta) in self.merged.items():
                val = gamma * x[src] + delta
                if x[orig] != val:
                    x[orig] = val
                    changed = True
        return x


def presolve(p: ConicProgram, feastol: float = 1e-9) -> Presolved:
    """Eliminate singleton equalities (pins) and two-variable equalities
    (merges) and drop the affected rows and variables."""
    n = p.n_vars
    rows = []
    A = p.A.tocsr()
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        rows.append(dict(zip(A.indices[lo:hi].tolist(), A.data[lo:hi].tolist())))
    rhs = p.b.astype(float).tolist()

    fixed: dict = {}
    merged: dict = {}
    alive = [True] * len(rows)

    def sub_fixed(v, val):
        fixed[v] = val
        for i, row in enumerate(rows):
            if alive[i] and v in row:
                rhs[i] -= row.pop(v) * val

    def sub_merge(v, src, gamma, delta):
        merged[v] = (src, gamma, delta)
        for i, row in enumerate(rows):
            if alive[i] and v in row:
                co = row.pop(v)
                row[src] = row.get(src, 0.0) + co * gamma
                if abs(row[src]) < 1e-14:
                    del row[src]
                rhs[i] -= co * delta

    changed = True
    while changed:
        changed = False
        for i, row in enumerate(rows):
            if not alive[i]:
                continue
            if len(row) == 0:
                if abs(rhs[i]) > feastol:
                    raise DnpoError(f"presolve found inconsistent equality (residual {rhs[i]:.2e})")
                alive[i] = False
                changed = True
            elif len(row) == 1:
                ((v, co),) = row.items()
                sub_fixed(v, rhs[i] / co)
                alive[i] = False
                changed = True
            elif len(row) == 2:
                (v1, c1), (v2, c2) = sorted(row.items())
                if abs(c1) > abs(c2):
                    v1, c1, v2, c2 = v2, c2, v1, c1
                # eliminate the better-conditioned side: v2 = gamma v1 + delta
                sub_merge(v2, v1, -c1 / c2, rhs[i] / c2)
                alive[i] = False
                changed = True

    # resolve merge chains against fixed values
    def resolve(v):
        gamma, delta = 1.0, 0.0
        guard = 0
        while v in merged or v in fixed:
            guard += 1
            if guard > 10 * n + 16:
                raise DnpoError("presolve merge cycle")
            if v in fixed:
                return None, gamma * fixed[v] + delta
            src, g2, d2 = merged[v]
            gamma, delta = gamma * g2, gamma * d2 + delta
            v = src
        return v, (gamma, delta)

    keep = [v for v in range(n) if v not in fixed and v not in merged]
    pos = {v: i for i, v in enumerate(keep)}

    blocks = []
    for blk in p.blocks:
        ent: dict = {}
        con = dict(blk.const)
        for rc, combo in blk.entries.items():
            cell: dict = {}
            extra = 0.0
            for v, co in combo.items():
                tgt, info = resolve(v)
                if tgt is None:
                    extra += co * info
                else:
                    gamma, delta = info
                    cell[pos[tgt]] = cell.get(pos[tgt], 0.0) + co * gamma
                    extra += co * delta
            cell = {v: co for v, co in cell.items() if abs(co) > 1e-14}
            if extra:
                con[rc] = con.get(rc, 0.0) + extra
            if cell:
                ent[rc] = cell
        con = {rc: v for rc, v in con.items() if abs(v) > 1e-14}
        if not ent:
            # fully pinned block: check its constant part once and drop it
            if con:
                m = np.zeros((blk.dim, blk.dim))
                for (r, c), val in con.items():
                    m[r, c] += val
                    if r != c:
                        m[c, r] += val
                if np.linalg.eigvalsh(m)[0] < -1e-7:
                    raise DnpoError(f"pinned block {blk.label!r} is not PSD")
            continue
        blocks.append(PSDBlock(blk.dim, ent, con, blk.complex_dim, blk.label))

    new_rows, new_rhs = [], []
    for i, row in enumerate(rows):
        if not alive[i]:
            continue
        cell: dict = {}
        r = rhs[i]
        for v, co in row.items():
            tgt, info = resolve(v)
            if tgt is None:
                r -= co * info
            else:
                gamma, delta = info
                cell[pos[tgt]] = cell.get(pos[tgt], 0.0) + co * gamma
                r -= co * delta
        cell = {v: co for v, co in cell.items() if abs(co) > 1e-14}
        if not cell:
            if abs(r) > feastol:
                raise DnpoError("presolve found inconsistent equality")
            continue
        new_rows.append(cell)
        new_rhs.append(r)

    offset = p.objective_offset
    c_new = np.zeros(len(keep))
    for v in range(n):
        co = p.c[v]
        if co == 0.0:
            continue
        tgt, info = resolve(v)
        if tgt is None:
            offset += co * info
        else:
            gamma, delta = info
            c_new[pos[tgt]] += co * gamma
            offset += co * delta

    data, ri, ci = [], [], []
    for i, cell in enumerate(new_rows):
        for v, co in cell.items():
            ri.append(i)
            ci.append(v)
            data.append(co)
    A_new = sp.csr_matrix((data, (ri, ci)), shape=(len(new_rows), len(keep)))
    names = [p.var_names[v] for v in keep] if p.var_names else []
    vb = p.var_bounds[keep] if p.var_bounds is not None else None

    reduced = ConicProgram(len(keep), c_new, A_new, np.array(new_rhs), blocks,
                           names, objective_offset=offset, var_bounds=vb)

    fixed_res: dict = {}
    merged_res: dict = {}
    for v in range(n):
        if v in keep and v not in fixed and v not in merged:
            continue
        tgt, info = resolve(v)
        if tgt is None:
            fixed_res[v] = info
        else:
            gamma, delta = info
            merged_res[v] = (tgt, gamma, delta)
    return Presolved(reduced, fixed_res, merged_res, keep)
