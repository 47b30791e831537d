"""First-order operator-splitting solver for block-PSD conic programs.

Splits  min c'x  s.t.  H x + g in {0}^m x PSD x ... x PSD  between the
affine image and the cone product: the x-update solves fixed normal
equations (factored once; the penalty only enters the right-hand side, so
residual balancing is free), the cone update projects blockwise.  Blocks
that realify a complex Hermitian matrix are projected in the original
Hermitian geometry, which halves the eigendecomposition cost.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import DnpoError, NumericError
from .program import ConicProgram, presolve as _presolve


@dataclass
class SolverSettings:
    rho: float = 1.0
    alpha: float = 1.6
    eps: float = 1e-6
    max_iter: int = 200000
    scaling: bool = True
    seed: int = 0
    presolve: bool = True
    check_every: int = 25
    rho_interval: int = 100
    accel_memory: int = 10
    eq_mode: str = "kkt"        # "kkt": equalities exact in the x-update;
                                # "cone": equalities as a zero cone
    verbose: bool = False

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise DnpoError("over-relaxation alpha must be in (0, 2)")
        if self.eps <= 0:
            raise DnpoError("eps must be positive")


@dataclass
class Solution:
    x: np.ndarray
    objective_value: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str
    certified: Optional[float] = None   # valid bound on the optimum from the
                                        # dual iterate, when variable bounds
                                        # are known (below the minimum)

    def to_dict(self, include_x: bool = False) -> dict:
        out = {
            "objective": self.objective_value,
            "status": self.status,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
        }
        if self.certified is not None:
            out["certified"] = self.certified
        if include_x:
            out["x"] = self.x.tolist()
        return out


def project_psd(m: np.ndarray) -> np.ndarray:
    """Nearest positive semidefinite matrix in Frobenius norm."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise NumericError("non-finite entries in PSD projection")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DnpoError("square matrix expected")
    sym = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(sym)
    pos = w > 0
    if not np.any(pos):
        return np.zeros_like(sym)
    if np.all(pos):
        return sym
    out = (v[:, pos] * w[pos]) @ v[:, pos].T
    return 0.5 * (out + out.T)


class _BlockPlan:
    """Packing of one PSD block into the stacked cone vector."""

    def __init__(self, blk, offset: int):
        self.offset = offset
        self.label = blk.label
        dc = blk.complex_dim
        self.complex_dim = dc
        if dc is None:
            d = blk.dim
            self.dim = d
            r, c = np.triu_indices(d)
            self.r, self.c = r, c
            self.scale = np.where(r == c, 1.0, math.sqrt(2.0))
            self.size = len(r)
        else:
            self.dim = dc
            r, c = np.triu_indices(dc, k=1)
            self.offr, self.offc = r, c
            self.npair = len(r)
            self.size = dc + 2 * self.npair

    def _slot(self, r: int, c: int):
        """hvec position and factor for a realified upper-triangle cell."""
        dc = self.complex_dim
        if dc is None:
            d = self.dim
            pos = r * d - (r * (r - 1)) // 2 + (c - r)
            return pos, (1.0 if r == c else math.sqrt(2.0))
        if r >= dc:
            return None, 0.0       # lower-right duplicate of the real part
        if c < dc:
            if r == c:
                return r, 1.0
            pos = dc + (r * dc - (r * (r + 1)) // 2 + (c - r - 1))
            return pos, math.sqrt(2.0)
        j = c - dc
        if r >= j:
            return None, 0.0       # mirror copy of the imaginary part
        pos = dc + self.npair + (r * dc - (r * (r + 1)) // 2 + (j - r - 1))
        return pos, -math.sqrt(2.0)

    def rows(self, blk):
        """Yield (hvec position, var, coeff) triples and the constant vector."""
        g = np.zeros(self.size)
        trips = []
        for (r, c), val in blk.const.items():
            pos, fac = self._slot(r, c)
            if pos is not None:
                g[pos] += fac * val
        for (r, c), combo in blk.entries.items():
            pos, fac = self._slot(r, c)
            if pos is None:
                continue
            for v, co in combo.items():
                trips.append((pos + self.offset, v, fac * co))
        return trips, g

    def unpack(self, vec: np.ndarray):
        if self.complex_dim is None:
            d = self.dim
            m = np.zeros((d, d))
            vals = vec / self.scale
            m[self.r, self.c] = vals
            m[self.c, self.r] = vals
            return m
        dc = self.dim
        m = np.zeros((dc, dc), dtype=complex)
        diag = vec[:dc]
        a = vec[dc:dc + self.npair] / math.sqrt(2.0)
        bv = vec[dc + self.npair:] / math.sqrt(2.0)
        m[np.arange(dc), np.arange(dc)] = diag
        m[self.offr, self.offc] = a + 1j * bv
        m[self.offc, self.offr] = a - 1j * bv
        return m

    def pack(self, m: np.ndarray) -> np.ndarray:
        if self.complex_dim is None:
            return m[self.r, self.c] * self.scale
        dc = self.dim
        out = np.empty(self.size)
        out[:dc] = m.diagonal().real
        out[dc:dc + self.npair] = m[self.offr, self.offc].real * math.sqrt(2.0)
        out[dc + self.npair:] = m[self.offr, self.offc].imag * math.sqrt(2.0)
        return out

    def project(self, vec: np.ndarray) -> np.ndarray:
        m = self.unpack(vec)
        try:
            w, v = sla.eigh(m, driver="evd", check_finite=False, overwrite_a=True)
        except sla.LinAlgError:
            w, v = np.linalg.eigh(m)
        pos = w > 0
        if not np.any(pos):
            return np.zeros(self.size)
        if np.all(pos):
            return vec
        out = (v[:, pos] * w[pos]) @ v[:, pos].conj().T
        return self.pack(out)

    def min_eig(self, vec: np.ndarray) -> float:
        m = self.unpack(vec)
        return float(np.linalg.eigvalsh(m)[0])


class _Workspace:
    """Scaled, factored problem data shared between solves that differ only
    in the objective vector."""

    def __init__(self, prog: ConicProgram, settings: SolverSettings):
        self.settings = settings
        self.prog = prog
        n = prog.n_vars
        m_eq = prog.n_eq

        self.eq_in_kkt = settings.eq_mode == "kkt" and m_eq > 0
        cone_eq = 0 if self.eq_in_kkt else m_eq

        plans = []
        offset = cone_eq
        for blk in prog.blocks:
            plan = _BlockPlan(blk, offset)
            offset += plan.size
            plans.append(plan)
        self.plans = plans
        self.m_rows = offset
        self.m_eq = cone_eq

        g = np.zeros(self.m_rows)
        if cone_eq:
            g[:cone_eq] = -prog.b
        trips = []
        A = prog.A.tocoo()
        if cone_eq:
            trips.extend(zip(A.row.tolist(), A.col.tolist(), A.data.tolist()))
        for plan, blk in zip(plans, prog.blocks):
            t, gb = plan.rows(blk)
            trips.extend(t)
            g[plan.offset:plan.offset + plan.size] = gb
        rows = np.fromiter((t[0] for t in trips), dtype=np.int64, count=len(trips))
        cols = np.fromiter((t[1] for t in trips), dtype=np.int64, count=len(trips))
        data = np.fromiter((t[2] for t in trips), dtype=float, count=len(trips))

        # column scales: equality rows (always) and block rows jointly drive
        # a Ruiz pass; block rows are scaled uniformly per block
        a_rows = A.row + self.m_rows
        all_rows = np.concatenate([rows, a_rows]) if self.eq_in_kkt else rows
        all_cols = np.concatenate([cols, A.col]) if self.eq_in_kkt else cols
        all_data = np.concatenate([data, A.data]) if self.eq_in_kkt else data
        total_rows = self.m_rows + (m_eq if self.eq_in_kkt else 0)

        group = np.zeros(total_rows, dtype=np.int64)
        group[:cone_eq] = np.arange(cone_eq)
        gid = cone_eq
        for plan in plans:
            group[plan.offset:plan.offset + plan.size] = gid
            gid += 1
        if self.eq_in_kkt:
            group[self.m_rows:] = gid + np.arange(m_eq)
            gid += m_eq
        self.n_groups = gid

        e_all = np.ones(total_rows)
        d = np.ones(n)
        if prog.var_bounds is not None:
            # seed column scales with the known variable magnitudes
            d = np.clip(np.asarray(prog.var_bounds, dtype=float), 1e-3, 1e8)
        if settings.scaling and len(all_data):
            absdat = np.abs(all_data)
            for _ in range(10):
                cur = absdat * e_all[all_rows] * d[all_cols]
                rmax = np.zeros(self.n_groups)
                np.maximum.at(rmax, group[all_rows], cur)
                rmax[rmax == 0] = 1.0
                e_all /= np.sqrt(rmax[group])
                cur = absdat * e_all[all_rows] * d[all_cols]
                cmax = np.zeros(n)
                np.maximum.at(cmax, all_cols, cur)
                cmax[cmax == 0] = 1.0
                d /= np.sqrt(cmax)
        self.e, self.d = e_all[:self.m_rows], d
        self.H = sp.csr_matrix((data * self.e[rows] * d[cols], (rows, cols)),
                               shape=(self.m_rows, n))
        self.Ht = self.H.T.tocsr()
        self.g = self.e * g

        if self.eq_in_kkt:
            e_eq = e_all[self.m_rows:]
            self.e_eq = e_eq
            self.A_eq = sp.csr_matrix((A.data * e_eq[A.row] * d[A.col], (A.row, A.col)),
                                      shape=(m_eq, n))
            self.b_eq = e_eq * prog.b
            gram = (self.Ht @ self.H).tocsc()
            delta = 1e-9 * (1.0 + (gram.diagonal().max() if gram.nnz else 0.0))
            kkt = sp.bmat([[gram + delta * sp.eye(n), self.A_eq.T],
                           [self.A_eq, -delta * sp.eye(m_eq)]], format="csc")
            try:
                self.lu = spla.splu(kkt, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise NumericError(f"KKT factorization failed: {exc}") from exc
            self.n_eq_kkt = m_eq
        else:
            self.A_eq = None
            gram = (self.Ht @ self.H).tocsc()
            reg = 1e-10 * (1.0 + (gram.diagonal().max() if gram.nnz else 0.0))
            gram = gram + reg * sp.eye(n, format="csc")
            try:
                self.lu = spla.splu(gram, permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise NumericError(f"normal equations factorization failed: {exc}") from exc
            self.n_eq_kkt = 0

    def _step(self, s, u, ch, rho):
        rhs = self.Ht @ (s - u - self.g) - ch / rho
        if self.eq_in_kkt:
            sol = self.lu.solve(np.concatenate((rhs, self.b_eq)))
            x = sol[: self.prog.n_vars]
            self._nu = sol[self.prog.n_vars:]
        else:
            x = self.lu.solve(rhs)
        w = self.H @ x + self.g
        v = self.settings.alpha * w + (1.0 - self.settings.alpha) * s + u
        s2 = v.copy()
        s2[: self.m_eq] = 0.0
        for plan in self.plans:
            sl = slice(plan.offset, plan.offset + plan.size)
            s2[sl] = plan.project(v[sl])
        return x, w, s2, v - s2

    def run(self, c: np.ndarray) -> Solution:
        st = self.settings
        m = self.m_rows
        dc_scaled = self.d * c
        sigma = 1.0 / max(1.0, float(np.linalg.norm(dc_scaled)))
        ch = sigma * dc_scaled

        rho = st.rho
        s = np.zeros(m)
        u = np.zeros(m)
        s[self.m_eq:] = 0.0
        w = self.g.copy()
        for plan in self.plans:
            sl = slice(plan.offset, plan.offset + plan.size)
            s[sl] = plan.project(w[sl])
        x = np.zeros(self.prog.n_vars)

        e, d = self.e, self.d
        einv = 1.0 / e
        iters = 0
        status = "MaxIter"
        rp = rd = float("inf")
        c_norm = float(np.linalg.norm(c))
        stall = 0
        best_rp = float("inf")

        # safeguarded type-II Anderson acceleration on the (s, u) iterate;
        # a ring buffer holds map outputs G and residuals F column-wise with
        # an incrementally maintained Gram matrix
        mem = max(0, st.accel_memory)
        if mem >= 2:
            Fbuf = np.zeros((mem, 2 * m))     # row-major: one residual per row
            Gbuf = np.zeros((mem, 2 * m))
            FtF = np.zeros((mem, mem))
            active = 0
            slot = 0
        best_fnorm = float("inf")
        zcur = np.concatenate((s, u))
        f = np.empty(2 * m)
        s_prev_plain = s.copy()

        for k in range(1, st.max_iter + 1):
            iters = k
            x, w, s_plain, u_plain = self._step(s, u, ch, rho)
            np.subtract(s_plain, zcur[:m], out=f[:m])
            np.subtract(u_plain, zcur[m:], out=f[m:])
            ff = float(f @ f)
            fnorm = math.sqrt(ff)

            accept_plain = True
            if mem >= 2:
                if fnorm > 4.0 * best_fnorm:
                    active = 0
                    slot = 0
                    best_fnorm = float("inf")
                best_fnorm = min(best_fnorm, fnorm)
                if active:
                    Ftf = Fbuf[:active] @ f
                    # gram of the (f - F_i) differences from cached products
                    gram = ff - Ftf[:, None] - Ftf[None, :] + FtF[:active, :active]
                    rhs_aa = ff - Ftf
                    gram[np.diag_indices_from(gram)] += 1e-12 * (1.0 + abs(gram.diagonal()).max())
                    try:
                        coef = np.linalg.solve(gram, rhs_aa)
                        zcur[:m] = s_plain
                        zcur[m:] = u_plain
                        zcur *= 1.0 - float(coef.sum())
                        zcur += coef @ Gbuf[:active]
                        s, u = zcur[:m], zcur[m:]
                        accept_plain = False
                    except np.linalg.LinAlgError:
                        pass
                Fbuf[slot] = f
                Gbuf[slot, :m] = s_plain
                Gbuf[slot, m:] = u_plain
                active = min(active + 1, mem)
                newcol = Fbuf[:active] @ f
                FtF[:active, slot] = newcol
                FtF[slot, :active] = newcol
                slot = (slot + 1) % mem
            if accept_plain:
                zcur[:m] = s_plain
                zcur[m:] = u_plain
                s, u = zcur[:m], zcur[m:]

            if k % st.check_every == 0 or k == st.max_iter:
                pvec = einv * (w - s_plain)
                denom = 1.0 + max(float(np.linalg.norm(einv * w)),
                                  float(np.linalg.norm(einv * s_plain)))
                rp = float(np.linalg.norm(pvec)) / denom
                if self.eq_in_kkt and self.n_eq_kkt:
                    eqv = (self.A_eq @ x - self.b_eq) / self.e_eq
                    rp = max(rp, float(np.linalg.norm(eqv))
                             / (1.0 + float(np.linalg.norm(self.prog.b))))
                dvec = (rho / sigma) * (self.Ht @ (s_plain - s_prev_plain)) / d
                y_norm = float(np.linalg.norm((self.Ht @ (rho * u_plain)) / d)) / sigma
                rd = float(np.linalg.norm(dvec)) / (1.0 + c_norm + y_norm)
                if st.verbose and (k % (st.check_every * 40) == 0):
                    print(f"    iter {k:6d}  rp {rp:.3e}  rd {rd:.3e}  rho {rho:.2e}")
                if rp < best_rp * 0.999:
                    best_rp = rp
                    stall = 0
                else:
                    stall += 1
                if rp <= st.eps and rd <= st.eps:
                    status = "Optimal"
                    break
                if not np.isfinite(rp) or not np.isfinite(rd):
                    status = "Infeasible-like"
                    break
                if stall > 4000 and rp > 1e2:
                    status = "Infeasible-like"
                    break

            if k % st.rho_interval == 0 and rp < float("inf"):
                ratio = rp / max(rd, 1e-12)
                if ratio > 5.0:
                    fac = min(math.sqrt(ratio), 10.0)
                elif ratio < 0.2:
                    fac = 1.0 / min(math.sqrt(1.0 / ratio), 10.0)
                else:
                    fac = 1.0
                if fac != 1.0:
                    zcur[m:] *= 1.0 / fac
                    s, u = zcur[:m], zcur[m:]
                    rho *= fac
                    if mem >= 2:
                        active = 0
                        slot = 0
                    best_fnorm = float("inf")

            s_prev_plain = s_plain

        # final x from the last plain pass keeps (x, s, u) consistent
        x_full = d * x
        obj = float(np.dot(c, x_full)) + self.prog.objective_offset
        cert = self._certificate(ch, sigma, s, u, w, rho)
        return Solution(x_full, obj, rp, rd, iters, status, cert)

    def _certificate(self, ch, sigma, s, u, w, rho):
        """Valid lower bound on the minimum from the last x-update.

        The x-step's optimality identity supplies multipliers that satisfy
        stationarity exactly up to the factorization regularizer; projecting
        the conic part onto the PSD cones leaves a defect proportional to the
        primal residual.  With per-variable magnitude bounds, any such pair
        (lam, Z >= 0) gives  c'x >= lam'b - <Z, C> - sum_i |r_i| bound_i.
        """
        vb = self.prog.var_bounds
        if vb is None or not np.all(np.isfinite(vb)):
            return None
        yfull = rho * (s - w - u)
        zfull = np.zeros(self.m_rows)
        for plan in self.plans:
            sl = slice(plan.offset, plan.offset + plan.size)
            zfull[sl] = plan.project(yfull[sl])
        if self.eq_in_kkt:
            # refit the equality multiplier around the projected conic dual
            target = ch - self.Ht @ zfull
            lam = self._polish_lambda(target)
            lam_b = float(lam @ self.b_eq)
            r_hat = target - self.A_eq.T @ lam
            z_g = float(zfull @ self.g)
        else:
            lam = yfull[: self.m_eq]
            lam_b = float(lam @ (-self.g[: self.m_eq])) if self.m_eq else 0.0
            zfull[: self.m_eq] = lam
            r_hat = ch - self.Ht @ zfull
            z_g = float(zfull[self.m_eq:] @ self.g[self.m_eq:])
        slack = float(np.sum(np.abs(r_hat) * (vb / self.d)))
        value = (lam_b - z_g - slack) / sigma + self.prog.objective_offset
        # the zero multiplier is also valid and is exact for constant
        # objectives; keep the better of the two
        trivial = -float(np.sum(np.abs(ch) * (vb / self.d))) / sigma \
            + self.prog.objective_offset
        return max(value, trivial)

    def _polish_lambda(self, target: np.ndarray) -> np.ndarray:
        """Least-squares equality multiplier: argmin ||target - A' lam||."""
        if getattr(self, "_aat_lu", None) is None:
            m_eq = self.n_eq_kkt
            aat = (self.A_eq @ self.A_eq.T).tocsc()
            delta = 1e-10 * (1.0 + (aat.diagonal().max() if aat.nnz else 0.0))
            self._aat_lu = spla.splu(aat + delta * sp.eye(m_eq, format="csc"))
        return self._aat_lu.solve(self.A_eq @ target)


def solve(p: ConicProgram, settings: SolverSettings | None = None) -> Solution:
    """Solve the conic program; the solution carries residual certificates."""
    settings = settings or SolverSettings()
    n_orig = p.n_vars
    if settings.presolve:
        red = _presolve(p)
        prog = red.program
    else:
        red = None
        prog = p

    if prog.n_vars == 0:
        # fully pinned by equalities; check cone feasibility of the constants
        ok = True
        for blk in prog.blocks:
            if blk.dim and blk.const:
                m = np.zeros((blk.dim, blk.dim))
                for (r, c), val in blk.const.items():
                    m[r, c] += val
                    if r != c:
                        m[c, r] += val
                if np.linalg.eigvalsh(m)[0] < -1e-8:
                    ok = False
        x = red.lift(np.zeros(0), n_orig) if red is not None else np.zeros(0)
        return Solution(x, prog.objective_offset, 0.0, 0.0, 0,
                        "Optimal" if ok else "Infeasible-like")

    ws = _Workspace(prog, settings)
    sol = ws.run(prog.c)
    if red is not None:
        sol.x = red.lift(sol.x, n_orig)
    return sol


def bounds(spec, settings: SolverSettings | None = None):
    """Certified (lower, upper) pair from a minimizing and a maximizing solve
    of the same relaxation; both Solution records are returned alongside."""
    from ..hierarchy import RelaxationSpec, assemble  # local import, no cycle

    settings = settings or SolverSettings()
    if isinstance(spec, ConicProgram):
        prog = spec
    elif isinstance(spec, RelaxationSpec):
        prog = assemble(spec)
    else:
        raise DnpoError(f"cannot take bounds of {type(spec).__name__}")

    n_orig = prog.n_vars
    if settings.presolve:
        red = _presolve(prog)
        work = red.program
    else:
        red = None
        work = prog

    if work.n_vars == 0:
        base = solve(work, settings)
        x = red.lift(base.x, n_orig) if red is not None else base.x
        lo = Solution(x, base.objective_value, 0.0, 0.0, 0, base.status)
        hi = Solution(x.copy(), base.objective_value, 0.0, 0.0, 0, base.status)
        return lo.objective_value, hi.objective_value, lo, hi

    ws = _Workspace(work, settings)
    lo = ws.run(work.c)
    hi = ws.run(-work.c)
    off = work.objective_offset
    hi.objective_value = -(hi.objective_value - 2 * off)
    if hi.certified is not None:
        hi.certified = -(hi.certified - 2 * off)
    if red is not None:
        lo.x = red.lift(lo.x, n_orig)
        hi.x = red.lift(hi.x, n_orig)
    lower = lo.certified if lo.certified is not None else lo.objective_value
    upper = hi.certified if hi.certified is not None else hi.objective_value
    return lower, upper, lo, hi
