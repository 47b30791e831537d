"""Brute-force ground truth: dense/sparse quantum simulation of quenches,
the exact two-projector optimum, and feasible-moment generation used to
validate assembled relaxations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from . import algebra as alg
from .algebra import BOUND0, BOUND1, INTERVAL, Polynomial
from .errors import DnpoError, NotHermitian, TooLarge, Unsupported

_PAULI = {
    1: np.array([[0, 1], [1, 0]], dtype=complex),
    2: np.array([[0, -1j], [1j, 0]], dtype=complex),
    3: np.array([[1, 0], [0, -1]], dtype=complex),
}

MAX_DENSE_SITES = 12


@dataclass
class DenseOperator:
    dim: int
    entries: np.ndarray

    @staticmethod
    def identity(n_qubits: int) -> "DenseOperator":
        d = 2 ** n_qubits
        return DenseOperator(d, np.eye(d, dtype=complex))


def site_operator(n: int, site: int, axis: int) -> sp.csr_matrix:
    """sigma_axis acting on the given site of an n-qubit register; site 1 is
    the most significant factor of the tensor product."""
    if not (1 <= site <= n):
        raise DnpoError(f"site {site} outside 1..{n}")
    left = sp.identity(2 ** (site - 1), format="csr", dtype=complex)
    right = sp.identity(2 ** (n - site), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, sp.csr_matrix(_PAULI[axis])), right, format="csr")


def hamiltonian_matrix(h, n: int) -> sp.csr_matrix:
    """Sparse matrix of a spin Hamiltonian (anything exposing dense_terms)."""
    out = sp.csr_matrix((2 ** n, 2 ** n), dtype=complex)
    for coeff, sites in h.dense_terms(n):
        term = sp.identity(2 ** n, format="csr", dtype=complex) * coeff
        for site, axis in sites:
            term = term @ site_operator(n, site, axis)
        out = out + term
    return out


def observable_matrix(obs: Polynomial, n: int) -> sp.csr_matrix:
    out = sp.csr_matrix((2 ** n, 2 ** n), dtype=complex)
    for m, c in obs.terms.items():
        if m.tpow:
            raise DnpoError("observable cannot depend on time")
        term = sp.identity(2 ** n, format="csr", dtype=complex) * c
        for v in m.word:
            if v.kind != "p":
                raise Unsupported("dense oracle handles Pauli observables only")
            term = term @ site_operator(n, v.idx, v.axis)
        out = out + term
    return out


def basis_state(bits: str) -> np.ndarray:
    n = len(bits)
    idx = 0
    for ch in bits:
        if ch not in "01":
            raise DnpoError(f"bad bit {ch!r} in initial state")
        idx = 2 * idx + (1 if ch == "1" else 0)
    psi = np.zeros(2 ** n, dtype=complex)
    psi[idx] = 1.0
    return psi


def _rk4_evolve(Hs: sp.csr_matrix, psi: np.ndarray, total: float, steps: int = 2000) -> np.ndarray:
    dt = total / steps
    for _ in range(steps):
        k1 = -1j * (Hs @ psi)
        k2 = -1j * (Hs @ (psi + 0.5 * dt * k1))
        k3 = -1j * (Hs @ (psi + 0.5 * dt * k2))
        k4 = -1j * (Hs @ (psi + dt * k3))
        psi = psi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return psi


def exact_quench(bits: str, h, tau: float, observable: Polynomial,
                 method: str = "expm") -> float:
    """<bits| e^{iH tau} f e^{-iH tau} |bits> for a computational-basis start."""
    n = len(bits)
    if n > MAX_DENSE_SITES:
        raise TooLarge(f"{n} sites exceeds the dense cap of {MAX_DENSE_SITES}")
    if not observable.is_hermitian():
        raise NotHermitian("observable must be Hermitian")
    Hs = hamiltonian_matrix(h, n)
    F = observable_matrix(observable, n)
    psi = basis_state(bits)
    if tau != 0.0:
        if method == "expm":
            psi = spla.expm_multiply(-1j * tau * Hs, psi)
        elif method == "rk4":
            psi = _rk4_evolve(Hs, psi, tau)
        else:
            raise DnpoError(f"unknown method {method!r}")
    val = np.vdot(psi, F @ psi)
    if abs(val.imag) > 1e-9:
        raise NotHermitian(f"expectation has imaginary part {val.imag:.2e}")
    return float(val.real)


def exact_p2() -> float:
    """Minimum state average of exp(Y0 Y1 + Y1 Y0) over pairs of projectors,
    found by a line search over the single angle parametrizing them."""

    def value(theta: float) -> float:
        y0 = np.array([[1.0, 0.0], [0.0, 0.0]])
        y1 = 0.5 * np.array([[1 + np.cos(theta), np.sin(theta)],
                             [np.sin(theta), 1 - np.cos(theta)]])
        m = y0 @ y1 + y1 @ y0
        w, v = np.linalg.eigh(m)
        return float(np.exp(w).min())

    grid = np.linspace(0.0, 2 * np.pi, 721)
    vals = [value(t) for t in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(value, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.fun)


def p2_candidate(theta: float) -> float:
    """Objective value of the two-projector family at a specific angle."""
    y0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    y1 = 0.5 * np.array([[1 + np.cos(theta), np.sin(theta)],
                         [np.sin(theta), 1 - np.cos(theta)]])
    w = np.linalg.eigvalsh(y0 @ y1 + y1 @ y0)
    return float(np.exp(w).min())


_GAUSS_N = 64


def _gauss01(npts: int = _GAUSS_N):
    x, w = np.polynomial.legendre.leggauss(npts)
    return (x + 1.0) / 2.0, w / 2.0


def random_feasible_moments(spec, seed: int = 0, assembled=None) -> np.ndarray:
    """Moment vector induced by an exact small-chain representation of the
    quench: exact Pauli matrices, exact time evolution, Gauss-Legendre time
    quadrature.  Aligned with the columns of assemble(spec)."""
    from .hierarchy import assemble_detailed

    wit = getattr(spec, "witness", None)
    if wit is None or not hasattr(wit, "hamiltonian"):
        raise Unsupported("no sampling recipe attached to this relaxation")
    if getattr(spec, "ti_mode", False):
        raise Unsupported("feasible-moment sampling needs a finite chain")
    n = wit.n_sites
    if n > 4:
        raise Unsupported("feasible-moment sampling capped at 4 sites")

    det = assembled if assembled is not None else assemble_detailed(spec)
    rng = np.random.default_rng(seed)
    bits = wit.bits if wit.bits is not None else "".join(
        rng.choice(["0", "1"]) for _ in range(n))

    Hd = hamiltonian_matrix(wit.hamiltonian, n).toarray()
    evals, evecs = np.linalg.eigh(Hd)
    psi0 = basis_state(bits)

    def state_at(t: float) -> np.ndarray:
        phases = np.exp(-1j * evals * (wit.tau * t))
        return evecs @ (phases * (evecs.conj().T @ psi0))

    tgrid, wgrid = _gauss01()
    states = [state_at(t) for t in tgrid]
    psi1 = state_at(1.0)

    site_ops = {(s, a): site_operator(n, s, a).toarray()
                for s in range(1, n + 1) for a in (1, 2, 3)}

    def word_matrix(word) -> np.ndarray:
        m = np.eye(2 ** n, dtype=complex)
        for v in word:
            m = m @ site_ops[(v.idx, v.axis)]
        return m

    x = np.zeros(det.program.n_vars)
    assigned = np.zeros(det.program.n_vars, dtype=bool)
    for mono, (re, im, sign) in det.index.monomials():
        if im >= 0:
            raise Unsupported("sampling supports Hermitian Pauli moments only")
        tags = {v.tag for v in mono.word}
        if any(v.kind != "p" for v in mono.word):
            raise Unsupported("sampling supports Pauli scenarios only")
        col = det.column_of(re)
        if col is None:
            continue
        if not mono.word:
            val = float(np.sum(wgrid * tgrid ** mono.tpow)) if mono.tpow else 1.0
        elif tags == {BOUND0}:
            val = np.vdot(psi0, word_matrix(mono.word) @ psi0).real
        elif tags == {BOUND1}:
            val = np.vdot(psi1, word_matrix(mono.word) @ psi1).real
        elif tags == {INTERVAL}:
            W = word_matrix(mono.word)
            samples = np.array([np.vdot(s, W @ s).real for s in states])
            val = float(np.sum(wgrid * (tgrid ** mono.tpow) * samples))
        else:
            raise Unsupported(f"mixed-tag monomial {mono!r}")
        if assigned[col] and abs(x[col] - val) > 1e-8:
            raise DnpoError(f"inconsistent merged moment at {mono!r}")
        x[col] = val
        assigned[col] = True
    return x
