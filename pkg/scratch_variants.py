import sys, time
import numpy as np, cvxpy as cp
import scipy.sparse as sp
from dnpo import algebra as alg
from dnpo.algebra import Polynomial as P, generic, INTERVAL, BOUND0, RewriteSystem, ODESystem
from dnpo.hierarchy import RelaxationSpec, build_word_basis, assemble
from dnpo.scenarios import p2_variables, E2


def p2_variant(moment_deg, h_deg, tmax, extra_y_loc=False, x1_pos=True, loc_deg=None):
    y0, y1, x, x1 = p2_variables()
    rules = (((y0, y0), P.of(y0)), ((y1, y1), P.of(y1)))
    rw = RewriteSystem(rules)
    growth = P.of(y0) * P.of(y1) + P.of(y1) * P.of(y0)
    ode = ODESystem({x: alg.mul(growth, P.of(x), rw)}, scale=1.0)
    basis = build_word_basis([x, y0, y1, x1], moment_deg, rw, True, INTERVAL)
    locs = [(INTERVAL, P.of(x)), (INTERVAL, P.scalar(E2) - P.of(x)),
            (INTERVAL, P.scalar(E2) - P.of(x1))]
    if x1_pos:
        locs.append((INTERVAL, P.of(x1)))
    if extra_y_loc:
        for yv in (y0, y1):
            locs += [(INTERVAL, P.of(yv)), (INTERVAL, P.one() - P.of(yv))]
    return RelaxationSpec(rw=rw, ode=ode, bases=[basis], objective=P.of(x1),
                          localizers=locs, t_max_pow=tmax, max_h_degree=h_deg,
                          boundary_images={generic(2, BOUND0): P.one()})


def clarabel_value(prog, verbose=False):
    x = cp.Variable(prog.n_vars)
    cons = [prog.A @ x == prog.b] if prog.n_eq else []
    for blk in prog.blocks:
        d = blk.dim
        rows, cols, vals = [], [], []
        for (r, c), combo in blk.entries.items():
            for v, co in combo.items():
                rows.append(r * d + c); cols.append(v); vals.append(co)
                if r != c:
                    rows.append(c * d + r); cols.append(v); vals.append(co)
        M = sp.csr_matrix((vals, (rows, cols)), shape=(d * d, prog.n_vars))
        C = np.zeros(d * d)
        for (r, c), val in blk.const.items():
            C[r * d + c] += val
            if r != c:
                C[c * d + r] += val
        cons.append(cp.reshape(M @ x + C, (d, d), order="C") >> 0)
    return cp.Problem(cp.Minimize(prog.c @ x), cons).solve(solver=cp.CLARABEL, verbose=verbose)


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "A"
    table = {
        "A": dict(moment_deg=2, h_deg=4, tmax=4),
        "B": dict(moment_deg=4, h_deg=4, tmax=4),
        "C": dict(moment_deg=4, h_deg=8, tmax=8),
        "D": dict(moment_deg=3, h_deg=6, tmax=6),
        "E": dict(moment_deg=2, h_deg=4, tmax=4, extra_y_loc=True),
        "F": dict(moment_deg=2, h_deg=4, tmax=4, x1_pos=False),
        "G": dict(moment_deg=3, h_deg=4, tmax=4),
    }
    spec = p2_variant(**table[which])
    t0 = time.time()
    prog = assemble(spec)
    print(f"{which}: vars={prog.n_vars} eq={prog.n_eq} blocks={[b.dim for b in prog.blocks]} "
          f"assemble {time.time()-t0:.1f}s", flush=True)
    t0 = time.time()
    val = clarabel_value(prog)
    print(f"{which} -> {val:.8f}   ({time.time()-t0:.1f}s)  [target 0.45363658]", flush=True)
