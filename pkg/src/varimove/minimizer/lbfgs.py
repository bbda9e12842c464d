"""Limited-memory BFGS with Armijo backtracking and a sparse preconditioner.

The line search treats a ``+inf`` objective (violated admissibility guards)
as a failed trial and backtracks.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import LineSearchStall, MaxIterations, SolverFailure

EPS = np.finfo(float).eps


@dataclass
class MinimizeResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    backtracks: int
    evaluations: int
    grad_norm: float
    history: list


def color_columns(pattern: sp.spmatrix) -> np.ndarray:
    """Greedy coloring so that same-colored columns share no nonzero row."""
    P = sp.csr_matrix(pattern, dtype=bool).astype(np.int8)
    conflict = (P.T @ P).tocoo()
    g = nx.Graph()
    g.add_nodes_from(range(P.shape[1]))
    mask = conflict.row != conflict.col
    g.add_edges_from(zip(conflict.row[mask].tolist(), conflict.col[mask].tolist()))
    coloring = nx.greedy_color(g, strategy="largest_first")
    return np.array([coloring[i] for i in range(P.shape[1])], dtype=np.int64)


def fd_hessian(grad, x, pattern: sp.spmatrix, colors: np.ndarray, step: float = 1e-7) -> sp.csr_matrix:
    """Sparse Hessian from forward differences of ``grad`` along colored directions.

    Returns the symmetrized estimate.
    """
    coo = sp.coo_matrix(pattern)
    g0 = grad(x)
    n_col = int(colors.max()) + 1 if len(colors) else 0
    diffs = np.empty((n_col, len(x)))
    for c in range(n_col):
        d = (colors == c).astype(float)
        diffs[c] = (grad(x + step * d) - g0) / step
    vals = diffs[colors[coo.col], coo.row]
    H = sp.csr_matrix((vals, (coo.row, coo.col)), shape=pattern.shape)
    return ((H + H.T) * 0.5).tocsr()


class SparsePreconditioner:
    """Apply ``(H + sigma I)^{-1}`` by a sparse LU factorization."""

    def __init__(self, H: sp.spmatrix, shift: float = 0.0):
        n = H.shape[0]
        self.shift = shift
        self.lu = splu((H + shift * sp.eye(n)).tocsc())

    def __call__(self, r):
        return self.lu.solve(r)


def make_preconditioner(H: sp.spmatrix, g: np.ndarray):
    """Factor ``H``, shifting it until ``-H^{-1} g`` is a descent direction."""
    scale = float(np.max(np.abs(H.diagonal()))) if H.shape[0] else 1.0
    shift = 0.0
    for _ in range(12):
        try:
            pc = SparsePreconditioner(H, shift)
            d = pc(g)
            if np.all(np.isfinite(d)) and (not np.any(g) or g @ d > 0):
                return pc
        except RuntimeError:
            pass
        shift = scale * 1e-8 if shift == 0 else shift * 10.0
    return None


def lbfgs(fun, x0, *, precond=None, memory=10, grad_tol=1e-8, max_iter=500,
          c1=1e-4, max_backtracks=60) -> MinimizeResult:
    """Minimize ``fun`` (returning ``(f, g)``) from an admissible ``x0``.

    Stops when ``|g|_inf <= grad_tol * (1 + |f|)``. Trials with ``f = inf``
    are rejected. A trial that fails the Armijo test only by roundoff
    (``f_new <= f + 10 eps (1 + |f|)``) is still accepted if it shrinks the
    gradient, so that tight tolerances can be reached.

    Raises
    ------
    LineSearchStall, MaxIterations
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not np.isfinite(f):
        raise SolverFailure("starting point is not admissible")
    S, Y, RHO = deque(maxlen=memory), deque(maxlen=memory), deque(maxlen=memory)
    apply_h0 = precond if precond is not None else (lambda r: r)
    backtracks = 0
    evals = 1
    history = [f]
    for it in range(max_iter + 1):
        gnorm = float(np.max(np.abs(g))) if len(g) else 0.0
        if gnorm <= grad_tol * (1.0 + abs(f)):
            return MinimizeResult(x, f, g, it, backtracks, evals, gnorm, history)
        if it == max_iter:
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, r in zip(reversed(S), reversed(Y), reversed(RHO)):
            a = r * (s @ q)
            alphas.append(a)
            q -= a * y
        z = apply_h0(q)
        if not S and precond is None:
            z = z / max(gnorm, 1.0)
        for (s, y, r), a in zip(zip(S, Y, RHO), reversed(alphas)):
            b = r * (y @ z)
            z += (a - b) * s
        d = -z
        slope = float(g @ d)
        if not slope < 0:
            S.clear(); Y.clear(); RHO.clear()
            d = -apply_h0(g)
            slope = float(g @ d)
            if not slope < 0:
                d = -g
                slope = -float(g @ g)
        alpha = 1.0
        tol_f = 10.0 * EPS * (1.0 + abs(f))
        gn2 = float(g @ g)
        for bt in range(max_backtracks + 1):
            xn = x + alpha * d
            fn, gn = fun(xn)
            evals += 1
            if np.isfinite(fn):
                if fn <= f + c1 * alpha * slope:
                    break
                if fn <= f + tol_f and float(gn @ gn) < gn2:
                    break
            alpha *= 0.5
            backtracks += 1
        else:
            raise LineSearchStall(f"no admissible decrease after {max_backtracks} backtracks "
                                  f"(|g|_inf = {gnorm:.3e}, f = {f:.17g})")
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s); Y.append(y); RHO.append(1.0 / sy)
        x, f, g = xn, fn, gn
        history.append(f)
    raise MaxIterations(f"{max_iter} iterations without reaching |g|_inf <= "
                        f"{grad_tol:g} (1 + |f|); |g|_inf = {gnorm:.3e}")
