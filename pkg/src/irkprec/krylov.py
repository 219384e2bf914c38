"""Left-preconditioned GMRES over stage vectors, without restart."""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ResourceLimitError

DIRECT_GUARD = 600000  # max s*N for reference_solve
BREAKDOWN_TOL = 1e-14


@dataclass
class SolveReport:
    """Instrumentation of one GMRES run.

    rel_residual is the preconditioned relative residual recomputed from
    the returned iterate; true_rel_residual is the unpreconditioned one.
    residual_history holds the per-iteration preconditioned estimates.
    """

    iterations: int
    wall_time: float
    rel_residual: float
    true_rel_residual: float
    converged: bool
    breakdown: bool = False
    rel_error: Optional[float] = None
    residual_history: list = field(default_factory=list)
    true_residual_history: Optional[list] = None


def _as_apply(obj):
    if obj is None:
        return lambda v: v
    if callable(obj):
        return obj
    if hasattr(obj, "apply_inverse"):
        return obj.apply_inverse
    raise TypeError(f"cannot interpret {type(obj).__name__} as a preconditioner")


def gmres(op, prec, b, tol=1e-8, max_iter=500, track_true_residual=False):
    """Full GMRES with modified Gram-Schmidt on the left-preconditioned
    system, zero initial guess.

    Convergence is declared when ||P^-1 (b - A x)|| / ||P^-1 b|| <= tol,
    monitored through the Givens recurrence. Exceeding max_iter returns
    the report with converged=False rather than raising; an exact Arnoldi
    breakdown returns the current (exact) iterate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    apply_prec = _as_apply(prec)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    t0 = time.perf_counter()

    pb = apply_prec(b)
    beta = np.linalg.norm(pb)
    norm_b = np.linalg.norm(b)
    if beta == 0.0:
        return np.zeros(n), SolveReport(0, time.perf_counter() - t0, 0.0, 0.0, True)

    V = [pb / beta]
    H = np.zeros((max_iter + 1, max_iter))
    cs = np.zeros(max_iter)
    sn = np.zeros(max_iter)
    g = np.zeros(max_iter + 1)
    g[0] = beta
    history = []
    true_history = [] if track_true_residual else None
    converged = False
    breakdown = False
    k = 0

    def current_solution(j):
        y = np.linalg.solve(np.triu(H[:j, :j]), g[:j])
        x = np.zeros(n)
        for i in range(j):
            x += y[i] * V[i]
        return x

    for j in range(max_iter):
        w = apply_prec(op.apply(V[j]))
        for i in range(j + 1):
            H[i, j] = V[i] @ w
            w -= H[i, j] * V[i]
        hnext = np.linalg.norm(w)
        H[j + 1, j] = hnext

        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        r = np.hypot(H[j, j], H[j + 1, j])
        cs[j] = H[j, j] / r
        sn[j] = H[j + 1, j] / r
        H[j, j] = r
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]

        k = j + 1
        res = abs(g[j + 1]) / beta
        history.append(res)
        if track_true_residual:
            xj = current_solution(k)
            true_history.append(np.linalg.norm(b - op.apply(xj)) / norm_b)
        if res <= tol:
            converged = True
            break
        if hnext <= BREAKDOWN_TOL * beta:
            breakdown = True
            converged = True
            break
        V.append(w / hnext)

    x = current_solution(k)
    prec_res = np.linalg.norm(apply_prec(b - op.apply(x))) / beta
    true_res = np.linalg.norm(b - op.apply(x)) / norm_b
    report = SolveReport(
        iterations=k,
        wall_time=time.perf_counter() - t0,
        rel_residual=prec_res,
        true_rel_residual=true_res,
        converged=converged,
        breakdown=breakdown,
        residual_history=history,
        true_residual_history=true_history,
    )
    return x, report


def reference_solve(op, b):
    """Sparse direct solution of the full stage system; the oracle for
    relative-error columns."""
    if op.size > DIRECT_GUARD:
        raise ResourceLimitError(
            f"s*N = {op.size} exceeds direct-solve guard {DIRECT_GUARD}")
    lu = spla.splu(op.to_sparse())
    return lu.solve(np.asarray(b, dtype=float))


def residual_history_csv(report):
    """CSV text (iteration, preconditioned, unpreconditioned) for one run."""
    lines = ["iteration,preconditioned_residual,unpreconditioned_residual"]
    for i, r in enumerate(report.residual_history, start=1):
        if report.true_residual_history is not None:
            t = f"{report.true_residual_history[i - 1]:.16e}"
        else:
            t = ""
        lines.append(f"{i},{r:.16e},{t}")
    return "\n".join(lines) + "\n"
