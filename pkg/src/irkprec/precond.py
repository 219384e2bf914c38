"""Block preconditioners I (x) M + h_t^mu P (x) F applied by stage-wise
forward or backward substitution with exact or multigrid diagonal subsolves.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_mass, assemble_stiffness
from .butcher import PreconditionerKind, butcher_preconditioner_matrix, is_lower_kind
from .errors import SubsolveError
from .stageop import StageOperator

SMOOTHER_DAMPING = 2.0 / 3.0
PRE_SWEEPS = 2
POST_SWEEPS = 2


class GridLevel:
    """One level of a multigrid hierarchy for a fixed subsystem matrix."""

    def __init__(self, S, prolongation=None):
        self.S = S.tocsr()
        self.diag = self.S.diagonal()
        if np.any(self.diag == 0.0):
            raise SubsolveError("zero diagonal entry in multigrid level matrix")
        self.prolongation = prolongation  # from the next coarser level
        self.coarse_lu = None             # set on the coarsest level


def _jacobi(level, x, b, sweeps):
    for _ in range(sweeps):
        x = x + SMOOTHER_DAMPING * (b - level.S @ x) / level.diag
    return x


def vcycle(levels, r, level):
    """One V(2,2) cycle for the system levels[level].S x = r.

    Damped Jacobi (omega = 2/3) smoothing, residual restriction by the
    transpose of the interpolation, exact solve on the coarsest level.
    """
    lev = levels[level]
    if level == 0:
        return lev.coarse_lu.solve(r)
    x = _jacobi(lev, np.zeros_like(r), r, PRE_SWEEPS)
    resid = r - lev.S @ x
    coarse = vcycle(levels, lev.prolongation.T @ resid, level - 1)
    x = x + lev.prolongation @ coarse
    return _jacobi(lev, x, r, POST_SWEEPS)


class ExactSubsolver:
    """Sparse direct solver for one diagonal block M + h_t^mu p F."""

    def __init__(self, S):
        self.lu = spla.splu(S.tocsc())

    def solve(self, r):
        return self.lu.solve(r)


class VCycleSubsolver:
    """Single geometric V-cycle on re-assembled coarse operators."""

    def __init__(self, levels):
        self.levels = levels

    def solve(self, r):
        return vcycle(self.levels, r, len(self.levels) - 1)


class BlockPreconditioner:
    """Ready-to-apply block preconditioner.

    Lower-triangular kinds substitute forward over stages, upper-triangular
    kinds backward; J solves the diagonal blocks independently.
    """

    def __init__(self, kind, P, M, F, h_t, mu, subsolvers, subsolve):
        self.kind = kind
        self.P = P
        self.M = M
        self.F = F
        self.h_t = float(h_t)
        self.mu = int(mu)
        self.subsolvers = subsolvers    # one per stage
        self.subsolve = subsolve
        self.s = P.shape[0]
        self.N = M.shape[0]
        self.lower = is_lower_kind(kind)

    @property
    def size(self):
        return self.s * self.N

    def as_stage_operator(self):
        """The operator I (x) M + h_t^mu P (x) F this preconditioner inverts."""
        return StageOperator(self.P, self.M, self.F, self.h_t, self.mu)

    def apply_inverse(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape != (self.size,):
            raise ValueError(f"expected stage vector of length {self.size}, got {r.shape}")
        s, N = self.s, self.N
        scale = self.h_t ** self.mu
        z = np.empty_like(r)
        stages = range(s) if self.lower else range(s - 1, -1, -1)
        for i in stages:
            acc = r[i * N:(i + 1) * N].copy()
            inner = range(i) if self.lower else range(i + 1, s)
            for j in inner:
                pij = self.P[i, j]
                if pij != 0.0:
                    acc -= scale * pij * (self.F @ z[j * N:(j + 1) * N])
            z[i * N:(i + 1) * N] = self.subsolvers[i].solve(acc)
        return z

    def apply_inverse_transpose(self, r):
        """Inverse-transpose application; M, F are symmetric so this is
        substitution with P^T (triangularity flips)."""
        r = np.asarray(r, dtype=float)
        s, N = self.s, self.N
        scale = self.h_t ** self.mu
        z = np.empty_like(r)
        stages = range(s - 1, -1, -1) if self.lower else range(s)
        for i in stages:
            acc = r[i * N:(i + 1) * N].copy()
            inner = range(i + 1, s) if self.lower else range(i)
            for j in inner:
                pji = self.P[j, i]
                if pji != 0.0:
                    acc -= scale * pji * (self.F @ z[j * N:(j + 1) * N])
            z[i * N:(i + 1) * N] = self.subsolvers[i].solve(acc)
        return z


def _assemble_level_matrices(hierarchy, coeff):
    out = []
    for m in hierarchy.levels:
        out.append((assemble_mass(m), assemble_stiffness(m, coeff)))
    return out


def build_preconditioner(tableau, kind, M, F, h_t, mu, subsolve="exact",
                         hierarchy=None, coeff=None):
    """Build one of the five block preconditioners for the stage system.

    subsolve="exact" factorizes each diagonal block M + h_t^mu p_ii F;
    subsolve="vcycle" builds a geometric multigrid hierarchy per distinct
    diagonal entry, with the per-level matrices re-assembled on each mesh
    of `hierarchy` (required, together with coeff, in that mode).
    """
    kind = PreconditionerKind(kind)
    P = butcher_preconditioner_matrix(tableau, kind)
    diag = np.diag(P)
    if np.any(diag == 0.0):
        raise SubsolveError(f"preconditioner {kind.value} has a zero diagonal entry")
    scale = h_t ** mu

    if subsolve == "exact":
        cache = {}
        subsolvers = []
        for p in diag:
            if p not in cache:
                cache[p] = ExactSubsolver(M + scale * p * F)
            subsolvers.append(cache[p])
    elif subsolve == "vcycle":
        if hierarchy is None or coeff is None:
            raise ValueError("vcycle subsolves need hierarchy and coeff")
        if hierarchy.finest.num_nodes != M.shape[0]:
            raise ValueError("hierarchy finest mesh does not match M")
        level_mf = _assemble_level_matrices(hierarchy, coeff)
        level_mf[-1] = (M, F)  # the operator's own matrices on the finest level
        cache = {}
        subsolvers = []
        for p in diag:
            if p not in cache:
                levels = []
                for li, (Ml, Fl) in enumerate(level_mf):
                    prol = hierarchy.prolongations[li - 1] if li > 0 else None
                    levels.append(GridLevel(Ml + scale * p * Fl, prol))
                levels[0].coarse_lu = spla.splu(levels[0].S.tocsc())
                cache[p] = VCycleSubsolver(levels)
            subsolvers.append(cache[p])
    else:
        raise ValueError(f"unknown subsolve mode {subsolve!r}")

    return BlockPreconditioner(kind, P, M, F, h_t, mu, subsolvers, subsolve)
