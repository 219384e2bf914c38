"""Time integration (IRK / IRK-Nystrom), manufactured-solution problems,
and PDE-level error measurement."""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import assemble_mass, assemble_stiffness, coefficient_preset
from .butcher import ButcherTableau, TableauKind, gauss_legendre, nystrom_from, radau_iia
from .krylov import reference_solve
from .stageop import StageOperator, build_stage_rhs

PROBLEM_NAMES = ("diffusion", "pennes", "wave", "klein-gordon")


@dataclass
class ProblemSpec:
    """A PDE instance with a manufactured exact solution and its forcing."""

    name: str
    mu: int
    coeff: object
    exact: Callable          # u*(x, y, t)
    exact_dt: Callable       # du*/dt
    exact_dmu: Callable      # mu-th time derivative of u*
    apply_K: Callable        # (K u*)(x, y, t) in closed form
    g: Callable              # forcing so that d^mu u/dt^mu = -K u + g

    def u0(self, x, y):
        return self.exact(x, y, 0.0)

    def udot0(self, x, y):
        return self.exact_dt(x, y, 0.0)

    def pde_residual(self, x, y, t):
        """Sampled residual g - d^mu u*/dt^mu - K u* (zero for a correct
        manufactured forcing)."""
        return self.g(x, y, t) - self.exact_dmu(x, y, t) - self.apply_K(x, y, t)


@dataclass
class StepperState:
    t: float
    u: np.ndarray
    udot: Optional[np.ndarray]
    h_t: float


def timestep_rule(h, s, kind, p=1):
    """Coupled timestep h_t = h^((p+1)/q) with q = 2s for Gauss-Legendre
    (and its Nystrom methods) and q = 2s - 1 for Radau IIA."""
    kind = TableauKind(kind) if not isinstance(kind, TableauKind) else kind
    q = 2 * s - 1 if kind is TableauKind.RADAU_IIA else 2 * s
    return float(h) ** ((p + 1) / q)


def _beta_is_zero(coeff):
    xs = np.linspace(-0.97, 0.97, 13)
    X, Y = np.meshgrid(xs, xs)
    return float(np.abs(np.asarray(coeff.beta(X, Y))).max()) == 0.0


def mms_problem(name, coeff):
    """Manufactured problem u* = T(t) cos(pi x) cos(pi y) with T = exp(-t)
    for the parabolic problems and T = cos(t) for the hyperbolic ones.

    The spatial profile satisfies the homogeneous Neumann condition on
    [-1,1]^2 exactly. `coeff` is a CoefficientField or preset name; the
    diffusion/wave problems require beta = 0, Pennes/Klein-Gordon beta > 0.
    """
    if isinstance(coeff, str):
        coeff = coefficient_preset(coeff)
    if name not in PROBLEM_NAMES:
        raise ValueError(f"unknown problem {name!r}; choose from {PROBLEM_NAMES}")
    mu = 1 if name in ("diffusion", "pennes") else 2
    needs_beta = name in ("pennes", "klein-gordon")
    if coeff.grad_alpha is None:
        raise ValueError("coefficient field needs grad_alpha for manufactured forcing")
    if needs_beta and _beta_is_zero(coeff):
        raise ValueError(f"{name} requires beta > 0; preset {coeff.preset!r} has beta = 0")
    if not needs_beta and not _beta_is_zero(coeff):
        raise ValueError(f"{name} requires beta = 0; preset {coeff.preset!r} has beta > 0")

    pi = np.pi

    def w(x, y):
        return np.cos(pi * x) * np.cos(pi * y)

    def grad_w(x, y):
        return (-pi * np.sin(pi * x) * np.cos(pi * y),
                -pi * np.cos(pi * x) * np.sin(pi * y))

    if mu == 1:
        T = lambda t: math.exp(-t)
        dT = lambda t: -math.exp(-t)
        dmuT = dT
    else:
        T = lambda t: math.cos(t)
        dT = lambda t: -math.sin(t)
        dmuT = lambda t: -math.cos(t)

    def K_of_w(x, y):
        # K(w) = -alpha Lap w - grad alpha . grad w + beta w, Lap w = -2 pi^2 w
        gax, gay = coeff.grad_alpha(x, y)
        wx, wy = grad_w(x, y)
        return (2.0 * pi ** 2 * coeff.alpha(x, y) * w(x, y)
                - gax * wx - gay * wy + coeff.beta(x, y) * w(x, y))

    return ProblemSpec(
        name=name, mu=mu, coeff=coeff,
        exact=lambda x, y, t: T(t) * w(x, y),
        exact_dt=lambda x, y, t: dT(t) * w(x, y),
        exact_dmu=lambda x, y, t: dmuT(t) * w(x, y),
        apply_K=lambda x, y, t: T(t) * K_of_w(x, y),
        g=lambda x, y, t: dmuT(t) * w(x, y) + T(t) * K_of_w(x, y),
    )


def direct_solver(op, b):
    """Default stage-system solver: sparse direct, no report."""
    return reference_solve(op, b), None


def irk_step(state, tableau, op, solver, problem, mesh):
    """One IRK step: solve the stage system, then
    u^n = u^(n-1) + h_t sum_i b_i k_i."""
    if problem.mu != 1:
        raise ValueError("irk_step requires a mu = 1 problem")
    h_t = state.h_t
    rhs = build_stage_rhs(mesh, problem.coeff, tableau, h_t, 1, state.t,
                          state.u, None, problem.g, F=op.F)
    k, report = solver(op, rhs)
    K = k.reshape(tableau.s, -1)
    u_new = state.u + h_t * (tableau.b @ K)
    return StepperState(state.t + h_t, u_new, None, h_t), report


def irkn_step(state, tableau, op, solver, problem, mesh):
    """One IRK-Nystrom step: s stage solves, then
    u^n = u^(n-1) + h_t udot^(n-1) + h_t^2 sum_i b_i k_i and
    udot^n = udot^(n-1) + h_t sum_i b'_i k_i."""
    if problem.mu != 2:
        raise ValueError("irkn_step requires a mu = 2 problem")
    if not tableau.is_nystrom:
        raise ValueError("irkn_step requires a Nystrom tableau (b_prime present)")
    h_t = state.h_t
    rhs = build_stage_rhs(mesh, problem.coeff, tableau, h_t, 2, state.t,
                          state.u, state.udot, problem.g, F=op.F)
    k, report = solver(op, rhs)
    K = k.reshape(tableau.s, -1)
    u_new = state.u + h_t * state.udot + h_t ** 2 * (tableau.b @ K)
    udot_new = state.udot + h_t * (tableau.b_prime @ K)
    return StepperState(state.t + h_t, u_new, udot_new, h_t), report


def method_tableau(name, s):
    """The paper pairing: Radau IIA for parabolic problems, Gauss-Legendre
    Nystrom for hyperbolic ones."""
    if name in ("diffusion", "pennes"):
        return radau_iia(s)
    return nystrom_from(gauss_legendre(s))


def initial_state(problem, mesh, h_t):
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    u = problem.exact(x, y, 0.0)
    udot = problem.exact_dt(x, y, 0.0) if problem.mu == 2 else None
    return StepperState(0.0, u, udot, h_t)


def integrate(problem, tableau, mesh, h_t, t_end, solver=direct_solver,
              M=None, F=None):
    """March the problem from 0 to t_end with a step count chosen so the
    final time is hit exactly (the actual step is t_end / ceil(t_end/h_t),
    never larger than the requested h_t)."""
    if M is None:
        M = assemble_mass(mesh)
    if F is None:
        F = assemble_stiffness(mesh, problem.coeff)
    n_steps = max(1, math.ceil(t_end / h_t - 1e-12))
    h_t = t_end / n_steps
    op = StageOperator(tableau, M, F, h_t, problem.mu)
    state = initial_state(problem, mesh, h_t)
    step = irk_step if problem.mu == 1 else irkn_step
    for _ in range(n_steps):
        state, _ = step(state, tableau, op, solver, problem, mesh)
    return state, M


def l2_error(M, u, u_exact):
    """Relative L2 (mass-weighted) nodal error."""
    e = u - u_exact
    num = math.sqrt(max(e @ (M @ e), 0.0))
    den = math.sqrt(u_exact @ (M @ u_exact))
    return num / den


def convergence_study(name, coeff, s, k_list, t_end=0.5, solver=direct_solver):
    """Final-time L2 errors under the coupled refinement rule and the
    least-squares observed order in h."""
    from .mesh import build_mesh
    problem_errors = []
    hs = []
    for k in k_list:
        mesh = build_mesh(k)
        problem = mms_problem(name, coeff)
        tableau = method_tableau(name, s)
        h_t = timestep_rule(mesh.h, s, tableau.kind)
        state, M = integrate(problem, tableau, mesh, h_t, t_end, solver=solver)
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        err = l2_error(M, state.u, problem.exact(x, y, state.t))
        problem_errors.append(err)
        hs.append(mesh.h)
    logh = np.log(hs)
    loge = np.log(problem_errors)
    order = float(np.polyfit(logh, loge, 1)[0])
    return {"k": list(k_list), "h": hs, "errors": problem_errors, "order": order}
