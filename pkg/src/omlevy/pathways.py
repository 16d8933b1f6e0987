"""
Most probable transition pathways.

Minimisers of the Onsager-Machlup action with ``phi1' = g(phi1, phi2)``
solve the Hamilton-Pontryagin system.  In first-order form with the
conjugate variable ``p = (phi2' - f + Lambda) / c^2`` and the multiplier
``lam`` it reads

    phi1' = g
    phi2' = c^2 p + f - Lambda
    p'    = -p f_y + f_yy / 2 + lam g_y
    lam'  =  p f_x - f_xy / 2 - lam g_x

For Langevin models ``phi2 = phi1'`` can be eliminated, leaving a
fourth-order Euler-Lagrange equation for ``phi1``.  Both are solved by
shooting; the inverted quadratic potential also has closed-form solutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize

from .model import LangevinModel, Path, action, as_degenerate, DegenerateModel
from .shooting import IntegrationFailure, NoConvergence, shoot

__all__ = [
    "HPState",
    "BoundaryProblem",
    "SolverConfig",
    "BVPSolution",
    "QuadraticMPTP",
    "VelocityOptimum",
    "NoConvergence",
    "IntegrationFailure",
    "SingularSystem",
    "hp_rhs",
    "solve_hp_bvp",
    "el4_rhs",
    "solve_el4_bvp",
    "quadratic_analytic_mptp",
    "quadratic_global_mptp",
    "optimize_boundary_velocities",
]


class SingularSystem(np.linalg.LinAlgError):
    pass


class HPState(NamedTuple):
    """State ``(phi1, phi2, p, lam)`` of the Hamilton-Pontryagin system."""

    phi1: float
    phi2: float
    p: float
    lam: float


@dataclass(frozen=True)
class BoundaryProblem:
    """Transition from ``(x0, y0)`` at time 0 to ``(xT, yT)`` at time ``T``.

    The velocities may be ``None`` for configuration-only problems.
    """

    x0: float
    xT: float
    T: float
    y0: Optional[float] = None
    yT: Optional[float] = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")

    @property
    def full(self) -> bool:
        return self.y0 is not None and self.yT is not None

    def _require_full(self):
        if not self.full:
            raise ValueError("both boundary velocities y0 and yT are required")


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    # tolerance of the final pass that samples the converged trajectory
    sample_rtol: float = 1e-12
    bvp_tol: float = 1e-9
    max_newton: int = 50
    fd_step: float = 1e-7
    segments: int = 1
    nodes: int = 2001
    warm_start: bool = False
    method: str = "DOP853"
    # boundary-velocity optimisation
    vel_tol: float = 1e-6
    max_outer: int = 500
    restarts: int = 5
    restart_spread: float = 3.0
    inner_nodes: int = 401
    seed: int = 0


@dataclass
class BVPSolution:
    """Converged shooting solution.

    ``unknowns`` are the free initial values: ``(p(0), lam(0))`` for the
    Hamilton-Pontryagin solver and ``(x''(0), x'''(0))`` for the fourth-order
    one.  ``p`` and ``lam`` are only filled by the former.
    """

    path: Path
    unknowns: np.ndarray
    iterations: int
    mismatch: float
    p: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    jacobian: Optional[np.ndarray] = field(default=None, repr=False)
    shooting_state: Optional[np.ndarray] = field(default=None, repr=False)

    def report(self) -> dict:
        return {"iterations": self.iterations, "bvp_mismatch": self.mismatch,
                "unknown_0": float(self.unknowns[0]), "unknown_1": float(self.unknowns[1])}


def hp_rhs(model, state: HPState) -> HPState:
    """Time derivative of a Hamilton-Pontryagin state."""
    m = as_degenerate(model)
    x, y, p, lam = state
    f = m.f(x, y)
    dp = -p * m.f_y(x, y) + 0.5 * m.f_yy(x, y) + lam * m.g_y(x, y)
    dlam = p * m.f_x(x, y) - 0.5 * m.f_xy(x, y) - lam * m.g_x(x, y)
    return HPState(m.g(x, y), m.c ** 2 * p + f - m.Lambda, dp, dlam)


def el4_rhs(model: LangevinModel, state) -> np.ndarray:
    """Right-hand side of the fourth-order Euler-Lagrange equation as a first-order system."""
    x, x1, x2, x3 = state
    x4 = (-x2 * (2 * model.U2(x) - model.gamma ** 2) - x1 ** 2 * model.U3(x)
          - (model.U1(x) + model.Lambda) * model.U2(x))
    return np.array([x1, x2, x3, x4], dtype=float)


def _hp_vector_field(m: DegenerateModel):
    c2, Lam = m.c ** 2, m.Lambda

    def rhs(t, u):
        x, y, p, lam = u
        return np.array([
            m.g(x, y),
            c2 * p + m.f(x, y) - Lam,
            -p * m.f_y(x, y) + 0.5 * m.f_yy(x, y) + lam * m.g_y(x, y),
            p * m.f_x(x, y) - 0.5 * m.f_xy(x, y) - lam * m.g_x(x, y),
        ], dtype=float)

    return rhs


def _el4_vector_field(model: LangevinModel):
    return lambda t, u: el4_rhs(model, u)


def _affine_model(m: DegenerateModel, x0: float, y0: float) -> DegenerateModel:
    # first-order Taylor expansion of both drifts around (x0, y0)
    gx, gy = float(m.g_x(x0, y0)), float(m.g_y(x0, y0))
    fx, fy = float(m.f_x(x0, y0)), float(m.f_y(x0, y0))
    g0, f0 = float(m.g(x0, y0)), float(m.f(x0, y0))

    def const(v):
        return lambda x, y: np.full(np.broadcast(x, y).shape, v)

    return DegenerateModel(
        g=lambda x, y: g0 + gx * (x - x0) + gy * (y - y0),
        f=lambda x, y: f0 + fx * (x - x0) + fy * (y - y0),
        g_x=const(gx), g_y=const(gy), f_x=const(fx), f_y=const(fy),
        f_xy=const(0.0), f_yy=const(0.0), c=m.c, measure=m.measure, check_partials=False)


def _affine_langevin(model: LangevinModel, x0: float) -> LangevinModel:
    k = float(model.U2(x0))
    b = float(model.U1(x0)) - k * x0
    return LangevinModel(U=lambda x: 0.5 * k * np.square(x) + b * x, U1=lambda x: k * x + b,
                         U2=lambda x: np.full(np.shape(x), k), U3=lambda x: np.zeros(np.shape(x)),
                         gamma=model.gamma, mu=model.mu, measure=model.measure)


def _shoot_kwargs(cfg: SolverConfig, nodes=None):
    return dict(rtol=cfg.rtol, atol=cfg.atol, tol=cfg.bvp_tol, max_iter=cfg.max_newton,
                fd_step=cfg.fd_step, segments=cfg.segments,
                nodes=cfg.nodes if nodes is None else nodes, method=cfg.method,
                sample_rtol=cfg.sample_rtol)


def solve_hp_bvp(model, problem: BoundaryProblem, cfg: SolverConfig = SolverConfig(),
                 guess=None, nodes=None) -> BVPSolution:
    """Solve the Hamilton-Pontryagin boundary value problem by shooting on ``(p(0), lam(0))``.

    Parameters
    ----------
    model : DegenerateModel or LangevinModel
    problem : BoundaryProblem
        Needs both boundary velocities.
    cfg : SolverConfig
        ``warm_start`` replaces the zero initial guess with the exact solution
        of the problem for the drifts linearised at the initial point.
    guess : array-like, optional
        Explicit initial ``(p(0), lam(0))``, or the ``shooting_state`` of an
        earlier solution with the same segment count; overrides ``warm_start``.

    Raises
    ------
    NoConvergence
        Newton iterations exhausted or stalled.
    IntegrationFailure
        The initial value problem could not be integrated (blow-up, stiffness).
    """
    problem._require_full()
    m = as_degenerate(model)
    start = np.array([problem.x0, problem.y0], dtype=float)
    target = np.array([problem.xT, problem.yT], dtype=float)
    if guess is None:
        guess = np.zeros(2)
        if cfg.warm_start:
            lin = _affine_model(m, problem.x0, problem.y0)
            guess = shoot(_hp_vector_field(lin), problem.T, start, target, guess,
                          **_shoot_kwargs(cfg, nodes=3)).unknowns
    res = shoot(_hp_vector_field(m), problem.T, start, target, guess, **_shoot_kwargs(cfg, nodes))
    x, y, p, lam = res.states
    dy = m.c ** 2 * p + m.f(x, y) - m.Lambda
    path = Path(0.0, problem.T, x, y, dy)
    return BVPSolution(path, res.unknowns, res.iterations, res.mismatch, p, lam, res.jacobian,
                       res.state)


def solve_el4_bvp(model: LangevinModel, problem: BoundaryProblem,
                  cfg: SolverConfig = SolverConfig(), guess=None, nodes=None,
                  jacobian=None) -> BVPSolution:
    """Solve the fourth-order Euler-Lagrange problem by shooting on ``(x''(0), x'''(0))``.

    The returned path has ``phi2 = x'`` and ``dphi2 = x''``.  Errors as in
    :func:`solve_hp_bvp`.
    """
    if not isinstance(model, LangevinModel):
        raise TypeError("the fourth-order formulation needs a LangevinModel")
    problem._require_full()
    start = np.array([problem.x0, problem.y0], dtype=float)
    target = np.array([problem.xT, problem.yT], dtype=float)
    if guess is None:
        guess = np.zeros(2)
        if cfg.warm_start:
            lin = _affine_langevin(model, problem.x0)
            guess = shoot(_el4_vector_field(lin), problem.T, start, target, guess,
                          **_shoot_kwargs(cfg, nodes=3)).unknowns
    res = shoot(_el4_vector_field(model), problem.T, start, target, guess,
                jacobian=jacobian, **_shoot_kwargs(cfg, nodes))
    x, x1, x2, _ = res.states
    return BVPSolution(Path(0.0, problem.T, x, x1, x2), res.unknowns, res.iterations,
                       res.mismatch, jacobian=res.jacobian, shooting_state=res.state)


@dataclass(frozen=True)
class QuadraticMPTP:
    """Closed-form path ``phi1(t) = sum_i C_i exp(lambda_i t) + offset``.

    ``coeffs`` follow that convention.  Evaluation goes through coefficients
    rescaled to ``exp(lambda_i (t - T))`` for growing modes, which keeps the
    arithmetic well conditioned for long horizons.
    """

    lambdas: np.ndarray
    coeffs: np.ndarray
    offset: float
    T: float
    _scaled: np.ndarray = field(repr=False, compare=False)

    @property
    def _anchors(self):
        return np.where(self.lambdas > 0, self.T, 0.0)

    def derivative(self, t, order: int = 0):
        """``order``-th time derivative of ``phi1`` at ``t``."""
        t = np.asarray(t, dtype=float)
        lam = self.lambdas
        e = np.exp(np.multiply.outer(t, lam) - lam * self._anchors)
        out = e @ (self._scaled * lam ** order)
        return out + self.offset if order == 0 else out

    def __call__(self, t):
        return self.derivative(t, 0)

    @property
    def y0(self) -> float:
        return float(self.derivative(0.0, 1))

    @property
    def yT(self) -> float:
        return float(self.derivative(self.T, 1))

    def to_path(self, nodes: int = 2001) -> Path:
        t = np.linspace(0.0, self.T, nodes)
        return Path(0.0, self.T, self.derivative(t, 0), self.derivative(t, 1),
                    self.derivative(t, 2))


def _make_mptp(lambdas, scaled, offset, T):
    lambdas = np.asarray(lambdas, dtype=float)
    scaled = np.asarray(scaled, dtype=float)
    anchors = np.where(lambdas > 0, T, 0.0)
    with np.errstate(over="ignore", under="ignore"):
        coeffs = scaled * np.exp(-lambdas * anchors)
    return QuadraticMPTP(lambdas, coeffs, float(offset), float(T), scaled)


def quadratic_exponents(gamma: float) -> np.ndarray:
    """The four characteristic exponents of the fourth-order problem, ascending."""
    s = math.sqrt(gamma * gamma + 4.0)
    inner = math.sqrt((2 + gamma ** 2 - gamma * s) / 2)
    outer = math.sqrt((2 + gamma ** 2 + gamma * s) / 2)
    return np.array([-outer, -inner, inner, outer])


def quadratic_analytic_mptp(gamma: float, Lambda: float, problem: BoundaryProblem,
                            cond_limit: float = 1e13) -> QuadraticMPTP:
    """Closed-form MPTP for ``U(x) = -x^2/2`` between two phase points.

    Raises
    ------
    SingularSystem
        When the interpolation system is numerically singular.
    """
    problem._require_full()
    lam = quadratic_exponents(gamma)
    T = problem.T
    anchors = np.where(lam > 0, T, 0.0)
    e0 = np.exp(-lam * anchors)          # basis value at t = 0
    eT = np.exp(lam * (T - anchors))     # basis value at t = T
    A = np.vstack([e0, eT, lam * e0, lam * eT])
    rhs = np.array([problem.x0 - Lambda, problem.xT - Lambda, problem.y0, problem.yT])
    if np.linalg.cond(A) > cond_limit:
        raise SingularSystem(f"boundary system is singular (cond={np.linalg.cond(A):.2e})")
    scaled = np.linalg.solve(A, rhs)
    return _make_mptp(lam, scaled, Lambda, T)


def quadratic_global_mptp(gamma: float, Lambda: float, x0: float, xT: float,
                          T: float) -> QuadraticMPTP:
    """Configuration-to-configuration MPTP for ``U(x) = -x^2/2``.

    It solves ``phi'' + gamma phi' - phi + Lambda = 0`` with ``phi(0) = x0``,
    ``phi(T) = xT``, on which the action attains its floor ``-gamma T / 2``.
    The optimal boundary velocities are the ``y0`` and ``yT`` attributes.
    """
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T}")
    s = math.sqrt(gamma * gamma + 4.0)
    l1, l2 = (-gamma - s) / 2, (-gamma + s) / 2
    a, b = x0 - Lambda, xT - Lambda
    e1, e2 = math.exp(l1 * T), math.exp(l2 * T)
    c1 = (b - e2 * a) / (e1 - e2)
    c2 = (e1 * a - b) / (e1 - e2)
    # growing mode l2 > 0 is anchored at T
    return _make_mptp([l1, l2], [c1, c2 * e2], Lambda, T)


@dataclass
class VelocityOptimum:
    y0: float
    yT: float
    path: Path
    action: float
    evaluations: int
    converged_restarts: int
    solution: BVPSolution = field(repr=False)

    def report(self) -> dict:
        return {"y0": self.y0, "yT": self.yT, "action": self.action,
                "evaluations": self.evaluations, "converged_restarts": self.converged_restarts,
                **self.solution.report()}


def optimize_boundary_velocities(model: LangevinModel, x0: float, xT: float, T: float,
                                 cfg: SolverConfig = SolverConfig()) -> VelocityOptimum:
    """Minimise the action over the boundary velocities ``(y0, yT)``.

    Each candidate pair is scored by the action of the fourth-order BVP
    solution.  Nelder-Mead runs from the straight-line velocity and from
    ``cfg.restarts - 1`` further starting points drawn around it with a
    generator seeded by ``cfg.seed``; the best converged run is polished on
    ``cfg.nodes`` nodes.

    Raises
    ------
    NoConvergence
        No restart met ``cfg.vel_tol`` within ``cfg.max_outer`` evaluations.
    """
    base = np.array([(xT - x0) / T] * 2)
    rng = np.random.default_rng(cfg.seed)
    starts = [base] + [base + cfg.restart_spread * rng.standard_normal(2)
                       for _ in range(max(cfg.restarts, 1) - 1)]
    memo = {"guess": None, "jac": None}
    # shooting state of the lowest action seen, used to seed the final polish
    record = {"value": np.inf, "state": None}
    evaluations = 0

    def objective(v):
        nonlocal evaluations
        evaluations += 1
        prob = BoundaryProblem(x0, xT, T, float(v[0]), float(v[1]))
        try:
            sol = solve_el4_bvp(model, prob, cfg, guess=memo["guess"], nodes=cfg.inner_nodes,
                                jacobian=memo["jac"])
        except (NoConvergence, IntegrationFailure):
            return np.inf
        memo["guess"], memo["jac"] = sol.shooting_state, sol.jacobian
        value = action(model, sol.path, check="ignore")
        if value < record["value"]:
            record["value"], record["state"] = value, sol.shooting_state
        return value

    best, converged, last_error = None, 0, None
    for s in starts:
        memo["guess"] = memo["jac"] = None
        if not np.isfinite(objective(s)):
            last_error = NoConvergence("inner BVP failed at the starting velocities")
            continue
        simplex = np.array([s, s + [1.0, 0.0], s + [0.0, 1.0]])
        res = minimize(objective, s, method="Nelder-Mead",
                       options={"xatol": cfg.vel_tol, "fatol": np.inf,
                                "maxfev": cfg.max_outer, "initial_simplex": simplex})
        if not res.success or not np.isfinite(res.fun):
            last_error = NoConvergence(f"velocity search stopped: {res.message}",
                                       float(np.ptp(res.final_simplex[0], axis=0).max()), res.nfev)
            continue
        converged += 1
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise last_error
    y0, yT = map(float, best.x)
    sol = solve_el4_bvp(model, BoundaryProblem(x0, xT, T, y0, yT), cfg, guess=record["state"])
    return VelocityOptimum(y0, yT, sol.path, action(model, sol.path, check="ignore"),
                           evaluations, converged, sol)
