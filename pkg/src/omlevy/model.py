"""
Degenerate Levy-driven models and their Onsager-Machlup action.

The model is the planar system

    dX = g(X, Y) dt
    dY = f(X, Y) dt + c dW + dL

where only the second component is noisy.  For a reference path
``phi = (phi1, phi2)`` obeying ``phi1' = g(phi1, phi2)`` the Onsager-Machlup
function is

    OM = 1/2 ((phi2' - f(phi1, phi2) + Lambda) / c)^2 + 1/2 df/dy(phi1, phi2)

with ``Lambda`` the small-jump mean of the attached measure (zero without
one).  The theory asks for ``f`` in C_b^2 and ``g`` in C_b^1; nothing here
enforces boundedness, so unbounded drifts such as the inverted quadratic
potential are accepted as they are.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .levy import AlphaStableMeasure

__all__ = [
    "DegenerateModel",
    "LangevinModel",
    "Path",
    "ConstraintViolation",
    "GridTooCoarse",
    "as_degenerate",
    "quadratic_langevin",
    "double_well_langevin",
    "om_function",
    "action",
    "kinematic_residual",
    "variational_residual",
    "action_gradient",
    "fd_derivative",
    "simpson",
    "read_path_csv",
    "write_path_csv",
]

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ConstraintViolation(ValueError):
    """The path does not satisfy ``phi1' = g(phi1, phi2)``."""

    def __init__(self, residual: float, tol: float):
        super().__init__(
            f"kinematic constraint violated: max |phi1' - g| = {residual:.3e} > {tol:.1e}")
        self.residual = residual
        self.tol = tol


class GridTooCoarse(ValueError):
    pass


def _fd_partial(fun, wrt, h=1e-5):
    if wrt == "x":
        return lambda x, y: (fun(x + h, y) - fun(x - h, y)) / (2 * h)
    return lambda x, y: (fun(x, y + h) - fun(x, y - h)) / (2 * h)


@dataclass(frozen=True)
class DegenerateModel:
    """Drifts, partial derivatives and noise of a degenerate planar SDE.

    All callables take ``(x, y)`` and must broadcast over numpy arrays.

    Parameters
    ----------
    g, f : callable
        Drifts of the noiseless and the noisy component.
    g_x, g_y, f_x, f_y, f_xy, f_yy : callable
        Partial derivatives used by the action and the Hamilton-Pontryagin
        equations.
    c : float
        Brownian noise intensity, positive.
    measure : AlphaStableMeasure or None
        Jump measure of the Levy part; ``None`` for Brownian noise only.
    check_partials : bool
        Compare the supplied partials against central differences of ``f``
        and ``g`` at a few sample points on construction.
    """

    g: Field
    f: Field
    g_x: Field
    g_y: Field
    f_x: Field
    f_y: Field
    f_xy: Field
    f_yy: Field
    c: float
    measure: Optional[AlphaStableMeasure] = None
    check_partials: bool = field(default=True, compare=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"noise intensity c must be positive, got {self.c}")
        if self.check_partials:
            self._check_partials()

    def _check_partials(self, rtol=1e-5):
        rng = np.random.default_rng(0)
        x, y = rng.uniform(-2.0, 2.0, size=(2, 16))
        pairs = [
            ("g_x", _fd_partial(self.g, "x")), ("g_y", _fd_partial(self.g, "y")),
            ("f_x", _fd_partial(self.f, "x")), ("f_y", _fd_partial(self.f, "y")),
            ("f_xy", _fd_partial(self.f_y, "x")), ("f_yy", _fd_partial(self.f_y, "y")),
        ]
        for name, numeric in pairs:
            given = np.broadcast_to(getattr(self, name)(x, y), x.shape)
            approx = numeric(x, y)
            err = np.max(np.abs(given - approx) / (1.0 + np.abs(approx)))
            if not err <= rtol:
                raise ValueError(f"partial {name} disagrees with finite differences "
                                 f"(relative error {err:.2e})")

    @property
    def Lambda(self) -> float:
        """Small-jump mean entering the OM function (0 without jumps)."""
        return 0.0 if self.measure is None else self.measure.lambda_mean

    @classmethod
    def from_drifts(cls, g: Field, f: Field, c: float,
                    measure: Optional[AlphaStableMeasure] = None, h: float = 1e-4):
        """Build a model whose partials are central differences of ``f``, ``g``.

        The partials carry an O(h^2) error and the mixed/second derivatives
        of ``f`` are nested differences, so expect about 1e-7 relative
        accuracy at the default step.
        """
        f_y = _fd_partial(f, "y", h)
        return cls(g=g, f=f, g_x=_fd_partial(g, "x", h), g_y=_fd_partial(g, "y", h),
                   f_x=_fd_partial(f, "x", h), f_y=f_y,
                   f_xy=_fd_partial(f_y, "x", h), f_yy=_fd_partial(f_y, "y", h),
                   c=c, measure=measure, check_partials=False)


@dataclass(frozen=True)
class LangevinModel:
    """Underdamped Langevin system ``X'' + gamma X' = -U'(X) + sqrt(mu gamma) W' + L'``.

    ``U1``, ``U2`` and ``U3`` are the first three derivatives of the
    potential ``U``.
    """

    U: Callable
    U1: Callable
    U2: Callable
    U3: Callable
    gamma: float
    mu: float
    measure: Optional[AlphaStableMeasure] = None
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")

    @property
    def c(self) -> float:
        return float(np.sqrt(self.mu * self.gamma))

    @property
    def Lambda(self) -> float:
        return 0.0 if self.measure is None else self.measure.lambda_mean

    @cached_property
    def degenerate(self) -> DegenerateModel:
        gam, U1, U2 = self.gamma, self.U1, self.U2

        def zero(x, y):
            return np.zeros(np.broadcast(x, y).shape)

        return DegenerateModel(
            g=lambda x, y: y + 0.0 * x,
            f=lambda x, y: -gam * y - U1(x),
            g_x=zero,
            g_y=lambda x, y: np.ones(np.broadcast(x, y).shape),
            f_x=lambda x, y: -U2(x) + 0.0 * y,
            f_y=lambda x, y: np.full(np.broadcast(x, y).shape, -gam),
            f_xy=zero,
            f_yy=zero,
            c=self.c,
            measure=self.measure,
            check_partials=False,
        )


def as_degenerate(model) -> DegenerateModel:
    if isinstance(model, LangevinModel):
        return model.degenerate
    return model


def quadratic_langevin(gamma=3.0, mu=0.8, measure=None) -> LangevinModel:
    """Langevin model in the inverted quadratic potential ``U(x) = -x^2 / 2``."""
    return LangevinModel(
        U=lambda x: -0.5 * np.square(x),
        U1=lambda x: -np.asarray(x, dtype=float),
        U2=lambda x: np.full(np.shape(x), -1.0),
        U3=lambda x: np.zeros(np.shape(x)),
        gamma=gamma, mu=mu, measure=measure, name="quadratic")


def double_well_langevin(gamma=1.0, mu=0.8, measure=None) -> LangevinModel:
    """Langevin model in ``U(x) = (x^2 - 1)^2 / 4``."""
    return LangevinModel(
        U=lambda x: 0.25 * (np.square(x) - 1.0) ** 2,
        U1=lambda x: np.asarray(x, dtype=float) ** 3 - x,
        U2=lambda x: 3.0 * np.square(x) - 1.0,
        U3=lambda x: 6.0 * np.asarray(x, dtype=float),
        gamma=gamma, mu=mu, measure=measure, name="double-well")


def fd_derivative(values, h):
    """First derivative on a uniform grid, fourth order everywhere.

    Interior nodes use the five-point central stencil and the two nodes at
    each end use one-sided fourth-order stencils.  Grids with fewer than five
    nodes fall back to second order.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 5:
        return np.gradient(v, h, edge_order=2)
    d = np.empty_like(v)
    d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    d[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * h)
    d[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * h)
    d[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * h)
    d[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * h)
    return d


def simpson(values, h) -> float:
    """Composite Simpson rule on a uniform grid.

    An odd number of intervals closes with the Simpson 3/8 rule on the last
    three intervals.
    """
    v = np.asarray(values, dtype=float)
    n = v.size - 1
    if n < 2:
        raise GridTooCoarse("Simpson quadrature needs at least two intervals")
    total = 0.0
    m = n if n % 2 == 0 else n - 3
    if m > 0:
        w = v[: m + 1]
        total += h / 3 * (w[0] + w[-1] + 4 * w[1:-1:2].sum() + 2 * w[2:-1:2].sum())
    if m != n:
        w = v[m:]
        total += 3 * h / 8 * (w[0] + 3 * w[1] + 3 * w[2] + w[3])
    return float(total)


@dataclass(frozen=True)
class Path:
    """Phase-space path sampled on a uniform grid of ``n`` intervals.

    ``dphi2`` optionally carries exact values of ``phi2'``; otherwise the
    derivative is taken by fourth-order finite differences.
    """

    t0: float
    T: float
    phi1: np.ndarray
    phi2: np.ndarray
    dphi2: Optional[np.ndarray] = None

    def __post_init__(self):
        phi1 = np.asarray(self.phi1, dtype=float)
        phi2 = np.asarray(self.phi2, dtype=float)
        if phi1.ndim != 1 or phi1.shape != phi2.shape:
            raise ValueError("phi1 and phi2 must be 1-d arrays of equal length")
        if phi1.size < 3:
            raise GridTooCoarse(f"a path needs n >= 2 intervals, got {phi1.size - 1}")
        if not self.T > self.t0:
            raise ValueError("T must exceed t0")
        object.__setattr__(self, "phi1", phi1)
        object.__setattr__(self, "phi2", phi2)
        if self.dphi2 is not None:
            d = np.asarray(self.dphi2, dtype=float)
            if d.shape != phi1.shape:
                raise ValueError("dphi2 must match the grid")
            object.__setattr__(self, "dphi2", d)

    @property
    def n(self) -> int:
        return self.phi1.size - 1

    @property
    def h(self) -> float:
        return (self.T - self.t0) / self.n

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.n + 1)

    def phi2_dot(self) -> np.ndarray:
        if self.dphi2 is not None:
            return self.dphi2
        return fd_derivative(self.phi2, self.h)

    @classmethod
    def from_functions(cls, phi1, phi2, T, n, dphi2=None, t0=0.0):
        """Sample callables of time on a uniform grid."""
        t = np.linspace(t0, T, n + 1)
        return cls(t0, T, phi1(t), phi2(t), None if dphi2 is None else dphi2(t))


def om_function(model, x, y, ydot):
    """Onsager-Machlup function at phase point ``(x, y)`` with ``y' = ydot``."""
    m = as_degenerate(model)
    r = (ydot - m.f(x, y) + m.Lambda) / m.c
    return 0.5 * r * r + 0.5 * m.f_y(x, y)


def kinematic_residual(model, path: Path) -> float:
    """``max |phi1' - g(phi1, phi2)|`` with ``phi1'`` by finite differences."""
    m = as_degenerate(model)
    return float(np.max(np.abs(fd_derivative(path.phi1, path.h) - m.g(path.phi1, path.phi2))))


def action(model, path: Path, check: str = "warn", tol: float = 1e-6) -> float:
    """Onsager-Machlup action of ``path`` by composite Simpson quadrature.

    Parameters
    ----------
    model : DegenerateModel or LangevinModel
    path : Path
    check : {"warn", "raise", "ignore"}
        What to do when the kinematic constraint residual exceeds ``tol``.
    tol : float
        Allowed ``max |phi1' - g(phi1, phi2)|``.
    """
    if check not in ("warn", "raise", "ignore"):
        raise ValueError(f"unknown check mode {check!r}")
    if path.n < 2:
        raise GridTooCoarse("action quadrature needs n >= 2")
    if check != "ignore":
        res = kinematic_residual(model, path)
        if not res <= tol:
            if check == "raise":
                raise ConstraintViolation(res, tol)
            warnings.warn(str(ConstraintViolation(res, tol)), stacklevel=2)
    ydot = path.phi2_dot()
    if not np.all(np.isfinite(ydot)):
        raise ValueError("path has non-finite derivative; not in the Cameron-Martin space")
    return simpson(om_function(model, path.phi1, path.phi2, ydot), path.h)


def _langevin_q(model: LangevinModel, path: Path) -> np.ndarray:
    # q = phi1'' + gamma phi1' + U'(phi1) + Lambda, with phi1' = phi2
    return path.phi2_dot() + model.gamma * path.phi2 + model.U1(path.phi1) + model.Lambda


def variational_residual(model: LangevinModel, path: Path) -> np.ndarray:
    """Residual of the fourth-order Euler-Lagrange equation on interior nodes.

    The residual

        x'''' + x''(2U''(x) - gamma^2) + x'^2 U'''(x) + (U'(x) + Lambda) U''(x)

    equals ``q'' - gamma q' + U''(x) q`` for ``q = x'' + gamma x' + U'(x) + Lambda``.
    The factored form is evaluated with fourth-order central differences of
    ``q``, built from the ``phi2`` channel (``x'``) and ``dphi2`` (``x''``), which
    avoids fourth differences of ``phi1``.  Returns values at nodes
    ``2 .. n-2``.
    """
    if not isinstance(model, LangevinModel):
        raise TypeError("variational_residual needs a LangevinModel")
    if path.n < 8:
        raise GridTooCoarse(f"variational residual needs n >= 8, got {path.n}")
    h = path.h
    q = _langevin_q(model, path)
    qm2, qm1, q0, qp1, qp2 = q[:-4], q[1:-3], q[2:-2], q[3:-1], q[4:]
    qdd = (-qm2 + 16 * qm1 - 30 * q0 + 16 * qp1 - qp2) / (12 * h * h)
    qd = (qm2 - 8 * qm1 + 8 * qp1 - qp2) / (12 * h)
    return qdd - model.gamma * qd + model.U2(path.phi1[2:-2]) * q0


def action_gradient(model: LangevinModel, path: Path) -> np.ndarray:
    """Functional derivative of the action with respect to ``phi1`` (nodes ``2 .. n-2``).

    For perturbations ``eta`` of ``phi1`` (with ``phi2`` moving by ``eta'``)
    that vanish together with ``eta'`` at both ends,
    ``dI = int eta * action_gradient dt``.
    """
    return variational_residual(model, path) / model.c ** 2


def write_path_csv(path: Path, fname) -> None:
    """Write ``t,phi1,phi2[,dphi2]`` rows with 17 significant digits."""
    cols = [path.t, path.phi1, path.phi2]
    header = ["t", "phi1", "phi2"]
    if path.dphi2 is not None:
        cols.append(path.dphi2)
        header.append("dphi2")
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([f"{v:.17g}" for v in row])


def read_path_csv(fname) -> Path:
    with open(fname, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["t", "phi1", "phi2"] or header[3:] not in ([], ["dphi2"]):
            raise ValueError(f"{fname}: expected header t,phi1,phi2[,dphi2], got {header}")
        rows = np.array([[float(v) for v in row] for row in reader if row])
    if rows.ndim != 2 or rows.shape[0] < 3:
        raise GridTooCoarse(f"{fname}: a path needs at least 3 rows")
    t = rows[:, 0]
    if not np.allclose(np.diff(t), (t[-1] - t[0]) / (t.size - 1), rtol=1e-9, atol=1e-12):
        raise ValueError(f"{fname}: time grid is not uniform")
    dphi2 = rows[:, 3] if rows.shape[1] == 4 else None
    return Path(t[0], t[-1], rows[:, 1], rows[:, 2], dphi2)
