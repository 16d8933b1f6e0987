"""Newton shooting for two-point problems on four-dimensional first-order systems.

The first two state components are fixed at both ends; the last two are
free at ``t = 0``.  With ``segments > 1`` the interval is split and the
interior states become extra unknowns tied together by continuity rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp


class NoConvergence(RuntimeError):
    def __init__(self, message, mismatch=np.nan, iterations=0):
        super().__init__(f"{message} (iterations={iterations}, mismatch={mismatch:.3e})")
        self.mismatch = mismatch
        self.iterations = iterations


class IntegrationFailure(RuntimeError):
    pass


@dataclass
class ShootingResult:
    t: np.ndarray
    states: np.ndarray        # shape (4, len(t))
    unknowns: np.ndarray      # free components at t = 0
    state: np.ndarray         # all Newton unknowns, including interior node states
    jacobian: Optional[np.ndarray]
    iterations: int
    mismatch: float


def integrate(rhs, t0, t1, u0, rtol, atol, method="DOP853", t_eval=None):
    """Integrate ``u' = rhs(t, u)``; raise :class:`IntegrationFailure` on trouble."""
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(rhs, (t0, t1), u0, method=method, rtol=rtol, atol=atol,
                        t_eval=t_eval)
    if sol.status < 0:
        raise IntegrationFailure(f"integration stopped at t={sol.t[-1]:.6g}: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise IntegrationFailure("integration produced non-finite values")
    return sol


def shoot(
    rhs: Callable,
    T: float,
    start: np.ndarray,
    target: np.ndarray,
    guess: np.ndarray,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    tol: float = 1e-9,
    max_iter: int = 50,
    fd_step: float = 1e-7,
    segments: int = 1,
    nodes: int = 2001,
    jacobian: Optional[np.ndarray] = None,
    method: str = "DOP853",
    sample_rtol: Optional[float] = None,
) -> ShootingResult:
    """Solve ``u(0)[:2] = start``, ``u(T)[:2] = target`` by damped Newton shooting.

    ``guess`` holds the two free initial components, or the full vector of
    Newton unknowns (``ShootingResult.state``) of an earlier solve with the
    same number of segments.  A supplied ``jacobian``
    of matching size is used as the starting Newton matrix.  The matrix is
    recomputed by forward differences whenever a step fails to reduce the
    mismatch by at least a factor of four.  On success the solution is re-integrated with ``sample_rtol``
    (default ``rtol``) and sampled at ``nodes`` uniform times.
    """
    start = np.asarray(start, dtype=float)
    target = np.asarray(target, dtype=float)
    m = int(segments)
    if m < 1:
        raise ValueError("segments must be >= 1")
    bounds = np.linspace(0.0, T, m + 1)

    u = np.asarray(guess, dtype=float).copy()
    if m > 1 and u.size != 2 + 4 * (m - 1):
        # interior states: straight line in the fixed components, guess in the free ones
        inner = []
        for s in bounds[1:-1]:
            w = s / T
            inner.append(np.concatenate([(1 - w) * start + w * target, u[:2]]))
        u = np.concatenate([u] + inner)

    def segment_start(v, j):
        return np.concatenate([start, v[:2]]) if j == 0 else v[4 * j - 2: 4 * j + 2]

    def segment_end(j, state):
        return integrate(rhs, bounds[j], bounds[j + 1], state, rtol, atol, method).y[:, -1]

    def assemble(v, ends):
        r = np.empty_like(v)
        for j in range(m - 1):
            r[2 + 4 * j: 6 + 4 * j] = ends[j] - v[4 * j + 2: 4 * j + 6]
        r[:2] = ends[-1][:2] - target
        return r

    def evaluate(v):
        ends = [segment_end(j, segment_start(v, j)) for j in range(m)]
        return assemble(v, ends), ends

    def fd_jacobian(v, ends):
        # unknowns of segment j only move the end of segment j, plus an
        # identity block in the continuity row that precedes it
        J = np.zeros((v.size, v.size))
        for j in range(m):
            lo = 0 if j == 0 else 4 * j - 2
            rows = slice(0, 2) if j == m - 1 else slice(2 + 4 * j, 6 + 4 * j)
            keep = slice(0, 2) if j == m - 1 else slice(0, 4)
            for i in range(lo, lo + (2 if j == 0 else 4)):
                dv = fd_step * (1.0 + abs(v[i]))
                w = v.copy()
                w[i] += dv
                J[rows, i] = ((segment_end(j, segment_start(w, j)) - ends[j]) / dv)[keep]
                if j > 0:
                    J[2 + 4 * (j - 1) + (i - lo), i] = -1.0
        return J

    r, ends = evaluate(u)
    norm = np.max(np.abs(r))
    J = jacobian if jacobian is not None and jacobian.shape == (u.size, u.size) else None
    fresh = False
    it = 0
    while norm >= tol:
        if it >= max_iter:
            raise NoConvergence("shooting did not converge", norm, it)
        if J is None:
            J = fd_jacobian(u, ends)
            fresh = True
        try:
            du = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            du = np.linalg.lstsq(J, -r, rcond=None)[0]
        step, accepted = 1.0, False
        for _ in range(12):
            trial = u + step * du
            try:
                r_new, ends_new = evaluate(trial)
            except IntegrationFailure:
                step *= 0.5
                continue
            n_new = np.max(np.abs(r_new))
            if n_new < norm:
                accepted = True
                break
            step *= 0.5
        it += 1
        if not accepted:
            if fresh:
                raise NoConvergence("Newton step failed to reduce the mismatch", norm, it)
            # stale Jacobian: rebuild and retry from the same point
            J = None
            continue
        if n_new > 0.25 * norm:
            # slow contraction: refresh the Jacobian on the next step
            J = None
        u, r, norm, ends = trial, r_new, n_new, ends_new
        fresh = False

    if J is None:
        J = jacobian

    # dense sampling of the converged trajectory
    srtol = rtol if sample_rtol is None else sample_rtol
    satol = atol * srtol / rtol
    t_all = np.linspace(0.0, T, nodes)
    pieces = []
    state = np.concatenate([start, u[:2]])
    for j in range(m):
        a, b = bounds[j], bounds[j + 1]
        mask = (t_all >= a) & (t_all < b) if j < m - 1 else (t_all >= a)
        sol = integrate(rhs, a, b, state, srtol, satol, method, t_eval=t_all[mask])
        pieces.append(sol.y)
        if j < m - 1:
            state = u[2 + 4 * j: 6 + 4 * j]
    states = np.concatenate(pieces, axis=1)
    return ShootingResult(t_all, states, u[:2].copy(), u.copy(), J, it, float(norm))
