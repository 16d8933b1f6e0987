"""
Monte Carlo simulation of degenerate Levy-driven systems and tube probabilities.

Paths are generated by the Euler-Maruyama scheme

    X+ = X + g(X, Y) dt
    Y+ = Y + f(X, Y) dt + c sqrt(dt) N(0, 1) + (m_delta - Lambda) dt + (jumps in the step)

The jump part is the Levy process of the model written as compensated small
jumps plus large jumps.  Jumps below the threshold ``delta`` enter through
their mean rate ``m_delta``, jumps of size at least ``delta`` are drawn
explicitly and applied at the end of the step that contains them, and the
compensator ``-Lambda dt`` of all jumps below one is added back.

Path ``k`` of a run with master seed ``s`` uses ``path_rng(s, k)``: first the
``N`` Gaussian increments, then its jump train.  Ensembles are therefore
identical whatever the batch size or thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .levy import DEFAULT_DELTA, JumpTrain, path_rng, sample_jumps
from .model import Path, action, as_degenerate

__all__ = [
    "SamplePath",
    "TubeEstimate",
    "BridgeEnsemble",
    "OMRatioReport",
    "SimulationBlowUp",
    "BudgetExceeded",
    "simulate_sde",
    "simulate_ensemble",
    "simulate_bridge_ensemble",
    "tube_distances",
    "estimate_tube_probability",
    "om_ratio_check",
    "wilson_interval",
    "controllability_ratios",
    "format_report",
]

Z95 = 1.959963984540054
Z95_ONE_SIDED = 1.6448536269514722


class SimulationBlowUp(FloatingPointError):
    def __init__(self, index, step, state):
        super().__init__(f"path {index} became non-finite after step {step}; "
                         f"last finite state {tuple(state)}")
        self.index = index
        self.step = step
        self.state = state


class BudgetExceeded(RuntimeError):
    def __init__(self, attempts, accepted, wanted):
        rate = accepted / attempts if attempts else 0.0
        super().__init__(f"rejection budget exhausted: {accepted}/{wanted} paths accepted "
                         f"after {attempts} attempts (acceptance rate {rate:.3e})")
        self.attempts = attempts
        self.accepted = accepted


def format_report(values: dict) -> str:
    """Render a ``key=value`` block, one entry per line, floats at full precision."""
    lines = []
    for k, v in values.items():
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def _steps(T, dt):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    N = int(round(T / dt))
    if N < 2:
        raise ValueError(f"T/dt must be at least 2, got {T / dt:g}")
    if abs(N * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    return N


@dataclass(frozen=True)
class SamplePath:
    """One simulated trajectory on the grid ``t_k = k dt``.

    ``seed`` and ``index`` identify the random stream (``None`` when the
    caller supplied the generator directly).
    """

    T: float
    dt: float
    x: np.ndarray
    y: np.ndarray
    seed: Optional[int] = None
    index: Optional[int] = None
    jumps: Optional[JumpTrain] = field(default=None, repr=False)

    @property
    def t(self):
        return np.linspace(0.0, self.T, self.x.size)

    def to_path(self) -> Path:
        return Path(0.0, self.T, self.x, self.y)


def _draw(model, rng, N, T, dt, delta):
    normals = rng.standard_normal(N)
    if model.measure is None:
        return normals, None, None
    train = sample_jumps(model.measure, T, delta, rng)
    step = np.clip(np.ceil(train.times / dt).astype(np.int64) - 1, 0, N - 1)
    incr = np.bincount(step, weights=train.sizes, minlength=N)
    return normals, incr, train


def _drift_shift(model, delta):
    if model.measure is None:
        return 0.0
    from .levy import truncated_small_mean
    return truncated_small_mean(model.measure, delta) - model.measure.lambda_mean


def _euler(m, z0, dt, normals, incr, shift, indices):
    """Vectorised Euler-Maruyama over a batch; ``normals`` has shape (B, N)."""
    B, N = normals.shape
    X = np.empty((B, N + 1))
    Y = np.empty((B, N + 1))
    X[:, 0], Y[:, 0] = z0
    noise = m.c * math.sqrt(dt) * normals
    if incr is not None:
        noise = noise + incr
    noise += shift * dt
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N):
            x, y = X[:, k], Y[:, k]
            X[:, k + 1] = x + m.g(x, y) * dt
            Y[:, k + 1] = y + m.f(x, y) * dt + noise[:, k]
    finite = np.isfinite(X).all(axis=1) & np.isfinite(Y).all(axis=1)
    if not finite.all():
        i = int(np.argmin(finite))
        ok = np.isfinite(X[i]) & np.isfinite(Y[i])
        last = int(np.argmin(ok)) - 1
        raise SimulationBlowUp(indices[i], last, (X[i, last], Y[i, last]))
    return X, Y


def simulate_sde(model, z0, T, dt, rng: np.random.Generator,
                 delta: float = DEFAULT_DELTA) -> SamplePath:
    """Simulate one path from ``z0`` on ``[0, T]``.

    Raises
    ------
    SimulationBlowUp
        The state overflowed; the last finite state is attached.
    """
    m = as_degenerate(model)
    N = _steps(T, dt)
    normals, incr, train = _draw(m, rng, N, T, dt, delta)
    X, Y = _euler(m, z0, dt, normals[None], None if incr is None else incr[None],
                  _drift_shift(m, delta), [None])
    return SamplePath(T, dt, X[0], Y[0], jumps=train)


def _batch(model, z0, T, dt, seed, indices, delta):
    m = as_degenerate(model)
    N = _steps(T, dt)
    normals = np.empty((len(indices), N))
    incr = None if m.measure is None else np.empty((len(indices), N))
    trains = []
    for row, k in enumerate(indices):
        nrm, inc, train = _draw(m, path_rng(seed, k), N, T, dt, delta)
        normals[row] = nrm
        if incr is not None:
            incr[row] = inc
        trains.append(train)
    X, Y = _euler(m, z0, dt, normals, incr, _drift_shift(m, delta), list(indices))
    return X, Y, trains


def _map_batches(fn, n, batch, threads, start=0):
    chunks = [range(a, min(a + batch, start + n)) for a in range(start, start + n, batch)]
    if threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def simulate_ensemble(model, z0, T, dt, seed: int, n: int, delta: float = DEFAULT_DELTA,
                      start: int = 0, batch: int = 1024, threads: int = 1) -> List[SamplePath]:
    """Paths ``start .. start + n - 1`` of the run with master seed ``seed``."""
    def run(idx):
        X, Y, trains = _batch(model, z0, T, dt, seed, idx, delta)
        return [SamplePath(T, dt, X[i], Y[i], seed, k, trains[i]) for i, k in enumerate(idx)]

    out = []
    for part in _map_batches(run, n, batch, threads, start):
        out.extend(part)
    return out


@dataclass
class BridgeEnsemble:
    """Endpoint-conditioned paths and the rejection bookkeeping.

    ``attempts`` counts simulated paths up to and including the last accepted
    one, so it does not depend on the batch size.  ``attempt_errors`` holds
    ``|X(T) - xT|`` for each of those attempts, in stream order.
    """

    paths: List[SamplePath]
    attempts: int
    attempt_errors: np.ndarray
    end_tol: float

    @property
    def end_errors(self) -> np.ndarray:
        return self.attempt_errors[self.attempt_errors <= self.end_tol]

    @property
    def acceptance_rate(self) -> float:
        return len(self.paths) / self.attempts if self.attempts else float("nan")


def simulate_bridge_ensemble(model, z0, xT, end_tol, n_keep, T, dt, seed: int,
                             delta: float = DEFAULT_DELTA, max_attempts: int = 10 ** 7,
                             batch: int = 1024, threads: int = 1) -> BridgeEnsemble:
    """Rejection-sample ``n_keep`` paths with ``|X(T) - xT| <= end_tol``.

    Raises
    ------
    BudgetExceeded
        Fewer than ``n_keep`` acceptances within ``max_attempts`` paths.
    """
    if not end_tol > 0:
        raise ValueError("end_tol must be positive")
    kept, errors = [], []
    attempts = 0
    next_index = 0

    def run(idx):
        X, Y, trains = _batch(model, z0, T, dt, seed, idx, delta)
        err = np.abs(X[:, -1] - xT)
        return err, [(k, SamplePath(T, dt, X[i], Y[i], seed, k, trains[i]))
                     for i, k in enumerate(idx) if err[i] <= end_tol]

    while len(kept) < n_keep:
        if next_index >= max_attempts:
            raise BudgetExceeded(next_index, len(kept), n_keep)
        size = min(batch * max(threads, 1), max_attempts - next_index)
        for err, part in _map_batches(run, size, batch, threads, next_index):
            errors.append(err)
            for k, sp in part:
                if len(kept) < n_keep:
                    kept.append(sp)
                    attempts = k + 1
        next_index += size
    all_err = np.concatenate(errors)[:attempts] if errors else np.empty(0)
    return BridgeEnsemble(kept, attempts, all_err, float(end_tol))


def _on_grid(phi: Path, T, N):
    if abs(phi.T - T) > 1e-12 * max(T, 1.0) or phi.t0 != 0.0:
        raise ValueError("reference path must live on [0, T]")
    if phi.n == N:
        return phi.phi1, phi.phi2
    t = np.linspace(0.0, T, N + 1)
    return CubicSpline(phi.t, phi.phi1)(t), CubicSpline(phi.t, phi.phi2)(t)


def tube_distances(model, refs: Sequence[Path], n, T, dt, seed: int,
                   delta: float = DEFAULT_DELTA, batch: int = 4096,
                   threads: int = 1) -> np.ndarray:
    """Sup-norm distances of ``n`` simulated paths to each reference path.

    All references must start at the same phase point, which is used as the
    initial state.  Returns an array of shape ``(len(refs), n)``; the same
    simulated paths serve every reference.
    """
    refs = list(refs)
    z0 = (refs[0].phi1[0], refs[0].phi2[0])
    for r in refs[1:]:
        if not np.allclose([r.phi1[0], r.phi2[0]], z0, rtol=1e-12, atol=1e-12):
            raise ValueError("reference paths must share the initial state")
    N = _steps(T, dt)
    grids = [_on_grid(r, T, N) for r in refs]

    def run(idx):
        X, Y, _ = _batch(model, z0, T, dt, seed, idx, delta)
        return np.stack([np.maximum(np.abs(X - a).max(axis=1), np.abs(Y - b).max(axis=1))
                         for a, b in grids])

    return np.concatenate(_map_batches(run, n, batch, threads), axis=1)


def wilson_interval(hits: int, n: int, z: float = Z95):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = hits / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class TubeEstimate:
    """Monte Carlo probability that a path stays within ``epsilon`` of a reference.

    The interval is the two-sided 95% Wilson interval; with no hits it is the
    one-sided 95% upper bound and ``one_sided`` is set.
    """

    epsilon: float
    hits: int
    n: int
    p_hat: float
    ci_low: float
    ci_high: float
    one_sided: bool = False

    @classmethod
    def from_hits(cls, epsilon, hits, n):
        hits = int(hits)
        if hits == 0:
            return cls(float(epsilon), 0, n, 0.0, 0.0, wilson_interval(0, n, Z95_ONE_SIDED)[1], True)
        lo, hi = wilson_interval(hits, n)
        return cls(float(epsilon), hits, n, hits / n, lo, hi)

    def report(self) -> dict:
        return {"p_hat": self.p_hat, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "n": self.n, "hits": self.hits, "epsilon": self.epsilon}


def estimate_tube_probability(model, phi: Path, epsilon, n, T, dt, seed: int,
                              delta: float = DEFAULT_DELTA, threads: int = 1):
    """Fraction of ``n`` paths from ``phi(0)`` staying within ``epsilon`` of ``phi``.

    ``epsilon`` may be a sequence, in which case one estimate per radius is
    returned from the same simulated paths.
    """
    eps = np.atleast_1d(np.asarray(epsilon, dtype=float))
    if np.any(eps <= 0):
        raise ValueError("epsilon must be positive")
    d = tube_distances(model, [phi], n, T, dt, seed, delta, threads=threads)[0]
    out = [TubeEstimate.from_hits(e, np.count_nonzero(d <= e), n) for e in eps]
    return out if np.ndim(epsilon) else out[0]


@dataclass(frozen=True)
class OMRatioReport:
    """Empirical against predicted log-ratio of two tube probabilities.

    ``delta_hat = ln(p_a / p_b)`` and ``delta_theory = -(I_a - I_b)``.  When a
    tube has no hits, ``delta_hat`` is NaN and ``bound`` holds the one-sided
    bound on it (``bound_kind`` is "lower" or "upper").
    """

    epsilon: float
    n: int
    hits_a: int
    hits_b: int
    hits_ab: int
    action_a: float
    action_b: float
    delta_hat: float
    delta_theory: float
    se: float
    bound: Optional[float] = None
    bound_kind: Optional[str] = None

    @property
    def degenerate(self) -> bool:
        return self.bound_kind is not None

    @property
    def difference(self) -> float:
        return self.delta_hat - self.delta_theory

    def within(self, rel=0.2, n_se=3.0) -> bool:
        if self.degenerate:
            return False
        return abs(self.difference) <= max(rel * abs(self.delta_theory), n_se * self.se)

    def report(self) -> dict:
        out = {"epsilon": self.epsilon, "n": self.n, "hits_a": self.hits_a,
               "hits_b": self.hits_b, "hits_ab": self.hits_ab, "action_a": self.action_a,
               "action_b": self.action_b, "delta_hat": self.delta_hat,
               "delta_theory": self.delta_theory, "difference": self.difference, "se": self.se}
        if self.degenerate:
            out["bound_kind"] = self.bound_kind
            out["bound"] = self.bound
        return out


def om_ratio_check(model, phi_a: Path, phi_b: Path, epsilon, n, dt, seed: int,
                   delta: float = DEFAULT_DELTA, constraint_tol: float = 1e-6,
                   threads: int = 1) -> OMRatioReport:
    """Compare ``ln(P_a / P_b)`` from simulation with ``-(I_a - I_b)``.

    Both tubes are evaluated on the same simulated paths.  The standard error
    is the delta-method value including the covariance of the two hit
    indicators.
    """
    if phi_a.T != phi_b.T:
        raise ValueError("reference paths must share the horizon")
    T = phi_a.T
    I_a = action(model, phi_a, check="raise", tol=constraint_tol)
    I_b = action(model, phi_b, check="raise", tol=constraint_tol)
    theory = I_b - I_a
    if phi_a is phi_b:
        d = tube_distances(model, [phi_a], n, T, dt, seed, delta, threads=threads)
        d = np.vstack([d, d])
    else:
        d = tube_distances(model, [phi_a, phi_b], n, T, dt, seed, delta, threads=threads)
    in_a, in_b = d[0] <= epsilon, d[1] <= epsilon
    ha, hb, hab = int(in_a.sum()), int(in_b.sum()), int((in_a & in_b).sum())
    common = dict(epsilon=float(epsilon), n=int(n), hits_a=ha, hits_b=hb, hits_ab=hab,
                  action_a=I_a, action_b=I_b, delta_theory=theory)
    if ha == 0 or hb == 0:
        if ha == 0 and hb == 0:
            return OMRatioReport(delta_hat=math.nan, se=math.nan, bound=math.nan,
                                 bound_kind="none", **common)
        up = wilson_interval(0, n, Z95_ONE_SIDED)[1]
        if ha == 0:
            lo_b = wilson_interval(hb, n)[0]
            return OMRatioReport(delta_hat=math.nan, se=math.nan,
                                 bound=math.log(up / lo_b), bound_kind="upper", **common)
        lo_a = wilson_interval(ha, n)[0]
        return OMRatioReport(delta_hat=math.nan, se=math.nan,
                             bound=math.log(lo_a / up), bound_kind="lower", **common)
    pa, pb, pab = ha / n, hb / n, hab / n
    var = ((1 - pa) / pa + (1 - pb) / pb - 2 * (pab - pa * pb) / (pa * pb)) / n
    return OMRatioReport(delta_hat=math.log(ha) - math.log(hb), se=math.sqrt(max(var, 0.0)),
                         **common)


def controllability_ratios(model, phi: Path, n, dt, seed: int,
                           delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Ratios ``sup|X* - phi1| / sup|Y* - phi2|`` for the auxiliary dynamics.

    The auxiliary system replaces the drift of the noisy component by the
    reference derivative, ``Y* = phi2 + c W + L``, and keeps
    ``X*' = g(X*, Y*)``.  The ratio stays bounded when small balls of the
    noisy component control the noiseless one.
    """
    m = as_degenerate(model)
    T = phi.T
    N = _steps(T, dt)
    a, b = _on_grid(phi, T, N)
    shift = _drift_shift(m, delta)
    noise = np.empty((n, N))
    for i in range(n):
        normals, incr, _ = _draw(m, path_rng(seed, i), N, T, dt, delta)
        noise[i] = m.c * math.sqrt(dt) * normals + shift * dt
        if incr is not None:
            noise[i] += incr
    Y = b + np.concatenate([np.zeros((n, 1)), np.cumsum(noise, axis=1)], axis=1)
    X = np.empty_like(Y)
    X[:, 0] = a[0]
    for k in range(N):
        X[:, k + 1] = X[:, k] + m.g(X[:, k], Y[:, k]) * dt
    return np.abs(X - a).max(axis=1) / np.abs(Y - b).max(axis=1)
