import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from statsmodels.stats.proportion import proportion_confint

from omlevy.levy import AlphaStableMeasure, path_rng, tail_mass
from omlevy.model import Path, double_well_langevin, quadratic_langevin
from omlevy.pathways import quadratic_global_mptp
from omlevy.simulate import (BudgetExceeded, SimulationBlowUp, TubeEstimate,
                             controllability_ratios, estimate_tube_probability,
                             format_report, om_ratio_check, simulate_bridge_ensemble,
                             simulate_ensemble, simulate_sde, tube_distances, wilson_interval)
from omlevy.validation import ratio_reference_paths

FIG = AlphaStableMeasure(0.5, 0.5)


def fig_model():
    return quadratic_langevin(3.0, 0.8, FIG)


def test_noiseless_limit_is_first_order():
    model = quadratic_langevin(3.0, 1e-14)
    z0 = (-1.0, 2.0)
    ode = solve_ivp(lambda t, u: [u[1], -3 * u[1] + u[0]], (0, 1), z0, rtol=1e-12,
                    atol=1e-12, dense_output=True)
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        sp = simulate_sde(model, z0, 1.0, dt, np.random.default_rng(0))
        ref = ode.sol(sp.t)
        errs.append(max(np.max(np.abs(sp.x - ref[0])), np.max(np.abs(sp.y - ref[1]))))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.8) & (ratios < 2.2))


def test_position_has_no_direct_noise():
    model = double_well_langevin(1.0, 0.8, FIG)
    sp = simulate_sde(model, (0.2, -0.4), 1.0, 1e-3, path_rng(4, 0))
    m = model.degenerate
    replay = sp.x[:-1] + m.g(sp.x[:-1], sp.y[:-1]) * sp.dt
    assert np.array_equal(replay, sp.x[1:])


def test_grid_and_preconditions():
    sp = simulate_sde(fig_model(), (0.0, 0.0), 2.0, 1e-3, path_rng(0, 0))
    assert sp.x.size == 2001 and sp.t[-1] == 2.0
    with pytest.raises(ValueError):
        simulate_sde(fig_model(), (0, 0), 1.0, 0.6, path_rng(0, 0))
    with pytest.raises(ValueError):
        simulate_sde(fig_model(), (0, 0), 1.0, -1e-3, path_rng(0, 0))
    with pytest.raises(ValueError):
        simulate_sde(fig_model(), (0, 0), 1.0, 3e-3, path_rng(0, 0))


def test_ensemble_matches_single_paths_and_is_layout_free():
    model = fig_model()
    a = simulate_ensemble(model, (-1.0, 5.8), 0.5, 1e-3, seed=3, n=7, batch=3)
    b = simulate_ensemble(model, (-1.0, 5.8), 0.5, 1e-3, seed=3, n=7, batch=1024, threads=2)
    c = simulate_ensemble(model, (-1.0, 5.8), 0.5, 1e-3, seed=3, n=4, start=3)
    for k in range(7):
        single = simulate_sde(model, (-1.0, 5.8), 0.5, 1e-3, path_rng(3, k))
        assert np.array_equal(a[k].x, single.x) and np.array_equal(a[k].y, single.y)
        assert np.array_equal(b[k].y, single.y)
        assert a[k].index == k and a[k].seed == 3
    assert np.array_equal(c[0].y, a[3].y)


def test_one_step_mean_drift():
    # compensated scheme: jumps below one in absolute value average to zero
    # extra drift, so the mean step is f dt once large jumps are excluded
    model = fig_model()
    x, y, dt, n = 0.5, -0.2, 0.01, 100_000
    paths = simulate_ensemble(model, (x, y), 2 * dt, dt, seed=21, n=n, delta=1e-3, batch=8192)
    dy = np.array([p.y[1] - y for p in paths])
    big = np.array([np.any((np.abs(p.jumps.sizes) >= 1) & (p.jumps.times <= dt))
                    for p in paths])
    kept = dy[~big]
    f = -3 * y + x
    se = kept.std(ddof=1) / math.sqrt(kept.size)
    assert abs(kept.mean() - f * dt) <= 4 * se


def test_blow_up_is_reported():
    model = double_well_langevin(1.0, 0.8)
    with pytest.raises(SimulationBlowUp) as info:
        simulate_sde(model, (1e30, 0.0), 1.0, 1e-2, path_rng(0, 0))
    assert all(np.isfinite(info.value.state))


def test_bridge_ensemble_properties():
    model = fig_model()
    mp = quadratic_global_mptp(3.0, model.Lambda, -1.0, 1.0, 2.0)
    z0 = (-1.0, mp.y0)
    ens = simulate_bridge_ensemble(model, z0, 1.0, 0.1, 15, 2.0, 1e-3, seed=0, batch=256)
    assert len(ens.paths) == 15
    assert all(abs(p.x[-1] - 1.0) <= 0.1 for p in ens.paths)
    assert ens.attempt_errors.size == ens.attempts
    assert np.count_nonzero(ens.attempt_errors <= 0.1) == 15
    assert ens.end_errors.size == 15
    # batch size does not change the result
    other = simulate_bridge_ensemble(model, z0, 1.0, 0.1, 15, 2.0, 1e-3, seed=0, batch=1000)
    assert other.attempts == ens.attempts
    assert [p.index for p in other.paths] == [p.index for p in ens.paths]


def test_bridge_with_infinite_tolerance_is_raw():
    model = fig_model()
    ens = simulate_bridge_ensemble(model, (0.0, 0.0), 1.0, np.inf, 5, 0.5, 1e-3, seed=2)
    raw = simulate_ensemble(model, (0.0, 0.0), 0.5, 1e-3, seed=2, n=5)
    assert ens.attempts == 5
    assert all(np.array_equal(a.x, b.x) for a, b in zip(ens.paths, raw))


def test_acceptance_is_nested_in_tolerance():
    model = fig_model()
    ens = simulate_bridge_ensemble(model, (-1.0, 5.8), 1.0, 10.0, 400, 2.0, 1e-2, seed=1)
    counts = [np.count_nonzero(ens.attempt_errors <= tol) for tol in (10.0, 1.0, 0.3, 0.1)]
    assert counts == sorted(counts, reverse=True)


def test_bridge_budget_and_empty_request():
    model = fig_model()
    with pytest.raises(BudgetExceeded) as info:
        simulate_bridge_ensemble(model, (-1.0, 5.8), 1.0, 1e-6, 3, 2.0, 1e-2, seed=0,
                                 max_attempts=50)
    assert info.value.attempts == 50
    empty = simulate_bridge_ensemble(model, (-1.0, 5.8), 1.0, 0.1, 0, 2.0, 1e-2, seed=0)
    assert empty.paths == [] and empty.attempts == 0
    with pytest.raises(ValueError):
        simulate_bridge_ensemble(model, (-1.0, 5.8), 1.0, 0.0, 3, 2.0, 1e-2, seed=0)


@given(st.integers(0, 1000), st.integers(1, 1000))
def test_wilson_matches_reference(hits, extra):
    n = hits + extra
    lo, hi = wilson_interval(hits, n)
    ref = proportion_confint(hits, n, alpha=0.05, method="wilson")
    assert lo == pytest.approx(ref[0], abs=1e-9) and hi == pytest.approx(ref[1], abs=1e-9)
    assert lo <= hits / n <= hi


def test_tube_estimate_fields():
    est = TubeEstimate.from_hits(0.5, 40, 1000)
    assert est.p_hat == 0.04 and est.ci_low <= est.p_hat <= est.ci_high
    zero = TubeEstimate.from_hits(0.5, 0, 1000)
    assert zero.p_hat == 0.0 and zero.one_sided and zero.ci_high > 0
    # one-sided 95% bound with no hits: 1 - 0.05^(1/n) to leading order
    assert zero.ci_high == pytest.approx(1 - 0.05 ** (1 / 1000), rel=0.1)
    assert "p_hat=0.04\n" in format_report(est.report())


def test_tube_probability_monotone_and_complete():
    model = fig_model()
    phi = quadratic_global_mptp(3.0, model.Lambda, -1.0, 1.0, 2.0).to_path(2001)
    eps = [0.25, 0.5, 1.0, 2.0, np.inf]
    ests = estimate_tube_probability(model, phi, eps, 2000, 2.0, 1e-3, seed=5)
    hits = [e.hits for e in ests]
    assert hits == sorted(hits)
    assert ests[-1].p_hat == 1.0
    single = estimate_tube_probability(model, phi, 1.0, 2000, 2.0, 1e-3, seed=5)
    assert single.hits == ests[2].hits
    with pytest.raises(ValueError):
        estimate_tube_probability(model, phi, 0.0, 10, 2.0, 1e-3, seed=5)


def test_reference_is_resampled_to_the_simulation_grid():
    model = fig_model()
    mp = quadratic_global_mptp(3.0, model.Lambda, -1.0, 1.0, 2.0)
    fine, coarse = mp.to_path(2001), mp.to_path(201)
    d_fine = tube_distances(model, [fine], 300, 2.0, 1e-3, seed=1)
    d_coarse = tube_distances(model, [coarse], 300, 2.0, 1e-3, seed=1)
    assert np.max(np.abs(d_fine - d_coarse)) < 1e-5
    with pytest.raises(ValueError):
        tube_distances(model, [mp.to_path(101), Path.from_functions(np.sin, np.cos, 2.0, 50)],
                       10, 2.0, 1e-3, seed=1)


def test_halving_dt_keeps_tube_probability():
    model = quadratic_langevin(3.0, 0.8)
    phi_a, _ = ratio_reference_paths()
    a = estimate_tube_probability(model, phi_a, 1.0, 20_000, 0.5, 1e-3, seed=8)
    b = estimate_tube_probability(model, phi_a, 1.0, 20_000, 0.5, 5e-4, seed=9)
    assert a.ci_low <= b.ci_high and b.ci_low <= a.ci_high


def test_ratio_identical_and_antisymmetric():
    model = quadratic_langevin(3.0, 0.8)
    phi_a, phi_b = ratio_reference_paths()
    same = om_ratio_check(model, phi_a, phi_a, 0.8, 5000, 1e-3, seed=3)
    assert same.delta_hat == 0.0 and same.delta_theory == 0.0
    ab = om_ratio_check(model, phi_a, phi_b, 0.8, 5000, 1e-3, seed=3)
    ba = om_ratio_check(model, phi_b, phi_a, 0.8, 5000, 1e-3, seed=3)
    assert ab.delta_hat == -ba.delta_hat and ab.delta_theory == -ba.delta_theory
    assert ab.delta_theory == pytest.approx(-0.5, abs=1e-9)
    assert ab.se > 0 and ab.hits_ab <= min(ab.hits_a, ab.hits_b)


def test_ratio_with_empty_tube_reports_bound():
    model = quadratic_langevin(3.0, 0.8)
    phi_a, phi_b = ratio_reference_paths(delta_action=1.0)
    r = om_ratio_check(model, phi_a, phi_b, 0.05, 200, 1e-3, seed=0)
    assert r.degenerate and math.isnan(r.delta_hat)
    assert "bound_kind" in r.report()


def test_ratio_requires_kinematic_paths():
    model = quadratic_langevin(3.0, 0.8)
    phi_a, phi_b = ratio_reference_paths()
    bad = Path(0.0, 0.5, phi_a.phi1, 2 * phi_a.phi2 + 1e-3)
    bad = Path(0.0, 0.5, bad.phi1 - bad.phi1[0], bad.phi2 - bad.phi2[0])
    with pytest.raises(ValueError):
        om_ratio_check(model, bad, phi_b, 0.5, 10, 1e-3, seed=0)


def test_controllability_ratio_bounded_and_stable():
    model = fig_model()
    phi = quadratic_global_mptp(3.0, model.Lambda, -1.0, 1.0, 2.0).to_path(2001)
    r1 = controllability_ratios(model, phi, 1000, 2e-3, seed=0)
    r2 = controllability_ratios(model, phi, 1000, 1e-3, seed=0)
    assert np.all(np.isfinite(r1)) and np.all(np.isfinite(r2))
    # for g = y the position error is an integral of the velocity error
    assert r1.max() <= 2.0 * 1.01 and r2.max() <= 2.0 * 1.01
    assert r1.max() == pytest.approx(r2.max(), rel=0.1)
