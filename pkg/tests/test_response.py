"""Shadowing direction oracle, correction terms, oracles and full reports."""

import json

import numpy as np
import pytest

from shadowsense import (
    BlockHyperbolicLinear,
    assemble_report,
    build_frames,
    correction_term,
    direct_ruelle,
    error_profile,
    explicit_shadowing_direction,
    finite_difference,
    forcing_sequence,
    generate_orbit,
    jacobian_sequence,
    propagate_adjoint,
    propagate_homogeneous,
    solve_nilss,
)
from shadowsense.errors import ConfigError, NeedsLongerOrbitError


def brute_direction(jac, X, frames, k, N_f, N_b):
    """Literal truncated two-sided sum, one step at a time."""
    v = np.zeros(X.shape[1])
    for n in range(N_f + 1):
        j = k - n
        y = X[j] - frames.project_unstable(X[j], j)
        for t in range(j, k):
            y = jac[t] @ y
            # exact pushforward stays stable; strip amplified rounding noise
            y = y - frames.project_unstable(y, t + 1)
        v += y
    for n in range(1, N_b + 1):
        j = k + n
        y = frames.project_unstable(X[j], j)
        for t in range(j - 1, k - 1, -1):
            y = np.linalg.solve(jac[t], y)
            # the exact pullback stays inside the unstable subspace;
            # re-projecting only strips rounding noise that the full-space
            # inverse would otherwise amplify by 1/|stable mult| per step
            y = frames.project_unstable(y, t)
        v -= y
    return v


def test_explicit_direction_matches_literal_sums(cat_pipeline, cat):
    orb, jac, tb, ab, fr = cat_pipeline
    X, _ = forcing_sequence(orb, cat)
    N_f = N_b = 25
    seq = explicit_shadowing_direction(orb, cat, fr, N_f=N_f, N_b=N_b, jac=jac, X=X)
    for k in (seq.start, seq.start + 37, seq.start + seq.vectors.shape[0] - 1):
        want = brute_direction(jac, X, fr, k, N_f, N_b)
        got = seq.vectors[k - seq.start]
        np.testing.assert_allclose(got, want, atol=1e-9)


def test_explicit_direction_matches_nilss_mid_window(cat_pipeline, cat):
    orb, jac, tb, ab, fr = cat_pipeline
    X, _ = forcing_sequence(orb, cat)
    sol = solve_nilss(orb, cat, basis=tb, segment_len=12, jac=jac, X=X)
    seq = explicit_shadowing_direction(orb, cat, fr, N_f=40, N_b=40, jac=jac, X=X)
    w0, _ = sol.window
    lo = seq.start
    hi = seq.start + seq.vectors.shape[0] - 1
    lo_i, hi_i = lo + 100, hi - 100
    a = sol.v.vectors[lo_i - w0:hi_i - w0]
    b = seq.vectors[lo_i - lo:hi_i - lo]
    assert np.max(np.abs(a - b)) < 1e-6
    assert seq.meta["unstable_tail"] < 1e-10


def test_correction_terms_expanding_circle(ec):
    # closed form at s=0: the only surviving term is n = -1 with value -1/4
    orb = generate_orbit(ec, 0.0, 30_000, spinup=500, seed=0)
    jac = jacobian_sequence(ec, orb.states, 0.0)
    tb = propagate_homogeneous(orb, ec, jac=jac, spinup=200)
    ab = propagate_adjoint(orb, ec, jac=jac, spinup=200)
    fr = build_frames(orb, tb, ab)
    res = correction_term(orb, ec, fr, N_back=4, N=3)
    assert abs(res.terms[-1] + 0.25) < 0.02
    # the n-th forward term carries 2^n-amplified forcing, so the noise on
    # n = 2 dominates the budget at this length
    for n in (-4, -3, -2, 0, 1, 2):
        assert abs(res.terms[n]) < 0.03
    assert abs(res.total - res.terms[-1]) < 0.06
    assert res.half_width < 0.04
    assert res.meta["backward_tail"] < 0.01


def test_correction_total_is_sum_of_series_not_terms(ec):
    # total is accumulated per step so its half width is honest; the sum of
    # the reported terms must still match it exactly
    orb = generate_orbit(ec, 0.0, 5000, spinup=300, seed=1)
    tb = propagate_homogeneous(orb, ec, spinup=150)
    ab = propagate_adjoint(orb, ec, spinup=150)
    fr = build_frames(orb, tb, ab)
    res = correction_term(orb, ec, fr, N_back=3, N=2)
    np.testing.assert_allclose(res.total, sum(res.terms.values()), atol=1e-12)


def test_direct_ruelle_geometric_series():
    # stable-only forcing with a linear objective: term_n = w . L^n X0 exactly
    w = np.array([0.0, 0.0, 0.3, -0.7])
    X0 = np.array([0.0, 0.0, 1.0, 0.5])
    model = BlockHyperbolicLinear(unstable_mults=(2.0, 3.0),
                                  stable_mults=(0.5, 0.25),
                                  forcing=X0, objective="linear", obj_weights=w)
    orb = generate_orbit(model, 0.0, 600, spinup=100, seed=4)
    res = direct_ruelle(orb, model, N_r=10, window=(80, 520))
    L = np.diag([2.0, 3.0, 0.5, 0.25])
    want = [float(w @ np.linalg.matrix_power(L, n) @ X0) for n in range(10)]
    for n in range(10):
        assert abs(res.terms[n] - want[n]) < 1e-12
    assert abs(res.total - sum(want)) < 1e-11


def test_finite_difference_deterministic(ec):
    a = finite_difference(ec, 0.0, delta_s=0.05, K=20_000, n_seeds=4, base_seed=17)
    b = finite_difference(ec, 0.0, delta_s=0.05, K=20_000, n_seeds=4, base_seed=17)
    assert a.estimate == b.estimate
    assert a.half_width == b.half_width
    assert len(a.per_seed) == 4
    # the response of the circle average vanishes at s=0
    assert abs(a.estimate) < 3 * a.half_width + 1e-3


def test_finite_difference_pairs_seeds(ec):
    # common random numbers: per-seed estimates vary far less than the
    # objective fluctuation / delta_s would without pairing
    res = finite_difference(ec, 0.0, delta_s=0.1, K=5000, n_seeds=6, base_seed=3)
    spread = np.std(res.per_seed)
    assert spread < 0.2


def test_error_profile_rates():
    # numerically truncated sums die off like the multipliers from each end
    model = BlockHyperbolicLinear(unstable_mults=(2.0,), stable_mults=(0.5,))
    s = 0.0
    orb = generate_orbit(model, s, 1000, spinup=100, seed=2)
    jac = jacobian_sequence(model, orb.states, s)
    tb = propagate_homogeneous(orb, model, jac=jac, spinup=120)
    ab = propagate_adjoint(orb, model, jac=jac, spinup=120)
    fr = build_frames(orb, tb, ab)
    rng = np.random.default_rng(9)
    X = rng.standard_normal((1001, 2))
    # the solve window sits strictly inside the oracle range so the
    # boundary layers at both solve endpoints are visible in the profile
    sol = solve_nilss(orb, model, basis=tb, window=(300, 700), jac=jac, X=X)
    seq = explicit_shadowing_direction(orb, model, fr, N_f=40, N_b=40,
                                       jac=jac, X=X)
    prof = error_profile(sol.v, seq)
    assert prof.plateau < 1e-8
    ln2 = np.log(2.0)
    assert 0.5 * ln2 < prof.forward_rate < 2.0 * ln2
    assert 0.5 * ln2 < prof.backward_rate < 2.0 * ln2


def test_assemble_report_fields_and_identity(ec):
    rep = assemble_report(ec, 0.0, K=4000, seed=0, N_back=4, N=2,
                          include_fd=True, fd_K=20_000, fd_seeds=4,
                          N_r=6, include_oracle=True,
                          config_echo={"system": "expanding_circle"})
    assert rep.corrected_total == rep.shadowing + rep.correction
    assert rep.K == 4000 and rep.m == 1
    assert set(rep.correction_terms) == set(range(-4, 2))
    d = rep.to_dict()
    back = json.loads(json.dumps(d))
    assert back == d
    assert "timings" not in d
    diag = d["diagnostics"]
    for key in ("recurrence_residual", "optimality_residual",
                "min_splitting_angle", "lyapunov_exponents",
                "n_positive_exponents", "oracle_plateau"):
        assert key in diag
    assert diag["n_positive_exponents"] == 1
    rows = rep.scalar_rows()
    assert any(r[1] == "corrected_total" for r in rows)


def test_assemble_report_requires_every_step_bases(ec):
    with pytest.raises(ConfigError):
        assemble_report(ec, 0.0, K=2000, renorm_every=5, include_fd=False)


def test_window_too_small_raises(ec):
    orb = generate_orbit(ec, 0.0, 60, spinup=20, seed=0)
    tb = propagate_homogeneous(orb, ec, spinup=20)
    ab = propagate_adjoint(orb, ec, spinup=20)
    fr = build_frames(orb, tb, ab)
    with pytest.raises(NeedsLongerOrbitError):
        explicit_shadowing_direction(orb, ec, fr, N_f=40, N_b=40)
