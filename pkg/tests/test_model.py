"""Derivative consistency and constructor validation for the builtin maps."""

import numpy as np
import pytest

from shadowsense import (
    BUILTIN_SYSTEMS,
    BlockHyperbolicLinear,
    ExpandingCircle,
    PerturbedCatMap,
    Solenoid,
    make_system,
    model_derivatives,
)
from shadowsense.errors import ConsistencyError, ConfigError, InvalidStateError

TWO_PI = 2.0 * np.pi

ALL_NAMES = sorted(BUILTIN_SYSTEMS)
S_VALUES = {"expanding_circle": 0.07, "perturbed_cat_map": 0.05,
            "solenoid": 0.04, "block_hyperbolic_linear": 0.1}


def sample_states(model, rng, n):
    box = model.phase_box()
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((n, model.dim))


def wrapped_diff(a, b, mask):
    d = np.asarray(a) - np.asarray(b)
    d = np.where(mask, (d + np.pi) % TWO_PI - np.pi, d)
    return d


@pytest.mark.parametrize("name", ALL_NAMES)
def test_jvp_matches_finite_difference(name):
    model = make_system(name)
    s = S_VALUES[name]
    mask = model.periodic_mask()
    rng = np.random.default_rng(11)
    h = 1e-6
    for u in sample_states(model, rng, 40):
        v = rng.standard_normal(model.dim)
        fd = wrapped_diff(model.step(u + h * v, s), model.step(u - h * v, s),
                          mask) / (2 * h)
        np.testing.assert_allclose(model.jvp(u, v, s), fd, atol=5e-6, rtol=5e-6)


@pytest.mark.parametrize("name", ALL_NAMES)
def test_vjp_is_jvp_transpose(name):
    model = make_system(name)
    s = S_VALUES[name]
    rng = np.random.default_rng(12)
    for u in sample_states(model, rng, 60):
        v = rng.standard_normal(model.dim)
        w = rng.standard_normal(model.dim)
        lhs = np.dot(w, model.jvp(u, v, s))
        rhs = np.dot(model.vjp(u, w, s), v)
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


@pytest.mark.parametrize("name", ALL_NAMES)
def test_dfds_matches_finite_difference(name):
    model = make_system(name)
    s = S_VALUES[name]
    mask = model.periodic_mask()
    rng = np.random.default_rng(13)
    h = 1e-6
    for u in sample_states(model, rng, 40):
        fd = wrapped_diff(model.step(u, s + h), model.step(u, s - h), mask) / (2 * h)
        np.testing.assert_allclose(model.dfds(u, s), fd, atol=5e-6, rtol=5e-6)


@pytest.mark.parametrize("name", ALL_NAMES)
def test_objective_grad_matches_finite_difference(name):
    model = make_system(name)
    rng = np.random.default_rng(14)
    h = 1e-6
    for u in sample_states(model, rng, 40):
        g = model.objective_grad(u)
        for i in range(model.dim):
            e = np.zeros(model.dim)
            e[i] = h
            fd = (model.objective(u + e) - model.objective(u - e)) / (2 * h)
            assert abs(g[i] - fd) < 5e-6


def test_expanding_circle_step_values():
    ec = ExpandingCircle()
    # plain doubling at s=0
    np.testing.assert_allclose(ec.step(np.array([1.5 * np.pi]), 0.0), [np.pi],
                               atol=1e-14)
    u = np.array([1.0])
    got = ec.step(u, 0.1)
    np.testing.assert_allclose(got, [(2.0 + 0.1 * np.sin(1.0)) % TWO_PI],
                               atol=1e-14)


def test_cat_map_step_values():
    cm = PerturbedCatMap()
    np.testing.assert_allclose(cm.step(np.zeros(2), 0.0), [0.0, 0.0], atol=1e-14)
    u = np.array([np.pi, np.pi / 2])
    got = cm.step(u, 0.0)
    np.testing.assert_allclose(got, [(2 * np.pi + np.pi / 2) % TWO_PI,
                                     (np.pi + np.pi / 2) % TWO_PI], atol=1e-13)


def test_solenoid_contracts_cross_section():
    so = Solenoid()
    u = np.array([1.0, 0.2, -0.1])
    got = so.step(u, 0.0)
    np.testing.assert_allclose(got[0], 2.0 % TWO_PI, atol=1e-14)
    np.testing.assert_allclose(got[1], 0.25 * 0.2 + 0.3 * np.cos(1.0), atol=1e-14)
    np.testing.assert_allclose(got[2], 0.25 * (-0.1) + 0.3 * np.sin(1.0), atol=1e-14)


def test_block_linear_stable_block_centers_at_pi():
    b = BlockHyperbolicLinear(unstable_mults=(2.0,), stable_mults=(0.5,))
    u = np.array([0.3, np.pi + 1.0])
    got = b.step(u, 0.0)
    np.testing.assert_allclose(got[0], 0.6, atol=1e-14)
    np.testing.assert_allclose(got[1], np.pi + 0.5, atol=1e-14)


def test_block_linear_shear_couples_first_stable_coordinate():
    b = BlockHyperbolicLinear(unstable_mults=(2.0,), stable_mults=(0.5,), shear=1.5)
    rng = np.random.default_rng(0)
    u = sample_states(b, rng, 1)[0]
    jac = np.column_stack([b.jvp(u, e, 0.0) for e in np.eye(2)])
    np.testing.assert_allclose(jac, [[2.0, 1.5], [0.0, 0.5]], atol=1e-14)


def test_block_linear_rejects_non_hyperbolic_multipliers():
    with pytest.raises(ValueError):
        BlockHyperbolicLinear(unstable_mults=(1.0,), stable_mults=(0.5,))
    with pytest.raises(ValueError):
        BlockHyperbolicLinear(unstable_mults=(2.0,), stable_mults=(1.0,))
    with pytest.raises(ValueError):
        BlockHyperbolicLinear(unstable_mults=(2.0,), stable_mults=(0.5,),
                              objective="nope")
    # via the registry the same complaint becomes a ConfigError
    with pytest.raises(ConfigError):
        make_system("block_hyperbolic_linear", {"unstable_mults": (1.0,)})


def test_make_system_unknown_name():
    with pytest.raises(ConfigError):
        make_system("henon")


def test_make_system_params_forwarded():
    b = make_system("block_hyperbolic_linear",
                    {"unstable_mults": (2.0, 3.0), "stable_mults": (0.5,)})
    assert b.dim == 3 and b.num_unstable == 2


@pytest.mark.parametrize("name", ALL_NAMES)
def test_declared_unstable_count(name):
    model = make_system(name)
    assert model.num_unstable == 1
    assert model.dim == {"expanding_circle": 1, "perturbed_cat_map": 2,
                         "solenoid": 3, "block_hyperbolic_linear": 2}[name]


@pytest.mark.parametrize("name", ALL_NAMES)
def test_describe_is_json_friendly(name):
    import json
    d = make_system(name).describe()
    assert json.loads(json.dumps(d)) == d


def test_model_derivatives_checks_the_pair(ec):
    u = np.array([1.0])
    good = ec.step(u, 0.05)
    X, J, J_u = model_derivatives(ec, u, good, 0.05)
    np.testing.assert_allclose(X, np.sin(u), atol=1e-14)
    np.testing.assert_allclose(J, np.cos(good[0]), atol=1e-14)
    np.testing.assert_allclose(J_u, -np.sin(good), atol=1e-14)
    with pytest.raises(ConsistencyError):
        model_derivatives(ec, u, good + 0.01, 0.05)


def test_bad_states_rejected(ec):
    with pytest.raises(InvalidStateError):
        ec.step(np.array([np.nan]), 0.0)
    with pytest.raises(ValueError):
        ec.step(np.array([1.0, 2.0]), 0.0)
