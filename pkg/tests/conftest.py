import numpy as np
import pytest

from shadowsense import (
    BlockHyperbolicLinear,
    build_frames,
    generate_orbit,
    jacobian_sequence,
    make_system,
    propagate_adjoint,
    propagate_homogeneous,
)


@pytest.fixture(scope="session")
def ec():
    return make_system("expanding_circle")


@pytest.fixture(scope="session")
def cat():
    return make_system("perturbed_cat_map")


@pytest.fixture(scope="session")
def sol3():
    return make_system("solenoid")


@pytest.fixture(scope="session")
def diag_block():
    return BlockHyperbolicLinear(unstable_mults=(2.0,), stable_mults=(0.5,))


def full_pipeline(model, s, K, seed=0, m=None, spinup=300, basis_spinup=150):
    """Orbit, Jacobians, forward/adjoint bases and splitting frames."""
    orb = generate_orbit(model, s, K, spinup=spinup, seed=seed)
    jac = jacobian_sequence(model, orb.states, s)
    tb = propagate_homogeneous(orb, model, m=m, jac=jac, spinup=basis_spinup)
    ab = propagate_adjoint(orb, model, m=m, jac=jac, spinup=basis_spinup)
    frames = build_frames(orb, tb, ab)
    return orb, jac, tb, ab, frames


@pytest.fixture(scope="session")
def cat_pipeline(cat):
    return full_pipeline(cat, 0.05, 2000, seed=3)
