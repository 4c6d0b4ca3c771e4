"""Orbit generation and time averaging.

Orbits are generated with a spin-up prefix that is discarded, so recorded
states start on (a numerical neighborhood of) the attractor.  The state
immediately preceding the first recorded one is kept: the forcing X_k
attached to the transition into step k is evaluated at u_{k-1}, so keeping
the predecessor makes X_0 well-defined.

Builtin systems run inside compiled kernels; any other SystemModel falls
back to stepping through the model's own methods.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _K
from .errors import DivergenceError

_ORBIT_KERNELS = {
    "ec": lambda p, u0, s, spin, n: _K.ec_orbit(u0, s, spin, n),
    "cat": lambda p, u0, s, spin, n: _K.cat_orbit(u0, s, spin, n),
    "sol": lambda p, u0, s, spin, n: _K.sol_orbit(u0, s, p["lam"], p["amp"],
                                                  spin, n),
    "lin": lambda p, u0, s, spin, n: _K.lin_orbit(u0, s, p["L"], p["X0"],
                                                  p["center"], spin, n),
}

_OBJ_MEAN_KERNELS = {
    "ec": lambda p, u0, s, spin, n: _K.ec_obj_mean(u0, s, spin, n),
    "cat": lambda p, u0, s, spin, n: _K.cat_obj_mean(u0, s, spin, n),
    "sol": lambda p, u0, s, spin, n: _K.sol_obj_mean(u0, s, p["lam"],
                                                     p["amp"], spin, n),
    "lin": lambda p, u0, s, spin, n: _K.lin_obj_mean(u0, s, p["L"], p["X0"],
                                                     p["center"],
                                                     p["obj_kind"],
                                                     p["obj_w"], spin, n),
}


@dataclass
class Orbit:
    """A recorded trajectory u_0 .. u_K at fixed parameter s.

    states has shape (K+1, M).  prev_state is the last spin-up state (the
    preimage of states[0]), or None when spinup was 0.
    """

    states: np.ndarray
    s: float
    spinup_steps: int
    seed: int
    prev_state: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.states.shape[0] - 1

    @property
    def dim(self):
        return self.states.shape[1]

    def save_npz(self, path):
        prev = self.prev_state if self.prev_state is not None \
            else np.full(self.dim, np.nan)
        np.savez(path, states=self.states, prev_state=prev,
                 s=self.s, spinup_steps=self.spinup_steps, seed=self.seed)

    @classmethod
    def load_npz(cls, path):
        with np.load(path) as d:
            prev = d["prev_state"]
            if np.all(np.isnan(prev)):
                prev = None
            return cls(states=d["states"], s=float(d["s"]),
                       spinup_steps=int(d["spinup_steps"]),
                       seed=int(d["seed"]), prev_state=prev)


def initial_state(model, seed):
    """Sample a starting point uniformly from the model's phase box."""
    rng = np.random.default_rng(seed)
    box = model.phase_box()
    return box[:, 0] + rng.random(model.dim) * (box[:, 1] - box[:, 0])


def generate_orbit(model, s, K, spinup=500, seed=0, u0=None):
    """Run the map for spinup + K steps and record the last K + 1 states.

    Identical (model, s, K, spinup, seed) inputs reproduce the orbit
    bit-for-bit.  Raises DivergenceError if any state goes non-finite; the
    reported step counts from the first recorded state.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if u0 is None:
        u0 = initial_state(model, seed)
    u0 = np.ascontiguousarray(np.asarray(u0, dtype=float).reshape(-1))
    spec = model.kernel_spec()
    if spec is not None:
        tag, params = spec
        states, prev, bad = _ORBIT_KERNELS[tag](params, u0, float(s),
                                                int(spinup), int(K))
        if bad >= 0:
            raise DivergenceError(int(bad))
        prev_state = None if spinup == 0 else prev
    else:
        states, prev_state = _orbit_python(model, u0, s, spinup, K)
    return Orbit(states=states, s=float(s), spinup_steps=int(spinup),
                 seed=int(seed) if np.isscalar(seed) else -1,
                 prev_state=prev_state)


def _orbit_python(model, u0, s, spinup, K):
    u = u0.copy()
    prev_state = None
    for _ in range(spinup):
        prev_state = u
        u = model.step(u, s)
    states = np.empty((K + 1, model.dim))
    if not np.all(np.isfinite(u)):
        raise DivergenceError(0)
    states[0] = u
    for k in range(K):
        u = model.step(u, s)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(k + 1)
        states[k + 1] = u
    return states, prev_state


def time_average(orbit, g, window=None):
    """Mean of g(u_k) over k in [w0, w1) (default: [0, K)).

    g must accept a batch of states (n, M) and return (n,).
    """
    w0, w1 = window if window is not None else (0, orbit.K)
    if not 0 <= w0 < w1 <= orbit.K:
        raise ValueError(f"bad window ({w0}, {w1}) for K={orbit.K}")
    vals = np.asarray(g(orbit.states[w0:w1]), dtype=float)
    return float(np.mean(vals))


def objective_mean(model, s, navg, spinup=500, seed=0, u0=None):
    """Long-run objective average without storing the orbit.

    Fused generate-and-average used by the finite-difference oracle, where
    navg can be large enough that storing states would be wasteful.
    """
    if u0 is None:
        u0 = initial_state(model, seed)
    u0 = np.ascontiguousarray(np.asarray(u0, dtype=float).reshape(-1))
    spec = model.kernel_spec()
    if spec is not None:
        tag, params = spec
        mean, bad = _OBJ_MEAN_KERNELS[tag](params, u0, float(s),
                                           int(spinup), int(navg))
        if bad >= 0:
            raise DivergenceError(int(bad))
        return float(mean)
    u = u0.copy()
    for _ in range(spinup):
        u = model.step(u, s)
    acc = 0.0
    for k in range(navg):
        if not np.all(np.isfinite(u)):
            raise DivergenceError(k)
        acc += float(model.objective(u))
        u = model.step(u, s)
    return acc / navg
