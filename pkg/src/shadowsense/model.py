"""Discrete-time map models with analytic derivative actions.

A SystemModel bundles the map u -> f(u, s), its Jacobian-vector products,
the parameter forcing df/ds, and a scalar objective J with gradient.  All
methods are vectorized over an optional leading axis: a state argument may
be a single vector of shape (M,) or a batch of shape (n, M), and outputs
follow suit.  Models are immutable after construction and hold no mutable
state, so they are safe to share across threads.

The builtin systems are uniformly hyperbolic benchmark maps on tori (or a
torus cross a contracting disk), each exposing a kernel_spec() consumed by
the compiled orbit kernels; user-defined subclasses simply return None
there and get the generic Python stepping path.
"""

import numpy as np

from .errors import ConfigError, ConsistencyError, InvalidStateError

TWO_PI = 2.0 * np.pi


def _check_finite(u):
    if not np.all(np.isfinite(u)):
        raise InvalidStateError("state contains non-finite components")


class SystemModel:
    """Interface for a parametrized discrete-time dynamical system.

    Attributes
    ----------
    dim : int
        Phase-space dimension M.
    num_unstable : int
        Number of positive Lyapunov exponents m (0 <= m <= dim).
    """

    dim = None
    num_unstable = None

    def step(self, u, s):
        """Apply the map once.  u: (M,) or (n, M); returns same shape."""
        raise NotImplementedError

    def jvp(self, u, w, s):
        """Jacobian-vector product (df/du)(u) w."""
        raise NotImplementedError

    def vjp(self, u, a, s):
        """Transposed Jacobian-vector product (df/du)(u)^T a."""
        raise NotImplementedError

    def dfds(self, u, s):
        """Parameter derivative df/ds at u; the forcing field."""
        raise NotImplementedError

    def objective(self, u):
        """Scalar objective J(u).  Returns shape u.shape[:-1]."""
        raise NotImplementedError

    def objective_grad(self, u):
        """Gradient dJ/du, same shape as u."""
        raise NotImplementedError

    def phase_box(self):
        """(M, 2) array of [low, high] bounds for sampling initial states."""
        raise NotImplementedError

    def periodic_mask(self):
        """Boolean (M,) mask of coordinates living on a circle mod 2 pi."""
        return np.zeros(self.dim, dtype=bool)

    def kernel_spec(self):
        """(tag, params) consumed by compiled kernels, or None."""
        return None

    def describe(self):
        return {"system": type(self).__name__, "dim": self.dim,
                "num_unstable": self.num_unstable}

    def _prep(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise ValueError(
                f"state has dimension {u.shape[-1]}, expected {self.dim}")
        _check_finite(u)
        return u


def _resolve_m(default, override, dim):
    m = default if override is None else int(override)
    if not 0 <= m <= dim:
        raise ValueError(f"num_unstable={m} outside [0, {dim}]")
    return m


class ExpandingCircle(SystemModel):
    """u -> 2u + s sin(u) on the circle, objective J = cos(u).

    Uniformly expanding for |s| < 1; the single exponent is ln 2 at s = 0.
    """

    dim = 1

    def __init__(self, num_unstable=None):
        self.num_unstable = _resolve_m(1, num_unstable, 1)

    def step(self, u, s):
        u = self._prep(u)
        return (2.0 * u + s * np.sin(u)) % TWO_PI

    def jvp(self, u, w, s):
        u = self._prep(u)
        return (2.0 + s * np.cos(u)) * np.asarray(w, dtype=float)

    def vjp(self, u, a, s):
        return self.jvp(u, a, s)

    def dfds(self, u, s):
        u = self._prep(u)
        return np.sin(u)

    def objective(self, u):
        u = self._prep(u)
        return np.cos(u[..., 0])

    def objective_grad(self, u):
        u = self._prep(u)
        return -np.sin(u)

    def phase_box(self):
        return np.array([[0.0, TWO_PI]])

    def periodic_mask(self):
        return np.ones(1, dtype=bool)

    def kernel_spec(self):
        return "ec", {}


class PerturbedCatMap(SystemModel):
    """Arnold cat map with forcing s (sin(u1), 0), objective J = cos(u1).

    Linear part [[2, 1], [1, 1]]; exponents ln((3 +- sqrt 5)/2) at s = 0.
    """

    dim = 2
    _A = np.array([[2.0, 1.0], [1.0, 1.0]])

    def __init__(self, num_unstable=None):
        self.num_unstable = _resolve_m(1, num_unstable, 2)

    def step(self, u, s):
        u = self._prep(u)
        out = u @ self._A.T
        out[..., 0] += s * np.sin(u[..., 0])
        return out % TWO_PI

    def jvp(self, u, w, s):
        u = self._prep(u)
        w = np.asarray(w, dtype=float)
        out = w @ self._A.T
        out[..., 0] += s * np.cos(u[..., 0]) * w[..., 0]
        return out

    def vjp(self, u, a, s):
        # the Jacobian is symmetric: A plus s cos(u1) in the (0, 0) slot
        return self.jvp(u, a, s)

    def dfds(self, u, s):
        u = self._prep(u)
        out = np.zeros_like(u)
        out[..., 0] = np.sin(u[..., 0])
        return out

    def objective(self, u):
        u = self._prep(u)
        return np.cos(u[..., 0])

    def objective_grad(self, u):
        u = self._prep(u)
        out = np.zeros_like(u)
        out[..., 0] = -np.sin(u[..., 0])
        return out

    def phase_box(self):
        return np.array([[0.0, TWO_PI], [0.0, TWO_PI]])

    def periodic_mask(self):
        return np.ones(2, dtype=bool)

    def kernel_spec(self):
        return "cat", {}


class Solenoid(SystemModel):
    """Expanding circle driving a contracting planar fiber.

    theta -> 2 theta + s sin(theta) (mod 2 pi)
    x     -> lam x + amp cos(theta)
    y     -> lam y + amp sin(theta)

    One unstable direction (exponent ln 2), two stable (ln lam).  The
    objective is cos(theta).
    """

    dim = 3

    def __init__(self, lam=0.25, amp=0.3, num_unstable=None):
        if not 0.0 < lam < 1.0:
            raise ValueError("lam must lie in (0, 1)")
        self.lam = float(lam)
        self.amp = float(amp)
        self.num_unstable = _resolve_m(1, num_unstable, 3)

    def step(self, u, s):
        u = self._prep(u)
        t = u[..., 0]
        out = np.empty_like(u)
        out[..., 0] = (2.0 * t + s * np.sin(t)) % TWO_PI
        out[..., 1] = self.lam * u[..., 1] + self.amp * np.cos(t)
        out[..., 2] = self.lam * u[..., 2] + self.amp * np.sin(t)
        return out

    def jvp(self, u, w, s):
        u = self._prep(u)
        w = np.asarray(w, dtype=float)
        t = u[..., 0]
        out = np.empty_like(w)
        out[..., 0] = (2.0 + s * np.cos(t)) * w[..., 0]
        out[..., 1] = -self.amp * np.sin(t) * w[..., 0] + self.lam * w[..., 1]
        out[..., 2] = self.amp * np.cos(t) * w[..., 0] + self.lam * w[..., 2]
        return out

    def vjp(self, u, a, s):
        u = self._prep(u)
        a = np.asarray(a, dtype=float)
        t = u[..., 0]
        out = np.empty_like(a)
        out[..., 0] = ((2.0 + s * np.cos(t)) * a[..., 0]
                       - self.amp * np.sin(t) * a[..., 1]
                       + self.amp * np.cos(t) * a[..., 2])
        out[..., 1] = self.lam * a[..., 1]
        out[..., 2] = self.lam * a[..., 2]
        return out

    def dfds(self, u, s):
        u = self._prep(u)
        out = np.zeros_like(u)
        out[..., 0] = np.sin(u[..., 0])
        return out

    def objective(self, u):
        u = self._prep(u)
        return np.cos(u[..., 0])

    def objective_grad(self, u):
        u = self._prep(u)
        out = np.zeros_like(u)
        out[..., 0] = -np.sin(u[..., 0])
        return out

    def phase_box(self):
        r = self.amp / (1.0 - self.lam)
        return np.array([[0.0, TWO_PI], [-r, r], [-r, r]])

    def periodic_mask(self):
        return np.array([True, False, False])

    def kernel_spec(self):
        return "sol", {"lam": self.lam, "amp": self.amp}

    def describe(self):
        d = super().describe()
        d.update(lam=self.lam, amp=self.amp)
        return d


class BlockHyperbolicLinear(SystemModel):
    """Linear hyperbolic block map on the M-torus with constant forcing.

    u -> c + L (u - c) + s X0   (mod 2 pi)

    L is diagonal with entries unstable_mults ++ stable_mults, plus an
    optional single shear coupling the first unstable coordinate to the
    first stable one (L[0, m] = shear), which makes the stable/unstable
    splitting non-orthogonal with sin(alpha) = |mult gap| / hypot(...).
    The center c is 0 on unstable coordinates and pi on stable ones so the
    contracted fixed point sits in the interior of [0, 2 pi).

    Multipliers must satisfy |unstable| >= 1.05 and |stable| <= 0.95 so the
    hyperbolicity constant stays bounded away from 1.

    objective: "cos_sum" (sum_i w_i cos u_i), "sin_sum", or "linear"
    (<w, u>, only meaningful when no coordinate actually wraps).
    """

    def __init__(self, unstable_mults=(2.0,), stable_mults=(0.5,),
                 shear=0.0, forcing=None, objective="cos_sum",
                 obj_weights=None, num_unstable=None):
        um = np.atleast_1d(np.asarray(unstable_mults, dtype=float))
        sm = np.atleast_1d(np.asarray(stable_mults, dtype=float)) \
            if len(stable_mults) else np.empty(0)
        if um.size == 0:
            raise ValueError("need at least one unstable multiplier")
        if np.any(np.abs(um) < 1.05):
            raise ValueError("unstable multipliers must have |mult| >= 1.05")
        if sm.size and np.any(np.abs(sm) > 0.95):
            raise ValueError("stable multipliers must have |mult| <= 0.95")
        m = um.size
        M = um.size + sm.size
        self.dim = M
        self.num_unstable = _resolve_m(m, num_unstable, M)
        L = np.diag(np.concatenate([um, sm]))
        if shear != 0.0:
            if m == M:
                raise ValueError("shear needs at least one stable coordinate")
            L[0, m] = float(shear)
        self.L = L
        self.shear = float(shear)
        self._m_structural = m
        center = np.zeros(M)
        center[m:] = np.pi
        self.center = center
        if forcing is None:
            forcing = np.zeros(M)
        X0 = np.asarray(forcing, dtype=float).reshape(-1)
        if X0.size != M:
            raise ValueError(f"forcing has size {X0.size}, expected {M}")
        self.X0 = X0
        if objective not in ("cos_sum", "sin_sum", "linear"):
            raise ValueError(f"unknown objective kind {objective!r}")
        self.obj_kind = objective
        if obj_weights is None:
            w = np.zeros(M)
            w[0] = 1.0
        else:
            w = np.asarray(obj_weights, dtype=float).reshape(-1)
            if w.size != M:
                raise ValueError(f"obj_weights has size {w.size}, expected {M}")
        self.obj_w = w

    def step(self, u, s):
        u = self._prep(u)
        return (self.center + (u - self.center) @ self.L.T
                + s * self.X0) % TWO_PI

    def jvp(self, u, w, s):
        self._prep(u)
        return np.asarray(w, dtype=float) @ self.L.T

    def vjp(self, u, a, s):
        self._prep(u)
        return np.asarray(a, dtype=float) @ self.L

    def dfds(self, u, s):
        u = self._prep(u)
        return np.broadcast_to(self.X0, u.shape).copy()

    def objective(self, u):
        u = self._prep(u)
        if self.obj_kind == "cos_sum":
            return np.cos(u) @ self.obj_w
        if self.obj_kind == "sin_sum":
            return np.sin(u) @ self.obj_w
        return u @ self.obj_w

    def objective_grad(self, u):
        u = self._prep(u)
        if self.obj_kind == "cos_sum":
            return -np.sin(u) * self.obj_w
        if self.obj_kind == "sin_sum":
            return np.cos(u) * self.obj_w
        return np.broadcast_to(self.obj_w, u.shape).copy()

    def phase_box(self):
        return np.tile([0.0, TWO_PI], (self.dim, 1))

    def periodic_mask(self):
        return np.ones(self.dim, dtype=bool)

    def kernel_spec(self):
        kind = {"cos_sum": 0, "sin_sum": 1, "linear": 2}[self.obj_kind]
        return "lin", {"L": self.L, "X0": self.X0, "center": self.center,
                       "obj_kind": kind, "obj_w": self.obj_w}

    def describe(self):
        d = super().describe()
        d.update(mults=list(np.diag(self.L)), shear=self.shear,
                 objective=self.obj_kind)
        return d


BUILTIN_SYSTEMS = {
    "expanding_circle": ExpandingCircle,
    "perturbed_cat_map": PerturbedCatMap,
    "solenoid": Solenoid,
    "block_hyperbolic_linear": BlockHyperbolicLinear,
}


def make_system(name, params=None):
    """Instantiate a builtin system by registry name.

    Constructor complaints (bad multipliers, unknown keyword, ...) are
    re-raised as ConfigError so config-driven callers get one error type.
    """
    if name not in BUILTIN_SYSTEMS:
        known = ", ".join(sorted(BUILTIN_SYSTEMS))
        raise ConfigError(f"unknown system {name!r}; known systems: {known}")
    try:
        return BUILTIN_SYSTEMS[name](**(params or {}))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"cannot build system {name!r}: {e}") from e


def model_derivatives(model, u_prev, u, s):
    """Forcing and objective data attached to a transition u_prev -> u.

    Checks that u really is the image of u_prev (wrap-aware, tolerance
    1e-8) and returns (X, J, J_u) where X = dfds(u_prev), J = J(u),
    J_u = dJ/du(u).  Inputs may be batched.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    u = np.asarray(u, dtype=float)
    pred = model.step(u_prev, s)
    diff = pred - u
    mask = model.periodic_mask()
    if mask.any():
        wrapped = (diff + np.pi) % TWO_PI - np.pi
        diff = np.where(mask, wrapped, diff)
    if np.max(np.abs(diff)) > 1e-8:
        raise ConsistencyError(
            "u is not the image of u_prev under the map "
            f"(max deviation {np.max(np.abs(diff)):.3e})")
    return model.dfds(u_prev, s), model.objective(u), model.objective_grad(u)
