"""Tangent and adjoint propagation along a recorded orbit.

Homogeneous bases are pushed with periodic QR renormalization (thin QR,
R_jj >= 0 sign convention) so exponential growth never overflows; the R
factors double as Lyapunov growth records.  The adjoint basis reuses the
same kernel on the reversed sequence of transposed Jacobians.

Bases are seeded with random matrices, so records near the seeded end are
transient: BasisSeq.spinup marks how many steps to discard before the
span has aligned with the leading subspace.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _K
from .errors import (DegenerateBasisError, SegmentOverflowError,
                     InsufficientDataError)


@dataclass
class TangentSeq:
    """Tangent vectors v_k along orbit steps [start, start + n]."""

    vectors: np.ndarray  # (n + 1, M)
    kind: str            # "homogeneous" | "inhomogeneous" | "shadowing"
    start: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def stop(self):
        return self.start + self.vectors.shape[0] - 1

    def at(self, k):
        if not self.start <= k <= self.stop:
            raise IndexError(f"step {k} outside [{self.start}, {self.stop}]")
        return self.vectors[k - self.start]


@dataclass
class BasisSeq:
    """Orthonormal basis records along an orbit.

    Q[i] is the orthonormal basis at step steps[i].  For forward bases,
    R[i] is the growth factor over (steps[i], steps[i+1]]; for backward
    (adjoint) bases, R[i] is the growth accumulated while transporting
    from steps[i+1] down to steps[i].  spinup counts the steps adjacent
    to the seeded end whose records are still transient.
    """

    steps: np.ndarray    # (nrec,) increasing record steps
    Q: np.ndarray        # (nrec, M, m)
    R: np.ndarray        # (nrec - 1, m, m) upper triangular, positive diag
    direction: str       # "forward" | "backward"
    spinup: int
    renorm_every: int

    @property
    def m(self):
        return self.Q.shape[2]

    @property
    def dim(self):
        return self.Q.shape[1]

    @property
    def covers_every_step(self):
        return self.renorm_every == 1

    def valid_window(self):
        """Inclusive (lo, hi) step range where records are trusted."""
        if self.direction == "forward":
            return int(self.steps[0]) + self.spinup, int(self.steps[-1])
        return int(self.steps[0]), int(self.steps[-1]) - self.spinup

    def index_of(self, k):
        i = int(np.searchsorted(self.steps, k))
        if i >= len(self.steps) or self.steps[i] != k:
            raise ValueError(f"no basis record at step {k}")
        return i

    def Q_at(self, k):
        return self.Q[self.index_of(k)]

    def Q_window(self, lo, hi):
        """View of records for every step in [lo, hi]; needs full coverage."""
        if not self.covers_every_step:
            raise ValueError("basis does not cover every step "
                             "(renorm_every > 1)")
        i0 = self.index_of(lo)
        i1 = self.index_of(hi)
        return self.Q[i0:i1 + 1]


def jacobian_sequence(model, states, s):
    """Stack of Jacobians jac[k] = df/du(u_k), k = 0 .. n-1.

    Assembled column by column from Jacobian-vector products, so models
    only ever need directional derivatives.
    """
    states = np.asarray(states, dtype=float)
    n = states.shape[0] - 1
    M = states.shape[1]
    jac = np.empty((n, M, M))
    base = states[:-1]
    for j in range(M):
        w = np.zeros((n, M))
        w[:, j] = 1.0
        jac[:, :, j] = model.jvp(base, w, s)
    return jac


def forcing_sequence(orbit, model):
    """Forcing X_k = dfds(u_{k-1}) entering each recorded step.

    X_0 uses the stored pre-orbit state when available and is zero
    otherwise (flagged in the returned mask).
    """
    X = np.empty_like(orbit.states)
    X[1:] = model.dfds(orbit.states[:-1], orbit.s)
    if orbit.prev_state is not None:
        X[0] = model.dfds(orbit.prev_state, orbit.s)
        have_x0 = True
    else:
        X[0] = 0.0
        have_x0 = False
    return X, have_x0


def _random_basis(dim, m, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dim, m))


def propagate_homogeneous(orbit, model, m=None, W0=None, renorm_every=1,
                          spinup=200, seed=0, jac=None):
    """Push a homogeneous basis along the whole orbit.

    Returns a forward BasisSeq with records at step 0, every renorm_every
    steps, and the final step.  Raises DegenerateBasisError if a
    renormalization finds a (near-)zero R diagonal.
    """
    if m is None:
        m = model.num_unstable
    if W0 is None:
        if m < 1:
            raise ValueError("basis needs m >= 1 columns")
        W0 = _random_basis(orbit.dim, m, [seed, 1])
    W0 = np.ascontiguousarray(np.asarray(W0, dtype=float))
    if W0.ndim != 2 or W0.shape[0] != orbit.dim or W0.shape[1] < 1:
        raise ValueError(f"W0 has shape {W0.shape}, expected ({orbit.dim}, m)")
    if not 1 <= renorm_every <= orbit.K:
        raise ValueError("renorm_every must lie in [1, K]")
    if not 0 <= spinup < orbit.K:
        raise ValueError("tangent spinup must lie in [0, K)")
    if jac is None:
        jac = jacobian_sequence(model, orbit.states, orbit.s)
    Q, R, steps, bad = _K.prop_basis(jac, W0, int(renorm_every))
    if bad >= 0:
        raise DegenerateBasisError(int(bad))
    return BasisSeq(steps=steps, Q=Q, R=R, direction="forward",
                    spinup=int(spinup), renorm_every=int(renorm_every))


def propagate_inhomogeneous(orbit, model, v0=None, jac=None, X=None):
    """Zero-or-given initial condition solution of v_{k+1} = f_* v_k + X_{k+1}.

    Grows like the leading multiplier, so this is only usable directly on
    short stretches; the guard raises SegmentOverflowError past norm 1e100.
    """
    if v0 is None:
        v0 = np.zeros(orbit.dim)
    v0 = np.asarray(v0, dtype=float).reshape(-1)
    if v0.size != orbit.dim:
        raise ValueError(f"v0 has size {v0.size}, expected {orbit.dim}")
    if jac is None:
        jac = jacobian_sequence(model, orbit.states, orbit.s)
    if X is None:
        X, _ = forcing_sequence(orbit, model)
    v, bad = _K.prop_inhom(jac, np.ascontiguousarray(X),
                           np.ascontiguousarray(v0))
    if bad >= 0:
        raise SegmentOverflowError(int(bad))
    return TangentSeq(vectors=v, kind="inhomogeneous", start=0)


def propagate_adjoint(orbit, model, m=None, A_end=None, renorm_every=1,
                      spinup=200, seed=0, jac=None):
    """Pull an adjoint basis backward along the orbit.

    Runs the forward kernel on the reversed sequence of transposed
    Jacobians, then maps record indices back to orbit steps.  The result
    is trusted away from the final (seeded) end: valid_window() is
    [steps[0], K - spinup].
    """
    if m is None:
        m = model.num_unstable
    if A_end is None:
        if m < 1:
            raise ValueError("basis needs m >= 1 columns")
        A_end = _random_basis(orbit.dim, m, [seed, 2])
    A_end = np.ascontiguousarray(np.asarray(A_end, dtype=float))
    if A_end.ndim != 2 or A_end.shape[0] != orbit.dim or A_end.shape[1] < 1:
        raise ValueError(f"A_end has shape {A_end.shape}, "
                         f"expected ({orbit.dim}, m)")
    if not 0 <= spinup < orbit.K:
        raise ValueError("adjoint spinup must lie in [0, K)")
    if jac is None:
        jac = jacobian_sequence(model, orbit.states, orbit.s)
    n = jac.shape[0]
    jac_rev = np.ascontiguousarray(jac[::-1].transpose(0, 2, 1))
    Q, R, steps, bad = _K.prop_basis(jac_rev, A_end, int(renorm_every))
    if bad >= 0:
        raise DegenerateBasisError(int(n - bad))
    steps = n - steps[::-1]
    Q = np.ascontiguousarray(Q[::-1])
    R = np.ascontiguousarray(R[::-1])
    return BasisSeq(steps=steps.astype(np.int64), Q=Q, R=R,
                    direction="backward", spinup=int(spinup),
                    renorm_every=int(renorm_every))


def lyapunov_exponents(basis, min_records=100):
    """Per-step exponents from renormalization records, sorted descending.

    Uses only R records whose interval lies inside the basis's valid
    window.  Raises InsufficientDataError when fewer than min_records
    usable records remain.
    """
    lo, hi = basis.valid_window()
    starts = basis.steps[:-1]
    ends = basis.steps[1:]
    use = (starts >= lo) & (ends <= hi)
    nuse = int(np.count_nonzero(use))
    if nuse < min_records:
        raise InsufficientDataError(
            f"only {nuse} usable renormalization records, "
            f"need >= {min_records}")
    diags = np.diagonal(basis.R[use], axis1=1, axis2=2)
    total = float(np.sum(ends[use] - starts[use]))
    exps = np.sum(np.log(diags), axis=0) / total
    return np.sort(exps)[::-1]
