"""Non-intrusive least-squares shadowing solve.

Finds the tangent solution v of v_{k+1} = f_* v_k + X_{k+1} over a window
of K steps that minimizes sum_k |v_k|^2, searching over the affine family
v = v_star + W a where v_star is the zero-initial-condition particular
solution and the columns of W are homogeneous solutions spanning the
unstable subspace.  The minimizer approximates the shadowing direction
away from the window endpoints.

Raw homogeneous solutions grow like lambda^K, so the window is cut into
segments: at each interior boundary the homogeneous block is
QR-renormalized and v_star is restarted with its unstable component
removed.  Writing a_i for the coefficients on segment i, continuity of v
across boundary i gives the interface recursion

    a_{i+1} = R_{i+1} a_i + b_{i+1}.

Rather than eliminating forward (products of R grow), the solve is
parametrized by the final coefficients theta = a_last:

    a_i = G_i theta + h_i,   G_last = I, h_last = 0,
    G_i = R_{i+1}^{-1} G_{i+1},  h_i = R_{i+1}^{-1} (h_{i+1} - b_{i+1}),

a backward recursion through inverse R factors, which contract, so it is
well conditioned.  Each segment's least-squares data is reduced by a tall
QR of its stacked homogeneous block, leaving a small m-column problem in
theta solved by one lstsq.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _K
from .errors import DegenerateBasisError, SegmentOverflowError
from .stats import batch_half_width
from .tangent import TangentSeq, jacobian_sequence, forcing_sequence


@dataclass
class ShadowingSolution:
    """NILSS minimizer with solve diagnostics.

    recurrence_residual and optimality_residual are relative; the solution
    is trustworthy when both sit near machine precision regardless of K.
    """

    v: TangentSeq
    coefficients: np.ndarray   # (nseg, m) per-segment basis coefficients
    seg_starts: np.ndarray     # (nseg + 1,) absolute segment boundaries
    window: tuple
    objective_norm: float      # sum of |v_k|^2 over the window
    recurrence_residual: float
    optimality_residual: float
    condition: float           # of the reduced final system
    rank_deficient: bool
    meta: dict = field(default_factory=dict)


def make_segments(w0, w1, segment_len):
    """Absolute boundary steps w0 = s_0 < s_1 < ... < s_nseg = w1."""
    if segment_len < 1:
        raise ValueError("segment_len must be >= 1")
    if w1 - w0 < 1:
        raise ValueError(f"empty window ({w0}, {w1})")
    starts = np.arange(w0, w1, segment_len, dtype=np.int64)
    return np.append(starts, np.int64(w1))


def _segment_reductions(W, vstar, seg_starts_local):
    """Tall-QR reduction of each segment's stacked least-squares block.

    Segment i contributes rows W[k] a_i + vstar[k] for k in [s_i, s_{i+1});
    stacking those rows and QR-reducing leaves (Rhat_i, ghat_i) with
    identical normal equations.  Equal-length segments are batched.
    """
    nseg = len(seg_starts_local) - 1
    m = W.shape[2]
    M = W.shape[1]
    lens = np.diff(seg_starts_local)
    Rhat = np.empty((nseg, m, m))
    ghat = np.empty((nseg, m))
    for L in np.unique(lens):
        idx = np.nonzero(lens == L)[0]
        blocks = np.empty((idx.size, L * M, m))
        rhs = np.empty((idx.size, L * M))
        for t, i in enumerate(idx):
            k0 = seg_starts_local[i]
            blocks[t] = W[k0:k0 + L].reshape(L * M, m)
            rhs[t] = vstar[k0:k0 + L].reshape(L * M)
        q, r = np.linalg.qr(blocks)
        Rhat[idx] = r
        ghat[idx] = np.einsum("tkm,tk->tm", q, rhs)
    return Rhat, ghat


def solve_nilss(orbit, model, basis, window=None, segment_len=20,
                jac=None, X=None):
    """Segmented least-squares shadowing solve over a window of the orbit.

    basis supplies the spun-up unstable basis at the window start (it must
    have a record there).  jac and X, when given, are the full-orbit
    Jacobian and forcing sequences; they are sliced internally.  Returns a
    ShadowingSolution whose TangentSeq covers steps [w0, w1].

    segment_len trades solve overhead against interface rounding: the
    particular solution grows by lambda_max^L inside a segment and the
    matching O(1) value is reconstructed by cancellation, so the
    recurrence residual floor is about eps * lambda_max^L.  Keep
    lambda_max^L below ~1e6 when residuals near 1e-10 matter.
    """
    if basis.direction != "forward":
        raise ValueError("NILSS needs a forward unstable basis")
    if window is None:
        window = (basis.valid_window()[0], orbit.K)
    w0, w1 = int(window[0]), int(window[1])
    if not 0 <= w0 < w1 <= orbit.K:
        raise ValueError(f"bad window ({w0}, {w1}) for K={orbit.K}")
    if jac is None:
        jac = jacobian_sequence(model, orbit.states, orbit.s)
    if X is None:
        X, _ = forcing_sequence(orbit, model)
    Q0 = np.ascontiguousarray(basis.Q_at(w0))

    seg_starts = make_segments(w0, w1, segment_len)
    local = seg_starts - w0
    if int(np.min(np.diff(local))) * orbit.dim < basis.m:
        raise ValueError(
            f"shortest segment has {np.min(np.diff(local))} steps, too few "
            f"rows to determine {basis.m} coefficients in dimension "
            f"{orbit.dim}")
    jac_w = np.ascontiguousarray(jac[w0:w1])
    X_w = np.ascontiguousarray(X[w0:w1 + 1])
    W, vstar, Rint, bint, bad, bad_kind = _K.nilss_sweep(
        jac_w, X_w, Q0, local)
    if bad_kind == 1:
        raise DegenerateBasisError(int(w0 + bad))
    if bad_kind == 2:
        raise SegmentOverflowError(
            int(w0 + bad),
            f"segment overflow at step {w0 + bad}; "
            f"reduce segment_len (= {segment_len})")

    nseg = len(seg_starts) - 1
    m = Q0.shape[1]
    Rhat, ghat = _segment_reductions(W, vstar, local)

    # backward interface recursion: a_i = G_i theta + h_i
    G = np.empty((nseg, m, m))
    h = np.empty((nseg, m))
    G[-1] = np.eye(m)
    h[-1] = 0.0
    for i in range(nseg - 2, -1, -1):
        G[i] = np.linalg.solve(Rint[i], G[i + 1])
        h[i] = np.linalg.solve(Rint[i], h[i + 1] - bint[i])
        worst = max(np.max(np.abs(G[i])), np.max(np.abs(h[i])))
        if not np.isfinite(worst) or worst > 1e100:
            # inverse R factors contract only along genuinely unstable
            # directions; blowup here means the basis carries a
            # non-expanding direction
            raise DegenerateBasisError(
                int(seg_starts[i + 1]),
                "interface recursion overflowed: the basis spans a "
                "direction with no exponential growth (is m larger than "
                "the number of positive exponents?)")

    S = (Rhat @ G).reshape(nseg * m, m)
    t = -(np.einsum("nij,nj->ni", Rhat, h) + ghat).reshape(nseg * m)
    theta, _, rank, sv = np.linalg.lstsq(S, t, rcond=None)
    rank_deficient = rank < m
    condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf

    a = np.einsum("nij,j->ni", G, theta) + h

    # per-step coefficients: interior boundary rows were restarted by the
    # sweep, so step k belongs to the segment starting at or after it;
    # the final step belongs to the last segment
    owner = np.searchsorted(local, np.arange(w0, w1 + 1) - w0, side="right")
    owner = np.minimum(owner, nseg) - 1
    a_step = a[owner]
    v = vstar + np.einsum("kim,km->ki", W, a_step)

    resid = v[1:] - (np.einsum("kij,kj->ki", jac_w, v[:-1]) + X_w[1:])
    scale = max(1.0, float(np.max(np.linalg.norm(v, axis=1))),
                float(np.max(np.linalg.norm(X_w, axis=1))))
    recurrence_residual = float(np.max(np.linalg.norm(resid, axis=1))) / scale

    # first-order optimality: v must be K-orthogonal to every feasible
    # homogeneous direction; direction j at step k is W[k] G_owner(k) e_j
    Wdir = np.einsum("kim,kmj->kij", W[:-1], G[owner[:-1]])
    inner = np.einsum("kim,ki->m", Wdir, v[:-1])
    vnorm = float(np.sqrt(np.sum(v[:-1] ** 2)))
    dirnorm = np.sqrt(np.einsum("kim,kim->m", Wdir, Wdir))
    optimality_residual = float(np.max(np.abs(inner)
                                       / (vnorm * dirnorm + 1e-300)))

    return ShadowingSolution(
        v=TangentSeq(vectors=v, kind="shadowing", start=w0),
        coefficients=a,
        seg_starts=seg_starts,
        window=(w0, w1),
        objective_norm=float(np.sum(v[:-1] ** 2)),
        recurrence_residual=recurrence_residual,
        optimality_residual=optimality_residual,
        condition=condition,
        rank_deficient=bool(rank_deficient),
        meta={"segment_len": int(segment_len), "nseg": int(nseg)},
    )


def solve_nilss_global(orbit, model, basis, window=None, jac=None, X=None):
    """Dense reference solve without segmentation or renormalization.

    Propagates raw homogeneous and particular solutions across the whole
    window in plain numpy and solves one stacked least-squares problem.
    Only usable on short windows: the raw solutions grow like lambda^K,
    and reconstructing the O(1) minimizer from them loses about
    lambda^K * eps in float64, on top of eventually overflowing.  It
    exists purely as an independent cross-check for the segmented solver.
    """
    if window is None:
        window = (basis.valid_window()[0], orbit.K)
    w0, w1 = int(window[0]), int(window[1])
    n = w1 - w0
    if jac is None:
        jac = jacobian_sequence(model, orbit.states, orbit.s)
    if X is None:
        X, _ = forcing_sequence(orbit, model)
    Q0 = basis.Q_at(w0)
    M, m = Q0.shape
    W = np.empty((n + 1, M, m))
    vstar = np.empty((n + 1, M))
    W[0] = Q0
    vstar[0] = 0.0
    for k in range(n):
        W[k + 1] = jac[w0 + k] @ W[k]
        vstar[k + 1] = jac[w0 + k] @ vstar[k] + X[w0 + k + 1]
    if not np.all(np.isfinite(W)) or not np.all(np.isfinite(vstar)):
        raise SegmentOverflowError(w1, "global solve overflowed; window "
                                       "too long for the dense path")
    a, _, _, _ = np.linalg.lstsq(W[:-1].reshape(n * M, m),
                                 -vstar[:-1].reshape(n * M), rcond=None)
    v = vstar + W @ a
    return TangentSeq(vectors=v, kind="shadowing", start=w0,
                      meta={"coefficients": a})


def shadowing_contribution(orbit, model, solution, nbatches=16):
    """Window average of J_u . v and its batch-mean half width.

    This is the shadowing part of the sensitivity: the response the system
    would have if the parameter moved the attractor without redistributing
    measure along unstable directions.
    """
    w0, w1 = solution.window
    grads = model.objective_grad(orbit.states[w0:w1])
    series = np.einsum("ki,ki->k", grads, solution.v.vectors[:-1])
    return float(np.mean(series)), batch_half_width(series, nbatches)
