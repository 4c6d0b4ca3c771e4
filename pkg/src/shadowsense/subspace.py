"""Stable/unstable splitting frames and oblique projections.

At each step the unstable subspace is spanned by the forward basis W_k and
the stable subspace is the orthogonal complement of the adjoint-unstable
basis A_k.  The oblique projection of a vector X onto span(W) along the
stable subspace solves

    (A^T W) c = A^T X,        X_plus = W c,

because the stable component is annihilated by A^T.  Both bases have
orthonormal columns, so the amplification of the solve is
1/sigma_min(A^T W); when the splitting angle degenerates this blows up
and the whole decomposition loses meaning, so values above 1e8 raise
instead of returning garbage.
"""

from collections import namedtuple

import numpy as np

from .errors import SplittingDegenerateError, NeedsLongerOrbitError

SplittingFrame = namedtuple("SplittingFrame", "step W A S cond")


class FrameSeq:
    """Per-step splitting frames over an inclusive step range [start, stop].

    W: (n, M, m) tangent-unstable orthonormal bases
    A: (n, M, m) adjoint-unstable orthonormal bases
    S: (n, M, M-m) orthonormal bases of the stable subspace (complement
       of span A), empty last axis when m = M.
    """

    def __init__(self, start, W, A):
        W = np.asarray(W, dtype=float)
        A = np.asarray(A, dtype=float)
        if W.shape != A.shape:
            raise ValueError(f"W {W.shape} and A {A.shape} shapes differ")
        self.start = int(start)
        self.W = W
        self.A = A
        self.AtW = A.transpose(0, 2, 1) @ W
        # singular values of A^T W are cosines of the W/A principal angles
        sv = np.linalg.svd(self.AtW, compute_uv=False)
        self.cond = 1.0 / np.maximum(sv[:, -1], 1e-300)
        worst = float(np.max(self.cond))
        if not np.isfinite(worst) or worst > 1e8:
            k = int(np.argmax(self.cond)) + self.start
            raise SplittingDegenerateError(
                f"splitting numerically tangent at step {k} "
                f"(1/sigma_min(A^T W) = {worst:.3e})")
        m = W.shape[2]
        M = W.shape[1]
        if m < M:
            full = np.linalg.qr(A, mode="complete")[0]
            self.S = full[:, :, m:]
        else:
            self.S = np.empty((W.shape[0], M, 0))

    @property
    def stop(self):
        return self.start + self.W.shape[0] - 1

    @property
    def m(self):
        return self.W.shape[2]

    @property
    def dim(self):
        return self.W.shape[1]

    def _idx(self, k):
        if not self.start <= k <= self.stop:
            raise NeedsLongerOrbitError(
                f"no splitting frame at step {k}; frames cover "
                f"[{self.start}, {self.stop}]")
        return k - self.start

    def frame(self, k):
        i = self._idx(k)
        return SplittingFrame(k, self.W[i], self.A[i], self.S[i],
                              float(self.cond[i]))

    def slice(self, lo, hi):
        """Array views for steps [lo, hi] inclusive: (W, A, AtW)."""
        i0, i1 = self._idx(lo), self._idx(hi)
        return self.W[i0:i1 + 1], self.A[i0:i1 + 1], self.AtW[i0:i1 + 1]

    def unstable_coefficients(self, X, step):
        """Coefficients c with X_plus = W c, for X at consecutive steps.

        X: (M,) for a single step, or (n, M) covering steps
        [step, step + n - 1].
        """
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        Xb = X[None, :] if single else X
        i0 = self._idx(step)
        i1 = self._idx(step + Xb.shape[0] - 1)
        rhs = np.einsum("kim,ki->km", self.A[i0:i1 + 1], Xb)
        c = np.linalg.solve(self.AtW[i0:i1 + 1], rhs[..., None])[..., 0]
        return c[0] if single else c

    def project_unstable(self, X, step):
        """Oblique projection X_plus of X onto the unstable subspace."""
        X = np.asarray(X, dtype=float)
        c = self.unstable_coefficients(X, step)
        single = X.ndim == 1
        if single:
            return self.W[self._idx(step)] @ c
        i0 = self._idx(step)
        Wk = self.W[i0:i0 + X.shape[0]]
        return np.einsum("kim,km->ki", Wk, c)

    def principal_sines(self):
        """Per-step sine of the smallest angle between span(W) and stable.

        Returns an array of ones when m = M (no stable directions).
        """
        n = self.W.shape[0]
        if self.S.shape[2] == 0:
            return np.ones(n)
        WtS = self.W.transpose(0, 2, 1) @ self.S
        smax = np.linalg.svd(WtS, compute_uv=False)[:, 0]
        smax = np.clip(smax, 0.0, 1.0)
        return np.sqrt(1.0 - smax ** 2)

    def min_angle(self):
        """Smallest stable/unstable principal angle over all frames, radians."""
        return float(np.arcsin(np.min(self.principal_sines())))


def build_frames(orbit, tangent_basis, adjoint_basis, window=None):
    """Combine forward and adjoint bases into per-step splitting frames.

    Both bases must cover every step (renorm_every = 1).  The default
    window is the intersection of their trusted ranges; an explicit window
    (lo, hi) must fit inside it.
    """
    if tangent_basis.direction != "forward":
        raise ValueError("tangent_basis must be a forward basis")
    if adjoint_basis.direction != "backward":
        raise ValueError("adjoint_basis must be a backward basis")
    if tangent_basis.m != adjoint_basis.m:
        raise ValueError(
            f"basis widths differ: {tangent_basis.m} vs {adjoint_basis.m}")
    tlo, thi = tangent_basis.valid_window()
    alo, ahi = adjoint_basis.valid_window()
    lo, hi = max(tlo, alo), min(thi, ahi)
    if window is not None:
        wlo, whi = window
        if wlo < lo or whi > hi:
            raise NeedsLongerOrbitError(
                f"requested frames [{wlo}, {whi}] outside trusted "
                f"range [{lo}, {hi}]")
        lo, hi = int(wlo), int(whi)
    if hi - lo < 1:
        raise NeedsLongerOrbitError(
            f"trusted ranges leave no overlap: [{lo}, {hi}]")
    W = tangent_basis.Q_window(lo, hi)
    A = adjoint_basis.Q_window(lo, hi)
    return FrameSeq(lo, W, A)
