"""Sequential hot loops, JIT-compiled with numba when available.

Orbit generation, fused objective averaging, and tangent-space sweeps are
inherently sequential in the step index, so they live here as scalar loops
instead of vectorized numpy.  Each kernel is written as plain Python and
compiled with @njit at import time.  Setting the environment variable
SHADOWSENSE_NO_NUMBA=1 (or any value other than 0/empty) skips compilation
and runs the same source uncompiled; results are identical up to floating
ULPs, only slower.

Registries:
  PY_KERNELS maps kernel name -> the uncompiled function (always present).
  KERNELS    maps kernel name -> the active implementation.
Module-level names are bound to the active implementation, so importing a
kernel gives the fast path automatically.  The benchmark suite uses the
registries to time both paths in a single process.

Conventions shared by all kernels:
  - states arrays have shape (n+1, M) with row k holding u_k;
  - jac arrays have shape (n, M, M) with jac[k] mapping step k to k+1;
  - a returned status of -1 means success, >= 0 is the failing step index.
"""

import os

import numpy as np

NUMBA_DISABLED = os.environ.get("SHADOWSENSE_NO_NUMBA", "").strip() not in ("", "0")

if not NUMBA_DISABLED:
    try:
        from numba import njit as _njit
        NUMBA_ACTIVE = True
    except ImportError:
        NUMBA_ACTIVE = False
else:
    NUMBA_ACTIVE = False

TWO_PI = 2.0 * np.pi
OVERFLOW_SQ = 1e200  # squared-norm guard, |v| > 1e100 counts as overflow

PY_KERNELS = {}
KERNELS = {}


def _kernel(fn):
    PY_KERNELS[fn.__name__] = fn
    if NUMBA_ACTIVE:
        compiled = _njit(cache=True, nogil=True)(fn)
    else:
        compiled = fn
    KERNELS[fn.__name__] = compiled
    return compiled


# ---------------------------------------------------------------------------
# orbit generation, one kernel per builtin system


@_kernel
def ec_orbit(u0, s, spinup, nrec):
    states = np.empty((nrec + 1, 1))
    prev = np.full(1, np.nan)
    u = u0[0]
    for _ in range(spinup):
        prev[0] = u
        u = (2.0 * u + s * np.sin(u)) % TWO_PI
    if not np.isfinite(u):
        return states, prev, 0
    states[0, 0] = u
    for k in range(nrec):
        u = (2.0 * u + s * np.sin(u)) % TWO_PI
        if not np.isfinite(u):
            return states, prev, k + 1
        states[k + 1, 0] = u
    return states, prev, -1


@_kernel
def ec_obj_mean(u0, s, spinup, navg):
    u = u0[0]
    for _ in range(spinup):
        u = (2.0 * u + s * np.sin(u)) % TWO_PI
    acc = 0.0
    for k in range(navg):
        if not np.isfinite(u):
            return np.nan, k
        acc += np.cos(u)
        u = (2.0 * u + s * np.sin(u)) % TWO_PI
    return acc / navg, -1


@_kernel
def cat_orbit(u0, s, spinup, nrec):
    states = np.empty((nrec + 1, 2))
    prev = np.full(2, np.nan)
    x = u0[0]
    y = u0[1]
    for _ in range(spinup):
        prev[0] = x
        prev[1] = y
        nx = (2.0 * x + y + s * np.sin(x)) % TWO_PI
        ny = (x + y) % TWO_PI
        x = nx
        y = ny
    if not (np.isfinite(x) and np.isfinite(y)):
        return states, prev, 0
    states[0, 0] = x
    states[0, 1] = y
    for k in range(nrec):
        nx = (2.0 * x + y + s * np.sin(x)) % TWO_PI
        ny = (x + y) % TWO_PI
        x = nx
        y = ny
        if not (np.isfinite(x) and np.isfinite(y)):
            return states, prev, k + 1
        states[k + 1, 0] = x
        states[k + 1, 1] = y
    return states, prev, -1


@_kernel
def cat_obj_mean(u0, s, spinup, navg):
    x = u0[0]
    y = u0[1]
    for _ in range(spinup):
        nx = (2.0 * x + y + s * np.sin(x)) % TWO_PI
        ny = (x + y) % TWO_PI
        x = nx
        y = ny
    acc = 0.0
    for k in range(navg):
        if not (np.isfinite(x) and np.isfinite(y)):
            return np.nan, k
        acc += np.cos(x)
        nx = (2.0 * x + y + s * np.sin(x)) % TWO_PI
        ny = (x + y) % TWO_PI
        x = nx
        y = ny
    return acc / navg, -1


@_kernel
def sol_orbit(u0, s, lam, amp, spinup, nrec):
    states = np.empty((nrec + 1, 3))
    prev = np.full(3, np.nan)
    t = u0[0]
    x = u0[1]
    y = u0[2]
    for _ in range(spinup):
        prev[0] = t
        prev[1] = x
        prev[2] = y
        nt = (2.0 * t + s * np.sin(t)) % TWO_PI
        nx = lam * x + amp * np.cos(t)
        ny = lam * y + amp * np.sin(t)
        t = nt
        x = nx
        y = ny
    if not (np.isfinite(t) and np.isfinite(x) and np.isfinite(y)):
        return states, prev, 0
    states[0, 0] = t
    states[0, 1] = x
    states[0, 2] = y
    for k in range(nrec):
        nt = (2.0 * t + s * np.sin(t)) % TWO_PI
        nx = lam * x + amp * np.cos(t)
        ny = lam * y + amp * np.sin(t)
        t = nt
        x = nx
        y = ny
        if not (np.isfinite(t) and np.isfinite(x) and np.isfinite(y)):
            return states, prev, k + 1
        states[k + 1, 0] = t
        states[k + 1, 1] = x
        states[k + 1, 2] = y
    return states, prev, -1


@_kernel
def sol_obj_mean(u0, s, lam, amp, spinup, navg):
    t = u0[0]
    x = u0[1]
    y = u0[2]
    for _ in range(spinup):
        nt = (2.0 * t + s * np.sin(t)) % TWO_PI
        nx = lam * x + amp * np.cos(t)
        ny = lam * y + amp * np.sin(t)
        t = nt
        x = nx
        y = ny
    acc = 0.0
    for k in range(navg):
        if not np.isfinite(t):
            return np.nan, k
        acc += np.cos(t)
        nt = (2.0 * t + s * np.sin(t)) % TWO_PI
        nx = lam * x + amp * np.cos(t)
        ny = lam * y + amp * np.sin(t)
        t = nt
        x = nx
        y = ny
    return acc / navg, -1


@_kernel
def lin_orbit(u0, s, L, X0, center, spinup, nrec):
    M = L.shape[0]
    states = np.empty((nrec + 1, M))
    prev = np.full(M, np.nan)
    u = u0.copy()
    nxt = np.empty(M)
    for _ in range(spinup):
        for i in range(M):
            prev[i] = u[i]
        for i in range(M):
            acc = center[i] + s * X0[i]
            for j in range(M):
                acc += L[i, j] * (u[j] - center[j])
            nxt[i] = acc % TWO_PI
        for i in range(M):
            u[i] = nxt[i]
    ok = True
    for i in range(M):
        if not np.isfinite(u[i]):
            ok = False
    if not ok:
        return states, prev, 0
    for i in range(M):
        states[0, i] = u[i]
    for k in range(nrec):
        for i in range(M):
            acc = center[i] + s * X0[i]
            for j in range(M):
                acc += L[i, j] * (u[j] - center[j])
            nxt[i] = acc % TWO_PI
        for i in range(M):
            u[i] = nxt[i]
            if not np.isfinite(u[i]):
                ok = False
        if not ok:
            return states, prev, k + 1
        for i in range(M):
            states[k + 1, i] = u[i]
    return states, prev, -1


@_kernel
def lin_obj_mean(u0, s, L, X0, center, obj_kind, obj_w, spinup, navg):
    # obj_kind: 0 -> sum_i w_i cos(u_i), 1 -> sum_i w_i sin(u_i), 2 -> <w, u>
    M = L.shape[0]
    u = u0.copy()
    nxt = np.empty(M)
    for _ in range(spinup):
        for i in range(M):
            acc = center[i] + s * X0[i]
            for j in range(M):
                acc += L[i, j] * (u[j] - center[j])
            nxt[i] = acc % TWO_PI
        for i in range(M):
            u[i] = nxt[i]
    acc_J = 0.0
    for k in range(navg):
        val = 0.0
        for i in range(M):
            if not np.isfinite(u[i]):
                return np.nan, k
            if obj_kind == 0:
                val += obj_w[i] * np.cos(u[i])
            elif obj_kind == 1:
                val += obj_w[i] * np.sin(u[i])
            else:
                val += obj_w[i] * u[i]
        acc_J += val
        for i in range(M):
            a = center[i] + s * X0[i]
            for j in range(M):
                a += L[i, j] * (u[j] - center[j])
            nxt[i] = a % TWO_PI
        for i in range(M):
            u[i] = nxt[i]
    return acc_J / navg, -1


# ---------------------------------------------------------------------------
# tangent-space sweeps, driven by precomputed Jacobian sequences


@_kernel
def _qr_pos(W):
    # thin QR with the sign convention R_jj >= 0
    q, r = np.linalg.qr(W)
    for j in range(r.shape[0]):
        if r[j, j] < 0.0:
            for i in range(q.shape[0]):
                q[i, j] = -q[i, j]
            for i in range(r.shape[1]):
                r[j, i] = -r[j, i]
    return q, r


@_kernel
def prop_basis(jac, W0, renorm_every):
    """Push a basis forward with periodic QR renormalization.

    Returns (Q, R, steps, status):
      Q[i]     orthonormal basis recorded at step steps[i],
      R[i]     growth factor over the interval (steps[i], steps[i+1]],
      status   -1, or the step at which a renormalization found rank loss.
    Records land at step 0, every renorm_every steps, and at the final step.
    """
    n = jac.shape[0]
    M = jac.shape[1]
    m = W0.shape[1]
    nrec = n // renorm_every + 1
    if n % renorm_every != 0:
        nrec += 1
    Q = np.empty((nrec, M, m))
    R = np.empty((nrec - 1, m, m))
    steps = np.empty(nrec, np.int64)
    q, r = _qr_pos(W0)
    Q[0] = q
    steps[0] = 0
    W = q.copy()
    rec = 1
    for k in range(n):
        W = jac[k] @ W
        if (k + 1) % renorm_every == 0 or k + 1 == n:
            q, r = _qr_pos(W)
            for j in range(m):
                if np.abs(r[j, j]) < 1e-300 or not np.isfinite(r[j, j]):
                    return Q, R, steps, k + 1
            Q[rec] = q
            R[rec - 1] = r
            steps[rec] = k + 1
            rec += 1
            W = q.copy()
    return Q, R, steps, -1


@_kernel
def prop_inhom(jac, X, v0):
    """Inhomogeneous tangent recursion v_{k+1} = jac_k v_k + X_{k+1}."""
    n = jac.shape[0]
    M = jac.shape[1]
    v = np.empty((n + 1, M))
    v[0] = v0
    for k in range(n):
        vn = np.dot(jac[k], v[k]) + X[k + 1]
        ss = 0.0
        for i in range(M):
            ss += vn[i] * vn[i]
        if not np.isfinite(ss) or ss > OVERFLOW_SQ:
            return v, k + 1
        v[k + 1] = vn
    return v, -1


@_kernel
def nilss_sweep(jac, X, Q0, seg_starts):
    """Segmented homogeneous + inhomogeneous sweep for the shadowing solve.

    jac, X are window-local (jac[k] maps window step k -> k+1; X[k] is the
    forcing entering step k).  Q0 must be orthonormal.  At each interior
    segment boundary the homogeneous block W is QR-renormalized and the
    particular solution vstar has its component inside span(W) removed:

        W_next = Q,   R_int = R,   b_int = Q^T vstar,   vstar_next -= Q b_int.

    Stored rows at a boundary step hold the restarted representation (owned
    by the following segment).  Returns (W, vstar, Rint, bint, status, kind)
    with kind 0 = ok, 1 = rank collapse, 2 = overflow.
    """
    n = jac.shape[0]
    M = jac.shape[1]
    m = Q0.shape[1]
    nseg = seg_starts.shape[0] - 1
    W = np.empty((n + 1, M, m))
    vstar = np.empty((n + 1, M))
    Rint = np.empty((nseg - 1, m, m))
    bint = np.empty((nseg - 1, m))
    W[0] = Q0
    vstar[0] = 0.0
    for i in range(nseg):
        k0 = seg_starts[i]
        k1 = seg_starts[i + 1]
        for k in range(k0, k1):
            W[k + 1] = jac[k] @ W[k]
            vn = np.dot(jac[k], vstar[k]) + X[k + 1]
            ss = 0.0
            for t in range(M):
                ss += vn[t] * vn[t]
            if not np.isfinite(ss) or ss > OVERFLOW_SQ:
                return W, vstar, Rint, bint, k + 1, 2
            vstar[k + 1] = vn
        if i < nseg - 1:
            q, r = _qr_pos(W[k1])
            for j in range(m):
                if np.abs(r[j, j]) < 1e-300 or not np.isfinite(r[j, j]):
                    return W, vstar, Rint, bint, k1, 1
            Rint[i] = r
            for j in range(m):
                acc = 0.0
                for t in range(M):
                    acc += q[t, j] * vstar[k1, t]
                bint[i, j] = acc
            W[k1] = q
            for t in range(M):
                acc = 0.0
                for j in range(m):
                    acc += q[t, j] * bint[i, j]
                vstar[k1, t] -= acc
    return W, vstar, Rint, bint, -1, 0
