"""Sensitivity estimators and their independent oracles.

The sensitivity of a long-run average <J> to the map parameter s splits
into a shadowing part (computed from the NILSS minimizer) plus a
correction accounting for the perturbation's unstable component:

    correction = sum_{n < N} < grad(J o f^n) , X_plus >
               = sum_{n < N} mean_k  J_u(u_{k+n}) . (f_*^n X_plus_k),

truncated below at n = -N_back since backward transport of unstable
vectors contracts.  A third contribution (the unstable divergence term,
the part requiring measure-differentiation machinery) is outside this
toolkit's scope; for the benchmark systems here it vanishes or is
negligible, which the finite-difference cross-checks exercise.

Oracles, deliberately sharing no code with the NILSS path:
  - explicit_shadowing_direction: truncated two-sided transport sums;
  - direct_ruelle: the raw response sum with full (unprojected) forcing,
    whose per-term variance grows like lambda^(2n);
  - finite_difference: paired-seed central differences of <J>.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NeedsLongerOrbitError
from .model import model_derivatives  # noqa: F401  (re-exported convenience)
from .nilss import solve_nilss, shadowing_contribution
from .orbit import generate_orbit, objective_mean, initial_state
from .stats import batch_half_width
from .subspace import build_frames
from .tangent import (TangentSeq, jacobian_sequence, forcing_sequence,
                      propagate_homogeneous, propagate_adjoint,
                      lyapunov_exponents)


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get("SHADOWSENSE_WORKERS", "1"))
    return max(1, workers)


def _pmap(fn, items, workers=None):
    w = _workers(workers)
    if w == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))


def _check_range(name, lo, hi, avail_lo, avail_hi):
    if lo < avail_lo or hi > avail_hi:
        raise NeedsLongerOrbitError(
            f"{name} needs steps [{lo}, {hi}] but only "
            f"[{avail_lo}, {avail_hi}] are available; enlarge the orbit "
            f"buffers or shrink the window")


# ---------------------------------------------------------------------------
# truncated explicit shadowing direction


def explicit_shadowing_direction(orbit, model, frames, N_f=40, N_b=40,
                                 window=None, jac=None, X=None):
    """Shadowing direction by truncated two-sided transport sums.

    v_k = sum_{n=0..N_f} f_*^n X_minus_{k-n}
        - sum_{n=1..N_b} f_*^{-n} X_plus_{k+n}

    The stable terms are pushed forward in full space with the unstable
    component re-projected out after every step: the exact vectors live in
    the (covariant) stable subspace, so the projection is a mathematical
    no-op, but without it rounding noise grows by the leading multiplier
    per step and overwhelms the sum once lambda_max^N_f reaches 1/eps.
    The unstable terms are pulled back in the m-dimensional coefficient
    space of the frames, where f_* restricts to the invertible reduced
    maps T_i = W_{i+1}^T f_*(u_i) W_i (backward transport contracts, so no
    such cleanup is needed there).  Truncation tail magnitudes are
    recorded in meta; they decay like lambda^(N_f), lambda^(-N_b).
    """
    if jac is None:
        jac = jacobian_sequence(model, orbit.states, orbit.s)
    if X is None:
        X, have_x0 = forcing_sequence(orbit, model)
    else:
        have_x0 = True
    xmin = 0 if have_x0 else 1
    if window is None:
        w0 = max(frames.start + N_f, xmin + N_f)
        w1 = min(frames.stop - N_b, orbit.K - N_b)
    else:
        w0, w1 = int(window[0]), int(window[1])
    if w1 - w0 < 1:
        raise NeedsLongerOrbitError(
            f"no room for a window with N_f={N_f}, N_b={N_b} buffers")
    lo, hi = w0 - N_f, w1 + N_b
    _check_range("explicit direction", lo, hi, max(frames.start, xmin),
                 min(frames.stop, orbit.K))
    states = orbit.states
    s = orbit.s
    M = orbit.dim
    nwin = w1 - w0

    X_ext = X[lo:hi + 1]
    c_ext = frames.unstable_coefficients(X_ext, lo)
    Wf, _, _ = frames.slice(lo, hi)
    XP_ext = np.einsum("kim,km->ki", Wf, c_ext)
    XM_ext = X_ext - XP_ext

    # stable half: push f_*^n X_minus_j forward, j + n landing in window
    v = np.zeros((nwin + 1, M))
    buf = XM_ext[:w1 - lo + 1].copy()          # j = lo .. w1
    stable_tail = 0.0
    for n in range(N_f + 1):
        sl = buf[(w0 - n) - lo:(w1 - n) - lo + 1]
        v += sl
        if n == N_f:
            stable_tail = float(np.mean(np.linalg.norm(sl, axis=1)))
            break
        keep_hi = w1 - (n + 1)                 # j beyond this never lands
        buf = model.jvp(states[lo + n:keep_hi + n + 1],
                        buf[:keep_hi - lo + 1], s)
        cb = frames.unstable_coefficients(buf, lo + n + 1)
        Wb = frames.slice(lo + n + 1, keep_hi + n + 1)[0]
        buf -= np.einsum("kim,km->ki", Wb, cb)

    # unstable half: pull coefficients of X_plus_j back n steps
    i0 = w0
    J_T = jac[i0:w1 + N_b]
    Wl = frames.slice(i0, w1 + N_b - 1)[0]
    Wr = frames.slice(i0 + 1, w1 + N_b)[0]
    T = Wr.transpose(0, 2, 1) @ (J_T @ Wl)     # T_i, i = w0 .. w1+N_b-1

    cbuf = c_ext[(w0 + 1) - lo:].copy()        # j = w0+1 .. w1+N_b
    cur_lo = w0 + 1
    Wwin = frames.slice(w0, w1)[0]
    unstable_tail = 0.0
    for n in range(1, N_b + 1):
        if w0 + n > cur_lo:
            cbuf = cbuf[(w0 + n) - cur_lo:]
            cur_lo = w0 + n
        Tn = T[cur_lo - n - i0:cur_lo - n - i0 + cbuf.shape[0]]
        cbuf = np.linalg.solve(Tn, cbuf[..., None])[..., 0]
        sl = cbuf[:nwin + 1]                   # k = w0 .. w1
        v -= np.einsum("kim,km->ki", Wwin, sl)
        if n == N_b:
            unstable_tail = float(np.mean(np.linalg.norm(sl, axis=1)))
    return TangentSeq(vectors=v, kind="shadowing", start=w0,
                      meta={"N_f": N_f, "N_b": N_b,
                            "stable_tail": stable_tail,
                            "unstable_tail": unstable_tail})


# ---------------------------------------------------------------------------
# correction term and direct response sum


@dataclass
class CorrectionResult:
    """Truncated correction sum with per-term breakdown.

    terms[n] is the lag-n contribution; the truncation window is
    n in [-N_back, N-1].  half widths are 2-sigma batch-mean widths;
    the total's width is computed on the per-step combined series so
    cross-term correlation is respected.
    """

    total: float
    half_width: float
    terms: dict
    term_half_widths: dict
    N_back: int
    N: int
    window: tuple
    meta: dict = field(default_factory=dict)


def correction_term(orbit, model, frames, N_back=8, N=1, window=None,
                    jac=None, X=None, nbatches=16):
    """Estimate sum_{n=-N_back}^{N-1} mean_k J_u(u_{k+n}) . f_*^n X_plus_k.

    Backward transport happens in frame coefficient space (contracting,
    so the truncation error decays like lambda^(-N_back)); forward
    transport uses plain Jacobian pushes.
    """
    if N_back < 0 or N < 1:
        raise ValueError("need N_back >= 0 and N >= 1")
    if jac is None:
        jac = jacobian_sequence(model, orbit.states, orbit.s)
    if X is None:
        X, have_x0 = forcing_sequence(orbit, model)
    else:
        have_x0 = True
    xmin = 0 if have_x0 else 1
    if window is None:
        w0 = max(frames.start + N_back, xmin)
        w1 = min(frames.stop + 1, orbit.K - max(N - 1, 0) + 1)
    else:
        w0, w1 = int(window[0]), int(window[1])
    if w1 - w0 < 2 * nbatches:
        raise NeedsLongerOrbitError(
            f"correction window [{w0}, {w1}) too short")
    _check_range("correction (backward)", w0 - N_back, w1 - 1,
                 frames.start, frames.stop)
    _check_range("correction (forward)", w0, w1 - 1 + max(N - 1, 0),
                 xmin, orbit.K)
    states = orbit.states
    s = orbit.s
    Kw = w1 - w0

    Xw = X[w0:w1]
    cw = frames.unstable_coefficients(Xw, w0)
    Wk = frames.slice(w0, w1 - 1)[0]
    XPw = np.einsum("kim,km->ki", Wk, cw)

    terms = {}
    hws = {}
    series_total = np.zeros(Kw)

    buf = XPw
    for n in range(0, N):
        grads = model.objective_grad(states[w0 + n:w1 + n])
        ser = np.einsum("ki,ki->k", grads, buf)
        terms[n] = float(np.mean(ser))
        hws[n] = batch_half_width(ser, nbatches)
        series_total += ser
        if n < N - 1:
            buf = model.jvp(states[w0 + n:w1 + n], buf, s)

    if N_back > 0:
        # reduced forward maps T_i for i in [w0 - N_back, w1 - 2]
        ti0 = w0 - N_back
        J_T = jac[ti0:w1 - 1]
        WlT = frames.slice(ti0, w1 - 2)[0]
        WrT = frames.slice(ti0 + 1, w1 - 1)[0]
        T = WrT.transpose(0, 2, 1) @ (J_T @ WlT)
        cbuf = cw.copy()
        for j in range(1, N_back + 1):
            Tj = T[N_back - j:N_back - j + Kw]
            cbuf = np.linalg.solve(Tj, cbuf[..., None])[..., 0]
            Wb = frames.slice(w0 - j, w1 - 1 - j)[0]
            vec = np.einsum("kim,km->ki", Wb, cbuf)
            grads = model.objective_grad(states[w0 - j:w1 - j])
            ser = np.einsum("ki,ki->k", grads, vec)
            terms[-j] = float(np.mean(ser))
            hws[-j] = batch_half_width(ser, nbatches)
            series_total += ser
        tail = abs(terms[-N_back])
    else:
        tail = np.nan

    return CorrectionResult(
        total=float(np.mean(series_total)),
        half_width=batch_half_width(series_total, nbatches),
        terms=dict(sorted(terms.items())),
        term_half_widths=dict(sorted(hws.items())),
        N_back=N_back, N=N, window=(w0, w1),
        meta={"backward_tail": tail})


@dataclass
class RuelleResult:
    """Direct truncated response sum with full (unprojected) forcing."""

    total: float
    half_width: float
    terms: dict
    term_half_widths: dict
    N_r: int
    window: tuple


def direct_ruelle(orbit, model, N_r=12, window=None, X=None, nbatches=16):
    """sum_{n=0}^{N_r-1} mean_k J_u(u_{k+n}) . f_*^n X_k, X unprojected.

    The textbook response sum: unbiased term by term, but the summand
    variance grows like lambda^(2n), so N_r trades truncation bias
    against noise.  Per-term half widths quantify the blowup.
    """
    if N_r < 1:
        raise ValueError("N_r must be >= 1")
    if X is None:
        X, have_x0 = forcing_sequence(orbit, model)
    else:
        have_x0 = True
    xmin = 0 if have_x0 else 1
    if window is None:
        w0, w1 = xmin, orbit.K - (N_r - 1) + 1
    else:
        w0, w1 = int(window[0]), int(window[1])
    if w1 - w0 < 2 * nbatches:
        raise NeedsLongerOrbitError(f"response window [{w0}, {w1}) too short")
    _check_range("direct response sum", w0, w1 - 1 + N_r - 1, xmin, orbit.K)
    states = orbit.states
    s = orbit.s
    Kw = w1 - w0
    terms = {}
    hws = {}
    series_total = np.zeros(Kw)
    buf = X[w0:w1].copy()
    for n in range(N_r):
        grads = model.objective_grad(states[w0 + n:w1 + n])
        ser = np.einsum("ki,ki->k", grads, buf)
        terms[n] = float(np.mean(ser))
        hws[n] = batch_half_width(ser, nbatches)
        series_total += ser
        if n < N_r - 1:
            buf = model.jvp(states[w0 + n:w1 + n], buf, s)
    return RuelleResult(
        total=float(np.mean(series_total)),
        half_width=batch_half_width(series_total, nbatches),
        terms=terms, term_half_widths=hws, N_r=N_r, window=(w0, w1))


# ---------------------------------------------------------------------------
# finite-difference oracle


@dataclass
class FDResult:
    """Central-difference response estimate across independent seeds."""

    estimate: float
    half_width: float
    per_seed: np.ndarray
    delta_s: float
    K: int
    spinup: int


def finite_difference(model, s, delta_s=1e-2, K=1_000_000, n_seeds=16,
                      spinup=500, base_seed=9000, workers=None):
    """(<J>(s + ds) - <J>(s - ds)) / (2 ds), averaged over seeds.

    Each seed uses the same initial state at both parameter endpoints so
    slow-mixing noise partially cancels.  The half width is twice the
    standard error across seeds.  Bias is O(delta_s^2) when the response
    is smooth; noise per seed scales like 1/(delta_s sqrt(K)).
    """
    if n_seeds < 2:
        raise ValueError("need at least 2 seeds for an error bar")

    def one(i):
        u0 = initial_state(model, [base_seed, i])
        jp = objective_mean(model, s + delta_s, K, spinup=spinup, u0=u0)
        jm = objective_mean(model, s - delta_s, K, spinup=spinup, u0=u0)
        return (jp - jm) / (2.0 * delta_s)

    vals = np.array(_pmap(one, list(range(n_seeds)), workers))
    return FDResult(
        estimate=float(np.mean(vals)),
        half_width=float(2.0 * np.std(vals, ddof=1) / np.sqrt(n_seeds)),
        per_seed=vals, delta_s=float(delta_s), K=int(K), spinup=int(spinup))


# ---------------------------------------------------------------------------
# per-step error profile


@dataclass
class ErrorProfile:
    """Per-step deviation between two tangent sequences over their overlap.

    The profile of a NILSS solution against the explicit oracle decays
    exponentially from both window endpoints (stable rate from the start,
    unstable rate from the end) down to a plateau set by truncation and
    regression noise.
    """

    start: int
    err: np.ndarray
    plateau: float
    forward_rate: float
    backward_rate: float
    meta: dict = field(default_factory=dict)


def _fit_decay(err, thr):
    """Decay rate of the leading stretch of err sitting above thr."""
    above = err > thr
    n_lead = int(np.argmin(above)) if not above.all() else len(err)
    n_lead = min(n_lead, len(err) // 3)
    if n_lead < 4:
        return np.nan, 0
    k = np.arange(n_lead)
    slope = np.polyfit(k, np.log(err[:n_lead]), 1)[0]
    return float(-slope), n_lead


def error_profile(v_num, v_ref):
    """Compare tangent sequences step by step and fit endpoint decay rates."""
    lo = max(v_num.start, v_ref.start)
    hi = min(v_num.stop, v_ref.stop)
    if hi - lo < 12:
        raise ValueError("overlap too short for a profile")
    a = v_num.vectors[lo - v_num.start:hi - v_num.start + 1]
    b = v_ref.vectors[lo - v_ref.start:hi - v_ref.start + 1]
    err = np.linalg.norm(a - b, axis=1)
    n = err.shape[0]
    plateau = float(np.median(err[n // 3:2 * n // 3]))
    thr = max(5.0 * plateau, 1e-300)
    fwd, nf = _fit_decay(err, thr)
    bwd, nb = _fit_decay(err[::-1], thr)
    return ErrorProfile(start=lo, err=err, plateau=plateau,
                        forward_rate=fwd, backward_rate=bwd,
                        meta={"n_forward_fit": nf, "n_backward_fit": nb})


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class SensitivityReport:
    """Everything one sensitivity analysis produced, JSON/CSV-serializable."""

    schema_version: int
    system: dict
    s: float
    K: int
    seed: int
    m: int
    shadowing: float
    shadowing_half_width: float
    correction: float
    correction_half_width: float
    correction_terms: dict
    correction_term_half_widths: dict
    N_back: int
    N: int
    corrected_total: float
    fd_oracle: float = None
    fd_half_width: float = None
    ruelle: float = None
    ruelle_half_width: float = None
    N_r: int = None
    diagnostics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self, include_timings=False):
        d = {
            "schema_version": self.schema_version,
            "system": self.system,
            "s": self.s, "K": self.K, "seed": self.seed, "m": self.m,
            "shadowing": self.shadowing,
            "shadowing_half_width": self.shadowing_half_width,
            "correction": self.correction,
            "correction_half_width": self.correction_half_width,
            "correction_terms": {str(n): v for n, v
                                 in self.correction_terms.items()},
            "correction_term_half_widths": {
                str(n): v for n, v in self.correction_term_half_widths.items()},
            "N_back": self.N_back, "N": self.N,
            "corrected_total": self.corrected_total,
            "fd_oracle": self.fd_oracle,
            "fd_half_width": self.fd_half_width,
            "ruelle": self.ruelle,
            "ruelle_half_width": self.ruelle_half_width,
            "N_r": self.N_r,
            "diagnostics": self.diagnostics,
            "config": self.config,
        }
        if include_timings:
            d["timings"] = self.timings
        return d

    def scalar_rows(self):
        """(section, key, value) rows for the long-format CSV."""
        rows = [("report", "schema_version", self.schema_version),
                ("report", "s", self.s), ("report", "K", self.K),
                ("report", "seed", self.seed), ("report", "m", self.m),
                ("estimate", "shadowing", self.shadowing),
                ("estimate", "shadowing_half_width",
                 self.shadowing_half_width),
                ("estimate", "correction", self.correction),
                ("estimate", "correction_half_width",
                 self.correction_half_width),
                ("estimate", "corrected_total", self.corrected_total),
                ("estimate", "N_back", self.N_back),
                ("estimate", "N", self.N)]
        for n, val in self.correction_terms.items():
            rows.append(("correction_term", str(n), val))
        if self.fd_oracle is not None:
            rows.append(("oracle", "fd", self.fd_oracle))
            rows.append(("oracle", "fd_half_width", self.fd_half_width))
        if self.ruelle is not None:
            rows.append(("oracle", "ruelle", self.ruelle))
            rows.append(("oracle", "ruelle_half_width",
                         self.ruelle_half_width))
            rows.append(("oracle", "N_r", self.N_r))
        for key, val in sorted(self.diagnostics.items()):
            if isinstance(val, (int, float)) and not isinstance(val, bool):
                rows.append(("diagnostic", key, val))
        return rows


def assemble_report(model, s, K=100_000, seed=0, spinup=500,
                    tangent_spinup=200, adjoint_spinup=200, segment_len=20,
                    renorm_every=1, N_back=8, N=1, N_f=40, N_b=40,
                    include_fd=True, delta_s=1e-2, fd_K=None, fd_seeds=16,
                    N_r=None, include_oracle=False, nbatches=16,
                    workers=None, config_echo=None):
    """Run the full pipeline on one system and collect every estimate.

    Builds one orbit with buffers around the averaging window (tangent
    spin-up, two-sided transport lookahead/lookbehind, adjoint spin-up),
    propagates bases, solves NILSS, evaluates the correction, and runs the
    requested oracles.  corrected_total = shadowing + correction exactly.
    """
    if renorm_every != 1:
        raise ConfigError("the report pipeline needs per-step frames; "
                          "renorm_every must be 1 here")
    m = model.num_unstable
    if m < 1 or m > model.dim:
        raise ConfigError(f"pipeline needs 1 <= m <= dim, got m={m}")
    past = max(N_f, N_back, 1)
    future = max(N_b, N - 1, (N_r - 1) if N_r else 0, 1)
    K_tot = tangent_spinup + past + K + future + adjoint_spinup
    timings = {}

    t0 = time.perf_counter()
    orb = generate_orbit(model, s, K_tot, spinup=spinup, seed=seed)
    timings["orbit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    jac = jacobian_sequence(model, orb.states, s)
    X, _ = forcing_sequence(orb, model)
    tbasis = propagate_homogeneous(orb, model, m=m, renorm_every=1,
                                   spinup=tangent_spinup, seed=seed, jac=jac)
    abasis = propagate_adjoint(orb, model, m=m, renorm_every=1,
                               spinup=adjoint_spinup, seed=seed, jac=jac)
    frames = build_frames(orb, tbasis, abasis)
    timings["tangent"] = time.perf_counter() - t0

    w0 = tangent_spinup + past
    w1 = w0 + K

    t0 = time.perf_counter()
    sol = solve_nilss(orb, model, tbasis, window=(w0, w1),
                      segment_len=segment_len, jac=jac, X=X)
    shadow, shadow_hw = shadowing_contribution(orb, model, sol, nbatches)
    timings["nilss"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    corr = correction_term(orb, model, frames, N_back=N_back, N=N,
                           window=(w0, w1), jac=jac, X=X, nbatches=nbatches)
    timings["correction"] = time.perf_counter() - t0

    diagnostics = {
        "recurrence_residual": sol.recurrence_residual,
        "optimality_residual": sol.optimality_residual,
        "nilss_condition": sol.condition,
        "min_splitting_angle": frames.min_angle(),
        "correction_backward_tail": corr.meta["backward_tail"],
    }
    try:
        exps = lyapunov_exponents(tbasis)
        diagnostics["lyapunov_exponents"] = [float(e) for e in exps]
        diagnostics["n_positive_exponents"] = int(np.sum(exps > 0))
    except Exception:
        pass

    ru = None
    if N_r is not None:
        t0 = time.perf_counter()
        ru = direct_ruelle(orb, model, N_r=N_r, window=(w0, w1), X=X,
                           nbatches=nbatches)
        timings["ruelle"] = time.perf_counter() - t0

    if include_oracle:
        t0 = time.perf_counter()
        vref = explicit_shadowing_direction(orb, model, frames, N_f=N_f,
                                            N_b=N_b, window=(w0, w1),
                                            jac=jac, X=X)
        prof = error_profile(sol.v, vref)
        diagnostics["oracle_plateau"] = prof.plateau
        diagnostics["oracle_max_mid_deviation"] = float(
            np.max(prof.err[len(prof.err) // 4:3 * len(prof.err) // 4]))
        diagnostics["oracle_stable_tail"] = vref.meta["stable_tail"]
        diagnostics["oracle_unstable_tail"] = vref.meta["unstable_tail"]
        timings["oracle"] = time.perf_counter() - t0

    fd = None
    if include_fd:
        t0 = time.perf_counter()
        fd = finite_difference(model, s, delta_s=delta_s,
                               K=fd_K if fd_K else K, n_seeds=fd_seeds,
                               spinup=spinup, base_seed=9000 + 131 * seed,
                               workers=workers)
        timings["fd"] = time.perf_counter() - t0

    return SensitivityReport(
        schema_version=1,
        system=model.describe(),
        s=float(s), K=int(K), seed=int(seed), m=int(m),
        shadowing=shadow, shadowing_half_width=shadow_hw,
        correction=corr.total, correction_half_width=corr.half_width,
        correction_terms=corr.terms,
        correction_term_half_widths=corr.term_half_widths,
        N_back=int(N_back), N=int(N),
        corrected_total=shadow + corr.total,
        fd_oracle=fd.estimate if fd else None,
        fd_half_width=fd.half_width if fd else None,
        ruelle=ru.total if ru else None,
        ruelle_half_width=ru.half_width if ru else None,
        N_r=int(N_r) if N_r else None,
        diagnostics=diagnostics,
        timings=timings,
        config=config_echo or {},
    )
