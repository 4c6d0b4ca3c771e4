"""Statistical error model for shadowing estimates, checked empirically.

Model the forcing X and objective gradient J_u as independent standard
normal vectors in dimension M, constant along the orbit.  Writing X_plus
for the oblique projection onto the m unstable directions and alpha for
the smallest stable/unstable principal angle, the projection inflates as

    ||J_u X_plus|| / ||J_u X||  <=  sqrt(m / M) / sin(alpha),

with ||.|| the root mean square over field draws.  Since the shadowing
estimate's deviation from the true response is driven by J_u X_plus while
the response magnitude itself is driven by J_u X, the relative shadowing
error on an M-dimensional system with m unstable directions scales like
sqrt(m / M): few unstable directions out of many means small error.

This module measures these quantities on actual systems: the projection
ratio against its bound, the error scaling against slope 1/2 in m, the
1/K convergence of the NILSS solution toward the explicit oracle on a
common orbit, and empirical decorrelation rates.
"""

from dataclasses import dataclass, field

import numpy as np

from .model import BlockHyperbolicLinear
from .nilss import solve_nilss, shadowing_contribution
from .orbit import generate_orbit
from .response import explicit_shadowing_direction, finite_difference
from .stats import loglog_slope
from .subspace import build_frames
from .tangent import (jacobian_sequence, propagate_homogeneous,
                      propagate_adjoint)


def draw_random_fields(dim, trials, seed):
    """Independent standard-normal (X, J_u) pairs, each (trials, dim)."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((trials, dim)), \
        rng.standard_normal((trials, dim))


def block_system(M, m, shear=0.0, unstable_mult=2.0, stable_mult=0.5,
                 **kw):
    """Block-linear system with m unstable of M directions, optional shear."""
    if not 1 <= m <= M:
        raise ValueError(f"need 1 <= m <= M, got m={m}, M={M}")
    return BlockHyperbolicLinear(
        unstable_mults=(unstable_mult,) * m,
        stable_mults=(stable_mult,) * (M - m),
        shear=shear, **kw)


def _pipeline_frames(system, K, seed, spinup_basis=100):
    orb = generate_orbit(system, 0.0, K, spinup=400, seed=seed)
    jac = jacobian_sequence(system, orb.states, 0.0)
    tb = propagate_homogeneous(orb, system, spinup=spinup_basis, seed=seed,
                               jac=jac)
    ab = propagate_adjoint(orb, system, spinup=spinup_basis, seed=seed,
                           jac=jac)
    return orb, jac, tb, ab, build_frames(orb, tb, ab)


@dataclass
class BoundCheckResult:
    """Monte-Carlo projection ratio against the lemma bound.

    ratio_sq estimates E (J_u . X_plus)^2 / M over field draws and sampled
    frames; bound_sq = m / (M sin^2 alpha) with alpha measured from the
    frames.  violated uses a 3-sigma allowance, so a correct bound fails
    this check with probability ~0.1%.  For orthogonal splittings the
    inequality is an equality in expectation: ratio_sq -> m / M.
    """

    M: int
    m: int
    trials: int
    sample_count: int
    sin_alpha: float
    bound_sq: float
    ratio_sq: float
    ratio_sq_se: float
    den_sq: float
    den_sq_se: float
    violated: bool

    def rows(self):
        base = {"M": self.M, "m": self.m}
        out = []
        for key in ("sin_alpha", "bound_sq", "ratio_sq", "ratio_sq_se",
                    "den_sq", "den_sq_se"):
            out.append({**base, "quantity": key,
                        "value": getattr(self, key)})
        out.append({**base, "quantity": "violated",
                    "value": int(self.violated)})
        return out


def check_projection_bound(system, trials=4096, orbit_K=3000,
                           sample_count=64, seed=0):
    """Sample the projection ratio on real frames and compare to the bound."""
    orb, _, _, _, frames = _pipeline_frames(system, orbit_K, seed)
    M = system.dim
    m = system.num_unstable
    X, Ju = draw_random_fields(M, trials, [seed, 17])

    lo, hi = frames.start, frames.stop
    steps = np.unique(np.linspace(lo, hi, sample_count).astype(int))
    num_sq = np.zeros((trials, steps.size))
    for idx, k in enumerate(steps):
        i = k - frames.start
        rhs = X @ frames.A[i]                       # (trials, m)
        c = np.linalg.solve(frames.AtW[i], rhs.T).T
        xp = c @ frames.W[i].T                      # (trials, M)
        num_sq[:, idx] = np.einsum("ti,ti->t", Ju, xp) ** 2

    q = num_sq.mean(axis=1) / M                     # per-trial ratio^2
    ratio_sq = float(q.mean())
    ratio_sq_se = float(q.std(ddof=1) / np.sqrt(trials))
    d = np.einsum("ti,ti->t", Ju, X) ** 2 / M
    den_sq = float(d.mean())
    den_sq_se = float(d.std(ddof=1) / np.sqrt(trials))

    sin_alpha = float(np.sin(frames.min_angle()))
    bound_sq = m / (M * sin_alpha ** 2)
    return BoundCheckResult(
        M=M, m=m, trials=trials, sample_count=int(steps.size),
        sin_alpha=sin_alpha, bound_sq=bound_sq,
        ratio_sq=ratio_sq, ratio_sq_se=ratio_sq_se,
        den_sq=den_sq, den_sq_se=den_sq_se,
        violated=bool(ratio_sq - 3.0 * ratio_sq_se > bound_sq))


@dataclass
class ScalingStudy:
    """Relative shadowing error versus number of unstable directions.

    For each m, draws constant random forcing/gradient fields on a
    block-linear system, compares the shadowing estimate against a
    finite-difference oracle, and reduces to the RMS of
    |shadowing - fd| / sqrt(M).  The fitted log-log slope against m
    should approach 1/2.
    """

    M: int
    m_list: tuple
    trials: int
    rms: dict
    slope: float
    intercept: float
    rows: list = field(default_factory=list)

    def write_csv(self, path):
        from .stats import write_csv
        write_csv(path, ["M", "m", "K", "seed", "quantity", "value"],
                  self.rows)


def shadowing_error_scaling(M=8, m_list=(1, 2, 4), trials=48, K=400,
                            segment_len=20, shear=0.0, delta_s=0.1,
                            fd_K=20000, fd_seeds=4, seed=0,
                            stable_forcing_only=False):
    """Measure how the relative shadowing error grows with m at fixed M.

    With stable_forcing_only the random forcing is restricted to stable
    coordinates, making X_plus = 0: the shadowing estimate then matches
    the oracle to statistical noise regardless of m.
    """
    rows = []
    rms = {}
    for m in m_list:
        base = block_system(M, m, shear=shear)
        w0 = 120
        w1 = w0 + K
        K_tot = w1 + 60
        orb = generate_orbit(base, 0.0, K_tot, spinup=400, seed=[seed, m])
        jac = jacobian_sequence(base, orb.states, 0.0)
        tb = propagate_homogeneous(orb, base, m=m, spinup=100,
                                   seed=seed, jac=jac)
        errs = np.empty(trials)
        for t in range(trials):
            rng = np.random.default_rng([seed, m, t])
            X0 = rng.standard_normal(M)
            if stable_forcing_only:
                X0[:m] = 0.0
            w = rng.standard_normal(M)
            probe = BlockHyperbolicLinear(
                unstable_mults=(2.0,) * m, stable_mults=(0.5,) * (M - m),
                shear=shear, forcing=X0, objective="linear", obj_weights=w)
            Xseq = np.broadcast_to(X0, (K_tot + 1, M)).copy()
            sol = solve_nilss(orb, probe, tb, window=(w0, w1),
                              segment_len=segment_len, jac=jac, X=Xseq)
            shadow, _ = shadowing_contribution(orb, probe, sol)
            fd = finite_difference(probe, 0.0, delta_s=delta_s, K=fd_K,
                                   n_seeds=fd_seeds, spinup=500,
                                   base_seed=7 + 1009 * t + 917101 * m)
            err = abs(shadow - fd.estimate) / np.sqrt(M)
            errs[t] = err
            for quantity, value in (("shadowing", shadow),
                                    ("fd", fd.estimate),
                                    ("rel_err", err)):
                rows.append({"M": M, "m": m, "K": K, "seed": t,
                             "quantity": quantity, "value": value})
        rms[m] = float(np.sqrt(np.mean(errs ** 2)))
        rows.append({"M": M, "m": m, "K": K, "seed": -1,
                     "quantity": "rms_rel_err", "value": rms[m]})
    slope, intercept = loglog_slope(list(rms), list(rms.values()))
    return ScalingStudy(M=M, m_list=tuple(m_list), trials=trials, rms=rms,
                        slope=slope, intercept=intercept, rows=rows)


@dataclass
class ConvergenceStudy:
    """Gap between NILSS and the explicit oracle on shared orbits vs K."""

    K_list: tuple
    gaps: np.ndarray          # (len(K_list), n_seeds)
    mean_abs: np.ndarray      # (len(K_list),)
    slope: float
    intercept: float

    def rows(self):
        out = []
        for i, K in enumerate(self.K_list):
            for s, g in enumerate(self.gaps[i]):
                out.append({"K": K, "seed": s, "quantity": "gap",
                            "value": float(g)})
            out.append({"K": K, "seed": -1, "quantity": "mean_abs_gap",
                        "value": float(self.mean_abs[i])})
        return out


def nilss_convergence_study(model=None, K_list=(100, 1000, 10000),
                            n_seeds=8, N_f=60, N_b=60, segment_len=10,
                            seed=0):
    """Same-orbit contribution gap between NILSS and the truncated oracle.

    Both estimates integrate J_u . v over the identical window, so
    statistical noise cancels and what remains is the window-boundary
    error of the least-squares minimizer, which shrinks like 1/K.  The
    oracle truncation (lambda^-N_f, lambda^-N_b) sits far below that.
    """
    if model is None:
        model = BlockHyperbolicLinear(unstable_mults=(2.0,),
                                      stable_mults=(), forcing=(1.0,))
    K_list = tuple(int(K) for K in K_list)
    gaps = np.empty((len(K_list), n_seeds))
    for i, K in enumerate(K_list):
        w0 = 100 + N_f
        w1 = w0 + K
        K_tot = w1 + N_b + 20
        for sd in range(n_seeds):
            orb = generate_orbit(model, 0.0, K_tot, spinup=300,
                                 seed=[seed, K, sd])
            jac = jacobian_sequence(model, orb.states, 0.0)
            tb = propagate_homogeneous(orb, model, spinup=100, seed=sd,
                                       jac=jac)
            ab = propagate_adjoint(orb, model, spinup=10, seed=sd, jac=jac)
            frames = build_frames(orb, tb, ab)
            sol = solve_nilss(orb, model, tb, window=(w0, w1),
                              segment_len=segment_len, jac=jac)
            vref = explicit_shadowing_direction(orb, model, frames,
                                                N_f=N_f, N_b=N_b,
                                                window=(w0, w1), jac=jac)
            grads = model.objective_grad(orb.states[w0:w1])
            a = np.mean(np.einsum("ki,ki->k", grads, sol.v.vectors[:-1]))
            b = np.mean(np.einsum("ki,ki->k", grads, vref.vectors[:-1]))
            gaps[i, sd] = a - b
    mean_abs = np.mean(np.abs(gaps), axis=1)
    slope, intercept = loglog_slope(K_list, mean_abs)
    return ConvergenceStudy(K_list=K_list, gaps=gaps, mean_abs=mean_abs,
                            slope=slope, intercept=intercept)


@dataclass
class DecorrelationResult:
    """Normalized lagged correlations along an orbit."""

    lags: np.ndarray
    corr: np.ndarray
    rate: float            # fitted exponential decay rate, nan if unresolved
    noise_floor: float


def empirical_decorrelation(orbit, g, h=None, n_max=50, window=None):
    """corr(n) = <g_k h_{k+n}> / (sigma_g sigma_h), means removed.

    The fitted rate uses lags above the 3/sqrt(K) noise floor; chaotic
    averaging arguments need this to be safely positive.
    """
    if h is None:
        h = g
    w0, w1 = window if window is not None else (0, orbit.K)
    if w1 - w0 <= 2 * n_max:
        raise ValueError("window too short for requested n_max")
    gv = np.asarray(g(orbit.states[w0:w1]), dtype=float)
    hv = np.asarray(h(orbit.states[w0:w1]), dtype=float)
    gv = gv - gv.mean()
    hv = hv - hv.mean()
    sg, sh = gv.std(), hv.std()
    if sg == 0 or sh == 0:
        raise ValueError("constant series have no correlations")
    n = gv.size
    corr = np.empty(n_max + 1)
    for lag in range(n_max + 1):
        corr[lag] = np.mean(gv[:n - lag] * hv[lag:]) / (sg * sh)
    floor = 3.0 / np.sqrt(n)
    usable = np.abs(corr[1:]) > floor
    stop = int(np.argmin(usable)) if not usable.all() else n_max
    if stop >= 3:
        lags = np.arange(1, stop + 1)
        slope = np.polyfit(lags, np.log(np.abs(corr[1:stop + 1])), 1)[0]
        rate = float(-slope)
    else:
        rate = float("nan")
    return DecorrelationResult(lags=np.arange(n_max + 1), corr=corr,
                               rate=rate, noise_floor=float(floor))
