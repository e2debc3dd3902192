"""Desk-scale cross-check matrix behind the ``validate`` subcommand.

Each check pits an implementation against an independent route (closed
form vs generic conditioning, quadrature vs Monte Carlo, classifier vs
dyadic table) at the tolerances the library promises.  ``tamper`` is a
test hook that zeroes every tolerance so the failure path is exercised.
"""

from __future__ import annotations

import dataclasses
import math
import time

import numpy as np

from . import gausscond, kacrice, simulate
from ._rng import substream
from .covmodels import (
    GaussianExp,
    GaussianRadial,
    IsotropicFieldModel,
    LacunaryLog,
    MaternLike,
    MaternRadial,
    SineCosine,
)


@dataclasses.dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _timed(fn):
    def wrapper(tol_scale):
        t0 = time.time()
        passed, detail = fn(tol_scale)
        return CheckResult(fn.__name__.replace("check_", "").replace("_", "-"),
                           passed, detail, time.time() - t0)
    wrapper.__name__ = fn.__name__
    return wrapper


def _random_model(rng):
    pick = rng.integers(0, 3)
    if pick == 0:
        return GaussianExp(scale=float(rng.uniform(0.4, 2.0)))
    if pick == 1:
        return SineCosine(w=float(rng.uniform(0.5, 4.0)))
    return MaternLike(nu=float(rng.uniform(2.2, 4.8)), scale=float(rng.uniform(0.5, 2.0)))


@_timed
def check_regression_forms(tol_scale):
    """mu1, mu2, sigma2, det against generic Schur conditioning."""
    rng = np.random.default_rng(101)
    tol = 1e-10 * tol_scale
    worst = 0.0
    for _ in range(100):
        model = _random_model(rng)
        hi = min(2.0, 0.8 * model.first_degenerate_lag)
        tau = float(rng.uniform(0.05, hi))
        u = float(rng.uniform(-2.0, 2.0))
        r, r1, r2 = float(model.r(tau)), float(model.r1(tau)), float(model.r2(tau))
        lam2 = model.lambda2
        cov = np.array(
            [
                [lam2, -r2, 0.0, -r1],
                [-r2, lam2, r1, 0.0],
                [0.0, r1, 1.0, r],
                [-r1, 0.0, r, 1.0],
            ]
        )
        cond = gausscond.condition(np.zeros(4), cov, [2, 3], [u, u])
        pc = gausscond.pair_conditional_1d(model, tau, u)
        scale = max(1.0, abs(u), lam2)
        worst = max(
            worst,
            abs(cond.mean[1] - pc.mu1) / scale,
            abs(cond.mean[0] - pc.mu2) / scale,
            abs(cond.mean[0] + cond.mean[1]) / scale,
            abs(cond.cov[0, 0] - pc.sigma2) / scale,
            abs((1.0 - r * r) - pc.det_var) / scale,
        )
    return worst < tol, f"max relative deviation {worst:.2e} (tol {tol:.0e})"


@_timed
def check_lcov_matrix(tol_scale):
    """Block conditional covariance vs generic conditioning, zero pattern included."""
    rng = np.random.default_rng(202)
    tol = 1e-10 * tol_scale
    worst = 0.0
    for _ in range(100):
        if rng.random() < 0.5:
            prof = GaussianRadial(scale=float(rng.uniform(0.3, 2.0)))
        else:
            prof = MaternRadial(nu=float(rng.uniform(2.2, 5.0)), scale=float(rng.uniform(0.5, 2.0)))
        r = float(rng.uniform(0.05, 2.0))
        d = int(rng.integers(2, 4))
        u = float(rng.uniform(-2.0, 2.0))
        closed = gausscond.lcov_closed_form(prof, r, d)
        joint = gausscond.joint_gradient_cov(prof, r, d)
        cond = gausscond.condition(np.zeros(2 * d + 2), joint, [2 * d, 2 * d + 1], [u, u])
        m0, m1 = gausscond.lcov_conditional_means(prof, r, d, u)
        worst = max(
            worst,
            float(np.abs(closed - cond.cov).max()),
            float(np.abs(np.concatenate([m0, m1]) - cond.mean).max()),
        )
        # coupling pattern: a single e1-e1 conditioning coupling
        off = closed.copy()
        np.fill_diagonal(off, 0.0)
        off[0, d] = off[d, 0] = 0.0
        for j in range(1, d):
            off[j, d + j] = off[d + j, j] = 0.0
        worst = max(worst, float(np.abs(off).max()))
    return worst < tol, f"max deviation {worst:.2e} (tol {tol:.0e})"


@_timed
def check_mehler_and_product_variance(tol_scale):
    """Mehler covariances vs MC; Var(Y1 Y2) >= 1 + 2 rho^2 on a mean grid."""
    n = 1_000_000
    worst_z = 0.0
    for rho in (0.0, 0.3, -0.3, 0.9, -0.9):
        rng = substream(303, int((rho + 1) * 1000))
        z1 = rng.standard_normal(n)
        z2 = rho * z1 + math.sqrt(1 - rho * rho) * rng.standard_normal(n)
        H1 = [np.ones_like(z1), z1, z1**2 - 1, z1**3 - 3 * z1, z1**4 - 6 * z1**2 + 3]
        H2 = [np.ones_like(z2), z2, z2**2 - 1, z2**3 - 3 * z2, z2**4 - 6 * z2**2 + 3]
        for i in range(5):
            for j in range(5):
                prod = H1[i] * H2[j]
                se = float(prod.std() / math.sqrt(n))
                diff = abs(float(prod.mean()) - gausscond.mehler_covariance(i, j, rho))
                worst_z = max(worst_z, diff / max(se, 1e-12))
    ok = worst_z < 3.0 * tol_scale if tol_scale else worst_z < 0.0
    # Mehler value = second moment of the centered product (equality), and
    # the chaos lower bound Var >= 1 + rho^2 >= 1, on the mean/corr grid
    lower_ok = True
    idx = 0
    for m1 in np.linspace(-2, 2, 5):
        for m2 in np.linspace(-2, 2, 5):
            for rho in np.linspace(-0.9, 0.9, 5):
                idx += 1
                rng = substream(304, idx)
                z1 = rng.standard_normal(200_000)
                z2 = rho * z1 + math.sqrt(1 - rho * rho) * rng.standard_normal(200_000)
                centered_sq = (z1 * z2) ** 2
                se_m = float(centered_sq.std() / math.sqrt(centered_sq.size))
                diff = abs(float(centered_sq.mean()) - gausscond.product_variance_lower(rho))
                if diff > 3 * se_m * tol_scale:
                    lower_ok = False
                prod = (m1 + z1) * (m2 + z2)
                var = float(prod.var())
                c = prod - prod.mean()
                se_v = math.sqrt(max(float(np.mean(c**4) - np.mean(c**2) ** 2), 0.0) / c.size)
                if var < 1.0 + rho * rho - 3 * se_v:
                    lower_ok = False
    return ok and lower_ok, f"max mehler z-score {worst_z:.2f}; product-moment checks {'ok' if lower_ok else 'violated'}"


@_timed
def check_abs_moment(tol_scale):
    """Closed form vs the centered classical expression; positivity on the box."""
    tol = 1e-8 * tol_scale
    worst = 0.0
    for rho in np.linspace(-0.999, 0.999, 50):
        got = gausscond.abs_moment(gausscond.BivariateAbsMomentQuery(0.0, 0.0, rho))
        want = (2 / math.pi) * (math.sqrt(1 - rho * rho) + rho * math.asin(rho))
        worst = max(worst, abs(got - want))
    rng = np.random.default_rng(404)
    lo, hi = math.inf, 0.0
    for _ in range(1000):
        q = gausscond.BivariateAbsMomentQuery(
            float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)), float(rng.uniform(-1, 1))
        )
        v = gausscond.abs_moment(q)
        lo, hi = min(lo, v), max(hi, v)
    bounded = lo > 0.5 and hi < 12.0
    return worst < tol and bounded, (
        f"max closed-form deviation {worst:.2e} (tol {tol:.0e}); range [{lo:.3f}, {hi:.3f}]"
    )


def _batch_se(values):
    batches = np.array([b.mean() for b in np.array_split(values, 20)])
    return float(batches.std(ddof=1) / math.sqrt(20))


@_timed
def check_1d_moments(tol_scale):
    """Kac-Rice quadrature vs ensemble MC for the squared-exponential model.

    One path ensemble on [0, 2]; crossing counts for the (u, T) matrix are
    taken on nested prefixes of the same paths.
    """
    model = GaussianExp()
    reps = 20_000
    T_full, n_full = 2.0, 2**14 + 1
    dt = T_full / (n_full - 1)
    prefixes = (0.5, 1.0, 2.0)
    levels = (0.0, 1.0)
    sampler = simulate._Path1DSampler(model, T_full, n_full)
    counts = np.empty((reps, len(prefixes) * len(levels)))
    cache = {}
    for i in range(reps):
        pidx, half = divmod(i, 2)
        if pidx not in cache:
            cache = {pidx: sampler.sample_pair(substream(505, pidx))}
        x = cache[pidx][half]
        col = 0
        for T in prefixes:
            seg = x[: int(round(T / dt)) + 1]
            for u in levels:
                pos = seg >= u
                counts[i, col] = np.count_nonzero(pos[1:] != pos[:-1])
                col += 1
    geman = kacrice.geman_classify(model)
    failures = []
    col = 0
    for T in prefixes:
        for u in levels:
            c = counts[:, col]
            col += 1
            pair = c * (c - 1)
            rep = kacrice.second_factorial_moment_1d(model, u, T, geman=geman)
            z_pair = abs(rep.second_factorial - pair.mean()) / max(_batch_se(pair), 1e-12)
            z_mean = abs(rep.mean - c.mean()) / max(_batch_se(c), 1e-12)
            if z_pair > 3.0 * tol_scale or z_mean > 3.0 * tol_scale:
                failures.append(f"u={u} T={T}: z_pair={z_pair:.2f} z_mean={z_mean:.2f}")
    return not failures, "; ".join(failures) or f"all 6 configs within 3 SE ({reps} reps)"


@_timed
def check_geman_classifier(tol_scale):
    """Classifier verdicts and exponents on the three reference models."""
    rep_g = kacrice.geman_classify(GaussianExp())
    rep_s = kacrice.geman_classify(SineCosine(w=2.0))
    rep_l = kacrice.geman_classify(LacunaryLog())
    ok = (
        rep_g.classification == "Converges"
        and abs(rep_g.alpha - 2.0) < 0.1 * tol_scale
        and rep_s.classification == "Converges"
        and rep_l.classification == "Diverges"
    )
    forms_agree = all(
        r.sigma2_fit.classification == r.numerator_fit.classification
        for r in (rep_g, rep_s, rep_l)
    )
    return ok and forms_agree, (
        f"gauss alpha={rep_g.alpha:.3f}, sine={rep_s.classification}, "
        f"lacunary={rep_l.classification}, forms agree: {forms_agree}"
    )


@_timed
def check_2d_roots(tol_scale):
    """Root-count mean and pair moment vs radial quadrature (reduced scale)."""
    field = IsotropicFieldModel(profiles=(GaussianRadial(0.35), GaussianRadial(0.35)))
    rect = (1.0, 1.0)
    failures = []
    for u in (0.0, (1.0, 1.0)):
        cfg = simulate.EnsembleConfig(
            mode="roots2d", model=field, u=u, domain=rect, resolution=257,
            replicates=300, seed=606, richardson=False, workers=4,
        )
        ens = simulate.run_ensemble(cfg)
        rep = kacrice.second_moment_2d_zero(field, u, rect, seed=607)
        se = math.hypot(ens.pair_se, rep.inner_mc_se) + rep.quad_error
        z_pair = abs(rep.second_factorial - ens.pair_mean) / max(se, 1e-12)
        z_mean = abs(rep.mean - ens.mean) / max(ens.se, 1e-12)
        if z_pair > 3.0 * tol_scale or z_mean > 3.0 * tol_scale:
            failures.append(f"u={u}: z_pair={z_pair:.2f} z_mean={z_mean:.2f}")
    return not failures, "; ".join(failures) or "means and pair moments within 3 SE"


@_timed
def check_2d_length(tol_scale):
    """Level-curve length second moment vs radial quadrature (reduced scale)."""
    field = IsotropicFieldModel(profiles=(GaussianRadial(0.35),), domain_dim=2)
    rect = (1.0, 1.0)
    failures = []
    for u in (0.0, 1.0):
        cfg = simulate.EnsembleConfig(
            mode="length2d", model=field, u=u, domain=rect, resolution=129,
            replicates=200, seed=707, richardson=True, workers=4,
        )
        ens = simulate.run_ensemble(cfg)
        rep = kacrice.length_second_moment_2d_to_1d(field, u, rect, seed=708)
        se = math.hypot(ens.pair_se, rep.inner_mc_se) + rep.quad_error
        z = abs(rep.second_moment - ens.pair_mean) / max(se, 1e-12)
        if z > 3.0 * tol_scale:
            failures.append(f"u={u}: z={z:.2f}")
    return not failures, "; ".join(failures) or "length second moments within 3 SE"


ALL_CHECKS = (
    check_regression_forms,
    check_lcov_matrix,
    check_mehler_and_product_variance,
    check_abs_moment,
    check_1d_moments,
    check_geman_classifier,
    check_2d_roots,
    check_2d_length,
)


def run_validation(name_filter: str = "", tamper: bool = False):
    """Run the matrix, optionally filtered by substring; returns results."""
    tol_scale = 0.0 if tamper else 1.0
    results = []
    for check in ALL_CHECKS:
        label = check.__name__.replace("check_", "").replace("_", "-")
        if name_filter and name_filter not in label:
            continue
        results.append(check(tol_scale))
    return results
