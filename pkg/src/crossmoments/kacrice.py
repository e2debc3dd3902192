"""Kac-Rice moment integrals, the small-lag convergence classifier, and
their multidimensional analogues.

1D: the second factorial moment of the number of u-crossings on [0, T],

    E[N(N-1)] = (1/pi) int_0^T (T - tau) E_C[|X'(0) X'(tau)|]
                e^{-u^2/(1+r)} / sqrt(1 - r^2) dtau,

evaluated by composite Gauss-Legendre panels with a logarithmic
substitution near the endpoint singularity, after the convergence
classifier has ruled on the integrand class.  Divergence is always
declared by the classifier, never inferred from quadrature blow-up.

2D: the factorial moment of root counts and the second moment of level-
curve length reduce by stationarity + isotropy to radial integrals with
the rectangle set-covariance kernel; the inner conditional Jacobian
moments have no closed form and are estimated by antithetic Monte Carlo
over the exact conditional Gaussian law.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import gausscond
from ._rng import substream
from .covmodels import CovarianceModel1D, IsotropicFieldModel, RadialProfile
from .errors import DegenerateLag, InnerMCBudgetExceeded, NonSmooth, QuadratureNonConvergent

SQRT2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# convergence classifier
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class GemanConfig:
    """Dyadic-grid settings for the small-lag convergence classifier."""

    k_min: int = 6
    k_max: int = 40
    alpha_tol: float = 0.25
    se_tol: float = 0.1
    s_tol: float = 1.25
    zero_tol: float = 1e-13


@dataclasses.dataclass(frozen=True)
class GemanFit:
    classification: str
    alpha: float | None
    alpha_se: float | None
    log_exponent: float | None = None
    log_exponent_se: float | None = None
    rss_power: float | None = None
    rss_log: float | None = None


@dataclasses.dataclass(frozen=True)
class GemanReport:
    """Joint classification of the two equivalent small-lag integral tests."""

    classification: str
    alpha: float | None
    alpha_se: float | None
    lags: np.ndarray
    sigma2_values: np.ndarray
    numerator_values: np.ndarray
    sigma2_fit: GemanFit
    numerator_fit: GemanFit
    #: diagnostic only: does the stricter /tau^2 integrand form also converge
    tau2_integral_converges: bool | None

    def to_json_dict(self):
        def clean(x):
            if x is None or (isinstance(x, float) and not math.isfinite(x)):
                return None
            return x

        return {
            "class": self.classification,
            "alpha": clean(self.alpha),
            "alpha_se": clean(self.alpha_se),
        }


def _ols(x, y):
    """Least-squares slope/intercept with the slope's standard error."""
    A = np.vstack([np.ones_like(x), x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rss = float(resid @ resid)
    dof = max(1, x.size - 2)
    sxx = float(np.sum((x - x.mean()) ** 2))
    se = math.sqrt(rss / dof / sxx) if sxx > 0 else math.inf
    return coef[1], coef[0], se, rss


def _classify_values(lags, vals, cfg: GemanConfig, scale: float) -> GemanFit:
    vals = np.asarray(vals, dtype=float)
    if np.max(vals) <= cfg.zero_tol * max(scale, 1.0):
        return GemanFit(classification="Converges", alpha=math.inf, alpha_se=0.0)
    half = len(lags) // 2
    lt = np.log(lags[half:])
    lv = np.log(np.maximum(vals[half:], 1e-300))
    if lt.size < 4:
        return GemanFit(classification="Inconclusive", alpha=None, alpha_se=None)
    alpha, _, alpha_se, rss_p = _ols(lt, lv)
    if alpha >= cfg.alpha_tol and alpha_se < cfg.se_tol:
        return GemanFit("Converges", alpha, alpha_se, rss_power=rss_p)
    if alpha <= -cfg.alpha_tol:
        return GemanFit("Diverges", alpha, alpha_se, rss_power=rss_p)
    # middle band: distinguish a slowly-varying 1/|log tau|^s class (whose
    # integral against dtau/tau diverges for s <= 1) from a genuine small
    # power tau^eps by which of the two log-linear models fits better
    llt = np.log(-lt)
    neg_s, _, s_se, rss_l = _ols(llt, lv)
    s = -neg_s
    if rss_l <= 2.0 * rss_p and s <= cfg.s_tol:
        cls = "Diverges"
    elif rss_p < rss_l and alpha - 2.0 * alpha_se > 0.0:
        cls = "Converges"
    else:
        cls = "Inconclusive"
    return GemanFit(cls, alpha, alpha_se, s, s_se, rss_p, rss_l)


def geman_classify(
    model: CovarianceModel1D,
    lags=None,
    config: GemanConfig = GemanConfig(),
) -> GemanReport:
    """Classify the convergence at zero of int sigma2(tau)/tau dtau.

    Evaluates sigma2 and the equivalent numerator lambda2 + r'' on a
    dyadic lag grid, fits log-value against log-lag on the finest half,
    and requires the two forms to agree; disagreement is reported as
    Inconclusive rather than as an error.
    """
    if lags is None:
        k_max = config.k_max
        floor = getattr(model, "eval_floor", 2.0**-48)
        k_max = min(k_max, int(-math.log2(floor)))
        ks = np.arange(config.k_min, k_max + 1)
        lags = 2.0 ** (-ks.astype(float))
    lags = np.asarray(sorted(lags, reverse=True), dtype=float)
    first_bad = model.first_degenerate_lag
    if lags[0] >= first_bad:
        lags = lags[lags < first_bad]
    sig = np.array([model.sigma2(t) for t in lags])
    num = np.array([float(model.geman_numerator(t)) for t in lags])
    lam2 = model.lambda2
    fit_s = _classify_values(lags, sig, config, lam2)
    fit_n = _classify_values(lags, num, config, lam2)
    combined = fit_s.classification if fit_s.classification == fit_n.classification else "Inconclusive"
    tau2 = None
    if fit_s.alpha is not None and fit_s.alpha_se is not None:
        tau2 = bool(fit_s.alpha - 2.0 * (fit_s.alpha_se or 0.0) > 1.0)
    return GemanReport(
        classification=combined,
        alpha=fit_s.alpha,
        alpha_se=fit_s.alpha_se,
        lags=lags,
        sigma2_values=sig,
        numerator_values=num,
        sigma2_fit=fit_s,
        numerator_fit=fit_n,
        tau2_integral_converges=tau2,
    )


# ---------------------------------------------------------------------------
# moment report
# ---------------------------------------------------------------------------

def _json_num(x):
    if x is None:
        return None
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


@dataclasses.dataclass
class MomentReport:
    """First and second moments of a level-set count or measure."""

    mean: float
    second_factorial: float
    second_moment: float
    quad_error: float
    geman_class: str | None = None
    geman_alpha: float | None = None
    geman_alpha_se: float | None = None
    inner_mc_se: float = 0.0

    def to_json_dict(self):
        alpha = self.geman_alpha
        if alpha is not None and math.isinf(alpha):
            alpha = None
        return {
            "mean": self.mean,
            "second_factorial": _json_num(self.second_factorial),
            "second_moment": _json_num(self.second_moment),
            "quad_error": self.quad_error,
            "geman": {
                "class": self.geman_class,
                "alpha": alpha,
                "alpha_se": self.geman_alpha_se,
            },
            "inner_mc_se": self.inner_mc_se,
        }


# ---------------------------------------------------------------------------
# 1D moments
# ---------------------------------------------------------------------------

def rice_mean_1d(model: CovarianceModel1D, u: float, T: float) -> float:
    """Expected number of u-crossings on [0, T]: (T/pi) sqrt(lambda2) e^{-u^2/2}."""
    if T <= 0:
        raise ValueError("T must be positive")
    return T / math.pi * math.sqrt(model.lambda2) * math.exp(-0.5 * u * u)


@dataclasses.dataclass(frozen=True)
class IntegrandComponents:
    mu1: float
    mu2: float
    sigma2: float
    rho_cond: float
    det_var: float


class KacRiceIntegrand1D:
    """tau -> (1/pi)(T - tau) E_C[|X'(0) X'(tau)|] e^{-u^2/(1+r)} / sqrt(1-r^2)."""

    def __init__(self, model: CovarianceModel1D, u: float, T: float):
        self.model = model
        self.u = u
        self.T = T

    def components(self, tau: float) -> IntegrandComponents:
        pc = gausscond.pair_conditional_1d(self.model, tau, self.u)
        return IntegrandComponents(
            mu1=pc.mu1, mu2=pc.mu2, sigma2=pc.sigma2, rho_cond=pc.rho_cond, det_var=pc.det_var
        )

    def __call__(self, tau: float) -> float:
        if not 0.0 < tau < self.T:
            return 0.0
        model = self.model
        det = float(model.det_pair_var(tau))
        if det <= 0.0:  # below the model's resolvable floor
            return 0.0
        inner = gausscond.conditional_abs_product(model, tau, self.u)
        dens = math.exp(-self.u * self.u / (1.0 + float(model.r(tau)))) / math.sqrt(det)
        return (self.T - tau) / math.pi * inner * dens


@dataclasses.dataclass(frozen=True)
class QuadConfig:
    """Composite-panel settings for the 1D moment integral."""

    tau_floor: float = 1e-9
    panels_per_decade: int = 5
    linear_panels: int = 32
    gl_order: int = 8
    rel_tol: float = 1e-6
    max_refine: int = 3


def _composite(f, edges, gl_order):
    x, w = np.polynomial.legendre.leggauss(gl_order)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        for xi, wi in zip(x, w):
            total += half * wi * f(mid + half * xi)
    return total


def _kr1d_quadrature(integrand, T, cfg: QuadConfig, refine: int):
    factor = 2**refine
    tau_split = min(0.1, T / 4.0)
    decades = math.log10(tau_split / cfg.tau_floor)
    n_log = max(4, int(round(cfg.panels_per_decade * decades))) * factor
    n_lin = cfg.linear_panels * factor
    log_edges = np.linspace(math.log(cfg.tau_floor), math.log(tau_split), n_log + 1)
    lin_edges = np.linspace(tau_split, T, n_lin + 1)
    val = _composite(lambda s: math.exp(s) * integrand(math.exp(s)), log_edges, cfg.gl_order)
    val += _composite(integrand, lin_edges, cfg.gl_order)
    return val


def second_factorial_moment_1d(
    model: CovarianceModel1D,
    u: float,
    T: float,
    quad: QuadConfig = QuadConfig(),
    geman: GemanReport | None = None,
) -> MomentReport:
    """E[N_u([0,T]) (N_u([0,T]) - 1)] by Kac-Rice quadrature.

    The convergence classifier is consulted first; a certified divergent
    model short-circuits to an infinite report without quadrature.

    Raises
    ------
    DegenerateLag
        If T reaches the first zero of 1 - r^2.
    QuadratureNonConvergent
        If panel refinements keep disagreeing beyond ``quad.rel_tol``.
    """
    if T >= model.first_degenerate_lag:
        raise DegenerateLag(
            f"T = {T} reaches the first degenerate lag {model.first_degenerate_lag:.6g}"
        )
    mean = rice_mean_1d(model, u, T)
    if geman is None:
        geman = geman_classify(model)
    if geman.classification == "Diverges":
        return MomentReport(
            mean=mean,
            second_factorial=math.inf,
            second_moment=math.inf,
            quad_error=0.0,
            geman_class=geman.classification,
            geman_alpha=geman.alpha,
            geman_alpha_se=geman.alpha_se,
        )
    floor = max(quad.tau_floor, getattr(model, "eval_floor", 0.0))
    if floor != quad.tau_floor:
        quad = dataclasses.replace(quad, tau_floor=floor)
    integrand = KacRiceIntegrand1D(model, u, T)
    prev = _kr1d_quadrature(integrand, T, quad, 0)
    err = math.inf
    val = prev
    for refine in range(1, quad.max_refine + 1):
        val = _kr1d_quadrature(integrand, T, quad, refine)
        err = abs(val - prev)
        if err <= quad.rel_tol * max(abs(val), 1e-12):
            break
        prev = val
    else:
        raise QuadratureNonConvergent(
            f"refinements still differ by {err:.3e} (rel_tol {quad.rel_tol})"
        )
    tail = integrand(quad.tau_floor) * quad.tau_floor
    return MomentReport(
        mean=mean,
        second_factorial=val,
        second_moment=val + mean,
        quad_error=err + tail,
        geman_class=geman.classification,
        geman_alpha=geman.alpha,
        geman_alpha_se=geman.alpha_se,
    )


def integrand_trace_1d(model, u, T, n=200):
    """(tau, integrand) samples for plotting, log-spaced then linear."""
    integrand = KacRiceIntegrand1D(model, u, T)
    taus = np.unique(
        np.concatenate(
            [
                np.geomspace(max(1e-8, T * 1e-8), min(0.1, T / 4), n // 2),
                np.linspace(min(0.1, T / 4), T * (1 - 1e-9), n - n // 2),
            ]
        )
    )
    vals = np.array([integrand(t) for t in taus])
    return taus, vals


# ---------------------------------------------------------------------------
# radial reduction over rectangles
# ---------------------------------------------------------------------------

def rect_radial_kernel(a: float, b: float, r) -> np.ndarray:
    """Isotropized set-covariance weight of the rectangle [0,a] x [0,b].

    k(r) = r * int_0^{2 pi} |S cap (S - r e(theta))| dtheta, so that
    int_{S^2} F(|t-s|) ds dt = int_0^{diam} F(r) k(r) dr for isotropic F.
    """
    r = np.asarray(r, dtype=float)
    th1 = np.arccos(np.minimum(1.0, a / np.maximum(r, 1e-300)))
    th2 = np.arcsin(np.minimum(1.0, b / np.maximum(r, 1e-300)))

    def anti(th):
        return (
            a * b * th
            + a * r * np.cos(th)
            - b * r * np.sin(th)
            + 0.5 * r**2 * np.sin(th) ** 2
        )

    out = 4.0 * r * np.where(th2 > th1, anti(th2) - anti(th1), 0.0)
    return np.maximum(out, 0.0)


@dataclasses.dataclass(frozen=True)
class InnerMCConfig:
    """Budget for the inner conditional-Jacobian Monte Carlo."""

    target_rel_se: float = 0.01
    max_draws: int = 1_000_000
    batch_pairs: int = 8192
    raise_on_budget: bool = False


def _conditional_gradient_laws(field: IsotropicFieldModel, u, r):
    """Per-coordinate (mean, eig-sqrt factor) of the conditional gradients."""
    d = field.domain_dim
    laws = []
    for prof, ui in zip(field.profiles, u):
        cov = gausscond.lcov_closed_form(prof, r, d)
        m0, m1 = gausscond.lcov_conditional_means(prof, r, d, ui)
        evals, evecs = np.linalg.eigh(cov)
        factor = evecs * np.sqrt(np.clip(evals, 0.0, None))
        laws.append((np.concatenate([m0, m1]), factor))
    return laws


def conditional_det_product(
    field: IsotropicFieldModel,
    u,
    r: float,
    rng: np.random.Generator,
    mc: InnerMCConfig = InnerMCConfig(),
):
    """A(r, u) = E_C[ |det X'(0) det X'(r e1)| ] by antithetic Monte Carlo.

    Returns (estimate, standard error, pairs used).  The conditional law
    of the two Jacobians is exact (closed-form block covariance and
    means); only the expectation of the absolute determinant product is
    sampled.
    """
    d = field.domain_dim
    if field.codomain_dim != d or d != 2:
        raise ValueError("det-product moment requires a square field with d = 2")
    laws = _conditional_gradient_laws(field, u, r)
    total = 0.0
    total_sq = 0.0
    n_pairs = 0
    while True:
        b = min(mc.batch_pairs, max(1, (mc.max_draws - 2 * n_pairs) // 2))
        rows = []
        for mean, factor in laws:
            z = rng.standard_normal((b, 2 * d))
            dev = z @ factor.T
            rows.append((mean + dev, mean - dev))
        vals = 0.5 * (_det_prod(rows, 0, d) + _det_prod(rows, 1, d))
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        n_pairs += b
        mean_est = total / n_pairs
        var = max(total_sq / n_pairs - mean_est * mean_est, 0.0)
        se = math.sqrt(var / n_pairs)
        if se <= mc.target_rel_se * max(abs(mean_est), 1e-12) or n_pairs * 2 >= mc.max_draws:
            break
    if se > mc.target_rel_se * max(abs(mean_est), 1e-12) and mc.raise_on_budget:
        raise InnerMCBudgetExceeded(
            f"se {se:.3e} above target at the {mc.max_draws}-draw cap"
        )
    return mean_est, se, n_pairs


def _det_prod(rows, which, d):
    g = [rows[i][which] for i in range(d)]  # per coordinate: (b, 2d)
    det0 = g[0][:, 0] * g[1][:, 1] - g[0][:, 1] * g[1][:, 0]
    det1 = g[0][:, d] * g[1][:, d + 1] - g[0][:, d + 1] * g[1][:, d]
    return np.abs(det0 * det1)


def conditional_gradnorm_product(
    field: IsotropicFieldModel,
    u: float,
    r: float,
    rng: np.random.Generator,
    mc: InnerMCConfig = InnerMCConfig(),
):
    """E_C[ ||grad X(0)|| * ||grad X(r e1)|| ] for a scalar field on R^2."""
    if field.codomain_dim != 1:
        raise ValueError("gradient-norm moment requires a scalar field")
    d = field.domain_dim
    prof = field.profiles[0]
    cov = gausscond.lcov_closed_form(prof, r, d)
    m0, m1 = gausscond.lcov_conditional_means(prof, r, d, u)
    mean = np.concatenate([m0, m1])
    evals, evecs = np.linalg.eigh(cov)
    factor = evecs * np.sqrt(np.clip(evals, 0.0, None))
    total = total_sq = 0.0
    n_pairs = 0
    while True:
        b = min(mc.batch_pairs, max(1, (mc.max_draws - 2 * n_pairs) // 2))
        z = rng.standard_normal((b, 2 * d))
        dev = z @ factor.T

        def norms(g):
            n0 = np.sqrt(np.sum(g[:, :d] ** 2, axis=1))
            n1 = np.sqrt(np.sum(g[:, d:] ** 2, axis=1))
            return n0 * n1

        vals = 0.5 * (norms(mean + dev) + norms(mean - dev))
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        n_pairs += b
        mean_est = total / n_pairs
        var = max(total_sq / n_pairs - mean_est * mean_est, 0.0)
        se = math.sqrt(var / n_pairs)
        if se <= mc.target_rel_se * max(abs(mean_est), 1e-12) or n_pairs * 2 >= mc.max_draws:
            break
    if se > mc.target_rel_se * max(abs(mean_est), 1e-12) and mc.raise_on_budget:
        raise InnerMCBudgetExceeded(
            f"se {se:.3e} above target at the {mc.max_draws}-draw cap"
        )
    return mean_est, se, n_pairs


def pair_density_2d(field: IsotropicFieldModel, u, r: float) -> float:
    """Joint density of (X(0), X(r e1)) at (u, u) under coordinate independence.

    prod_i (2 pi)^{-1} (1 - rho_i^2(r^2))^{-1/2} exp(-u_i^2 / (1 + rho_i(r^2))).
    """
    out = 1.0
    for prof, ui in zip(field.profiles, np.atleast_1d(u)):
        s = r * r
        rho = float(prof.value(s))
        det = float(prof.one_minus_value(s)) * (1.0 + rho)
        out *= math.exp(-ui * ui / (1.0 + rho)) / (2.0 * math.pi * math.sqrt(det))
    return out


def sigma2_max(field: IsotropicFieldModel, r: float) -> float:
    """max_i Var(e1-directional derivative of X_i | the two pins)."""
    return max(gausscond.sigma_i2(p, r) for p in field.profiles)


def _radial_nodes(diam, n_log, n_lin, gl_order, r_min_frac=1e-4):
    x, w = np.polynomial.legendre.leggauss(gl_order)
    r_min = diam * r_min_frac
    r_mid = diam / 4.0
    edges = np.concatenate(
        [
            np.geomspace(r_min, r_mid, n_log + 1),
            np.linspace(r_mid, diam, n_lin + 1)[1:],
        ]
    )
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes.extend(mid + half * x)
        weights.extend(half * w)
    return np.array(nodes), np.array(weights)


def _radial_moment_2d(field, u, rect, inner_fn, mc, seed, n_log, n_lin, gl_order):
    """Shared radial-reduction driver for the 2D second-moment integrals."""
    a, b = rect
    diam = math.hypot(a, b)
    nodes, weights = _radial_nodes(diam, n_log, n_lin, gl_order)
    coarse_nodes, coarse_weights = _radial_nodes(diam, n_log // 2, n_lin // 2, gl_order)
    kernel = rect_radial_kernel(a, b, nodes)
    total = 0.0
    se_sq = 0.0
    values = np.empty(nodes.size)
    for i, (r, w, k) in enumerate(zip(nodes, weights, kernel)):
        est, se, _ = inner_fn(r, substream(seed, i))
        dens = pair_density_2d(field, u, r)
        values[i] = est * dens * k
        total += w * values[i]
        se_sq += (w * dens * k * se) ** 2
    coarse_kernel = rect_radial_kernel(a, b, coarse_nodes)
    coarse_total = 0.0
    for j, (r, w, k) in enumerate(zip(coarse_nodes, coarse_weights, coarse_kernel)):
        est, _, _ = inner_fn(r, substream(seed, 10_000 + j))
        coarse_total += w * est * pair_density_2d(field, u, r) * k
    quad_err = abs(total - coarse_total)
    return total, math.sqrt(se_sq), quad_err, (nodes, values)


def second_moment_2d_zero(
    field: IsotropicFieldModel,
    u,
    rect,
    mc: InnerMCConfig = InnerMCConfig(),
    seed: int = 0,
    n_log: int = 12,
    n_lin: int = 12,
    gl_order: int = 4,
    return_trace: bool = False,
):
    """Second factorial moment E[N(u,S)(N(u,S) - 1)] of root counts on a rectangle.

    Reduces the double set integral to one radial integral against the
    rectangle's set-covariance kernel; the conditional Jacobian moment
    A(r, u) is estimated per radial node by antithetic MC with reported
    standard error (folded into ``inner_mc_se``).
    """
    d = field.domain_dim
    if field.codomain_dim != d or d != 2:
        raise ValueError("root-count moment requires a square field with d = 2")
    u = np.broadcast_to(np.asarray(u, dtype=float), (d,))

    def inner(r, rng):
        return conditional_det_product(field, u, r, rng, mc)

    total, inner_se, quad_err, trace = _radial_moment_2d(
        field, u, rect, inner, mc, seed, n_log, n_lin, gl_order
    )
    mean = rice_mean_roots_2d(field, u, rect)
    report = MomentReport(
        mean=mean,
        second_factorial=total,
        second_moment=total + mean,
        quad_error=quad_err,
        inner_mc_se=inner_se,
    )
    return (report, trace) if return_trace else report


def rice_mean_roots_2d(field: IsotropicFieldModel, u, rect) -> float:
    """E[N(u, S)] = |S| p_X(u) E|det X'|.

    With independent isotropic coordinates the Jacobian rows are
    independent N(0, -2 rho_i'(0) I_2) vectors, so E|det X'| =
    prod_i sqrt(-2 rho_i'(0)) * E|det G| with G a standard 2x2 Gaussian
    matrix, whose determinant is standard Laplace: E|det G| = 1.
    """
    if field.codomain_dim != 2 or field.domain_dim != 2:
        raise ValueError("requires a square field with d = 2")
    u = np.broadcast_to(np.asarray(u, dtype=float), (2,))
    area = rect[0] * rect[1]
    dens = math.exp(-0.5 * float(u @ u)) / (2.0 * math.pi)
    edet = math.sqrt(field.profiles[0].grad_var() * field.profiles[1].grad_var())
    return area * dens * edet


def rice_mean_length_2d(field: IsotropicFieldModel, u: float, rect) -> float:
    """E[length of the u-level curve in K] = |K| phi(u) E||grad X||."""
    if field.codomain_dim != 1 or field.domain_dim != 2:
        raise ValueError("requires a scalar field on R^2")
    area = rect[0] * rect[1]
    grad_sd = math.sqrt(field.profiles[0].grad_var())
    return area * math.exp(-0.5 * u * u) / SQRT2PI * grad_sd * math.sqrt(math.pi / 2.0)


def length_second_moment_2d_to_1d(
    field: IsotropicFieldModel,
    u: float,
    rect,
    mc: InnerMCConfig = InnerMCConfig(),
    seed: int = 0,
    n_log: int = 12,
    n_lin: int = 12,
    gl_order: int = 4,
    return_trace: bool = False,
):
    """E[(level-curve length in K)^2] for a scalar field on R^2.

    Always finite: the pair density contributes r^{-1} while the radial
    area element contributes r, so the integrand stays bounded near zero.
    ``second_factorial`` mirrors ``second_moment`` here (a continuous
    measure has no factorial structure).
    """
    if field.codomain_dim != 1 or field.domain_dim != 2:
        raise ValueError("level-curve length requires a scalar field on R^2")

    def inner(r, rng):
        return conditional_gradnorm_product(field, float(u), r, rng, mc)

    total, inner_se, quad_err, trace = _radial_moment_2d(
        field, (float(u),), rect, inner, mc, seed, n_log, n_lin, gl_order
    )
    mean = rice_mean_length_2d(field, float(u), rect)
    report = MomentReport(
        mean=mean,
        second_factorial=total,
        second_moment=total,
        quad_error=quad_err,
        inner_mc_se=inner_se,
    )
    return (report, trace) if return_trace else report


# ---------------------------------------------------------------------------
# critical points of a scalar field
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class PlaneWaveField:
    """Degenerate cosine-type scalar field with covariance cos(k . h).

    Finite-dimensional: conditional second-derivative variances vanish,
    so the critical-point condition holds with an identically zero
    integrand.
    """

    k: tuple
    order = 99

    def c_partial(self, h, axes) -> float:
        kv = np.asarray(self.k, dtype=float)
        coef = float(np.prod(kv[list(axes)])) if axes else 1.0
        phase = float(kv @ np.asarray(h, dtype=float))
        cycle = (math.cos(phase), -math.sin(phase), -math.cos(phase), math.sin(phase))
        return coef * cycle[len(axes) % 4]


def _radial_c_partial(profile: RadialProfile, h, axes) -> float:
    """Partial derivative of C(h) = rho(||h||^2) for a multi-index of axes."""
    h = np.asarray(h, dtype=float)
    s = float(h @ h)
    n = len(axes)
    if n == 0:
        return float(profile.value(s))
    d1 = float(profile.deriv(s, 1))
    if n == 1:
        return 2.0 * h[axes[0]] * d1
    d2 = float(profile.deriv(s, 2))
    if n == 2:
        a_, b_ = axes
        return 2.0 * (a_ == b_) * d1 + 4.0 * h[a_] * h[b_] * d2
    d3 = float(profile.deriv(s, 3))
    if n == 3:
        a_, b_, c_ = axes
        sym = (
            (a_ == b_) * h[c_] + (a_ == c_) * h[b_] + (b_ == c_) * h[a_]
        )
        return 4.0 * sym * d2 + 8.0 * h[a_] * h[b_] * h[c_] * d3
    if n == 4:
        a_, b_, c_, e_ = axes
        dd = (
            (a_ == b_) * (c_ == e_) + (a_ == c_) * (b_ == e_) + (a_ == e_) * (b_ == c_)
        )
        dh = (
            (a_ == b_) * h[c_] * h[e_]
            + (a_ == c_) * h[b_] * h[e_]
            + (a_ == e_) * h[b_] * h[c_]
            + (b_ == c_) * h[a_] * h[e_]
            + (b_ == e_) * h[a_] * h[c_]
            + (c_ == e_) * h[a_] * h[b_]
        )
        d4 = float(profile.deriv(s, 4))
        return 4.0 * dd * d2 + 8.0 * dh * d3 + 16.0 * float(np.prod(h[list(axes)])) * d4
    raise NotImplementedError("partial derivatives beyond total order 4")


def _c_partial(profile, h, axes):
    if isinstance(profile, PlaneWaveField):
        return profile.c_partial(h, axes)
    return _radial_c_partial(profile, h, axes)


def critical_sbar2(profile, r: float, displayed_conditioning: bool = False) -> float:
    """max_i Var(Y''_{i,e1}(0) | Y'(0), Y'(r e1)) for a scalar field on R^2.

    The conditioning follows the root-counting analogy (gradient observed
    at both points).  ``displayed_conditioning=True`` switches the second
    observation block to the Hessian at r e1 — the variant some
    statements display — which conditions on strictly more second-order
    information and therefore yields a value that is not comparable
    lag-by-lag; both variants are exposed so the divergence between them
    can be inspected.
    """
    d = 2
    required = 4
    order = getattr(profile, "order", 2)
    if order < required:
        raise NonSmooth(
            f"profile provides derivatives to order {order}, need {required}"
        )
    origin = np.zeros(d)
    at_r = np.array([r, 0.0])
    targets = [(origin, (i, 0)) for i in range(d)]
    observed = [(origin, (a,)) for a in range(d)]
    if displayed_conditioning:
        observed += [(at_r, (0, 0)), (at_r, (0, 1)), (at_r, (1, 1))]
    else:
        observed += [(at_r, (a,)) for a in range(d)]
    variables = targets + observed

    def cov_entry(va, vb):
        (pa, aa), (pb, ab) = va, vb
        sign = -1.0 if len(aa) % 2 else 1.0
        return sign * _c_partial(profile, pb - pa, tuple(aa) + tuple(ab))

    n = len(variables)
    cov = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            cov[i, j] = cov[j, i] = cov_entry(variables[i], variables[j])
    obs_idx = list(range(len(targets), n))
    # eigen-clipped Schur: degenerate fields make the observed block
    # singular with a consistent observation, where jitter alone leaves
    # an O(jitter / eigengap) artifact
    cond_cov = gausscond.schur_conditional_cov(cov, obs_idx)
    return float(max(np.max(np.diag(cond_cov)), 0.0))


def critical_condition(
    profile,
    r_grid=None,
    # k_max 11: below r ~ 2^-12 the Schur complement of the pinned
    # gradient block (eigengap ~ r^2) is no longer resolvable in doubles;
    # zero_tol matches the pseudo-inverse residual of degenerate fields
    config: GemanConfig = GemanConfig(k_min=3, k_max=11, zero_tol=1e-8),
    displayed_conditioning: bool = False,
):
    """Classify int Sbar^2_max(r) / r dr at zero for a scalar field's critical points.

    Returns a GemanReport whose sigma2 and numerator sides both carry the
    Sbar^2_max values (a single integrand drives this condition).
    """
    if r_grid is None:
        ks = np.arange(config.k_min, config.k_max + 1)
        r_grid = 2.0 ** (-ks.astype(float))
    r_grid = np.asarray(sorted(r_grid, reverse=True), dtype=float)
    vals = np.array(
        [critical_sbar2(profile, r, displayed_conditioning) for r in r_grid]
    )
    scale = abs(_c_partial(profile, np.zeros(2), (0, 0, 0, 0)))
    fit = _classify_values(r_grid, vals, config, scale)
    return GemanReport(
        classification=fit.classification,
        alpha=fit.alpha,
        alpha_se=fit.alpha_se,
        lags=r_grid,
        sigma2_values=vals,
        numerator_values=vals,
        sigma2_fit=fit,
        numerator_fit=fit,
        tau2_integral_converges=None,
    )
