"""Exact Gaussian linear conditioning and bivariate absolute moments.

The closed forms of the two-point regression problem live here: with
r = r(tau) and both endpoint values pinned to u,

    E[X'(tau) | X(0) = X(tau) = u] =  r'(tau) u / (1 + r(tau))   (mu1)
    E[X'(0)   | X(0) = X(tau) = u] = -mu1                        (mu2)
    Var(X'   | pins)               = sigma2(tau)

together with the generic Schur-complement ``condition`` used to verify
them, the block conditional covariance of gradients of an isotropic
coordinate, E|Y1 Y2| for a bivariate normal pair, and the Hermite /
product-variance identities.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import linalg
from scipy.special import erf, owens_t
from scipy.stats import norm

from .covmodels import CovarianceModel1D, RadialProfile
from .errors import DegenerateObservation

# jitter ladder applied to the observed block before giving up; pair
# conditioning matrices are nearly singular by design (1 - r^2 ~ tau^2)
JITTER_LADDER = (0.0, 1e-12, 1e-10)


@dataclasses.dataclass
class GaussianConditional:
    """Mean and covariance of a Gaussian block given pinned observations."""

    mean: np.ndarray
    cov: np.ndarray

    def validate(self, psd_tol: float = 1e-10) -> None:
        if self.mean.shape[0] != self.cov.shape[0] or self.cov.shape[0] != self.cov.shape[1]:
            raise ValueError("mean/cov dimension mismatch")
        if not np.allclose(self.cov, self.cov.T, atol=1e-12):
            raise ValueError("covariance not symmetric")
        if np.linalg.eigvalsh(self.cov).min() < -psd_tol:
            raise ValueError("covariance not PSD within tolerance")


def condition(joint_mean, joint_cov, observed_indices, observed_values) -> GaussianConditional:
    """Condition a joint Gaussian vector on a pinned sub-block.

    Parameters
    ----------
    joint_mean : (n,) array
    joint_cov : (n, n) symmetric PSD array
    observed_indices : indices of the observed coordinates
    observed_values : values the observed coordinates are pinned to

    Returns
    -------
    GaussianConditional for the remaining coordinates, in their original
    order.  The covariance is the Schur complement and does not depend on
    ``observed_values``.

    Raises
    ------
    DegenerateObservation
        If the observed block stays singular after the jitter ladder.
    """
    mean = np.asarray(joint_mean, dtype=float)
    cov = np.asarray(joint_cov, dtype=float)
    obs = np.asarray(observed_indices, dtype=int)
    vals = np.asarray(observed_values, dtype=float)
    n = mean.shape[0]
    target = np.setdiff1d(np.arange(n), obs)
    s_oo = cov[np.ix_(obs, obs)]
    s_tt = cov[np.ix_(target, target)]
    s_to = cov[np.ix_(target, obs)]
    for jit in JITTER_LADDER:
        try:
            cf = linalg.cho_factor(s_oo + jit * np.eye(obs.size), lower=True)
        except linalg.LinAlgError:
            continue
        gain = linalg.cho_solve(cf, s_to.T).T  # = S_to S_oo^-1
        cond_mean = mean[target] + gain @ (vals - mean[obs])
        cond_cov = s_tt - gain @ s_to.T
        cond_cov = 0.5 * (cond_cov + cond_cov.T)
        return GaussianConditional(mean=cond_mean, cov=cond_cov)
    raise DegenerateObservation(
        f"observed block singular beyond jitter ladder {JITTER_LADDER}"
    )


def schur_conditional_cov(joint_cov, observed_indices, rel_cut: float = 1e-12) -> np.ndarray:
    """Schur-complement covariance via an eigen-clipped pseudo-inverse.

    Equivalent to ``condition(...).cov`` on well-conditioned observed
    blocks, but exact (instead of jitter-limited) when the observed block
    is singular with a consistent observation, as happens for degenerate
    finite-dimensional fields.
    """
    cov = np.asarray(joint_cov, dtype=float)
    obs = np.asarray(observed_indices, dtype=int)
    target = np.setdiff1d(np.arange(cov.shape[0]), obs)
    s_oo = cov[np.ix_(obs, obs)]
    s_tt = cov[np.ix_(target, target)]
    s_to = cov[np.ix_(target, obs)]
    evals, evecs = np.linalg.eigh(0.5 * (s_oo + s_oo.T))
    keep = evals > rel_cut * max(evals.max(), 1e-300)
    proj = s_to @ evecs[:, keep]
    out = s_tt - (proj / evals[keep]) @ proj.T
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# two-point regression closed forms for a 1D model
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class PairConditional1D:
    """Conditional law of (X'(0), X'(tau)) given X(0) = X(tau) = u."""

    mu1: float       # mean of X'(tau)
    mu2: float       # mean of X'(0); always -mu1
    sigma2: float    # common conditional variance
    rho_cond: float  # conditional correlation of the two derivatives
    det_var: float   # det Var(X(0), X(tau)) = 1 - r^2


def pair_conditional_1d(model: CovarianceModel1D, tau: float, u: float) -> PairConditional1D:
    """Closed-form two-point conditioning for a stationary 1D model."""
    r = float(model.r(tau))
    r1 = float(model.r1(tau))
    det = float(model.det_pair_var(tau))
    s2 = model.sigma2(tau)
    mu1 = r1 * u / (1.0 + r)
    if s2 > 0:
        cross = -float(model.r2(tau)) - r * r1 * r1 / det
        rho = float(np.clip(cross / s2, -1.0, 1.0))
    else:
        rho = 1.0
    return PairConditional1D(mu1=mu1, mu2=-mu1, sigma2=s2, rho_cond=rho, det_var=det)


# ---------------------------------------------------------------------------
# gradient-block conditional covariance for an isotropic coordinate
# ---------------------------------------------------------------------------

def sigma_i2(profile: RadialProfile, r: float) -> float:
    """Conditional variance of the e1-direction derivative at distance r.

    sigma_i^2(r) = -2 rho'(0) - 4 r^2 rho'(r^2)^2 / (1 - rho^2(r^2)).
    """
    line = profile.line_model()
    return line.sigma2(r)


def b_sigma(profile: RadialProfile, r: float) -> float:
    """Conditional covariance of the two e1-direction derivatives.

    -2 rho'(r^2) - 4 r^2 rho''(r^2) - 4 r^2 rho(r^2) rho'(r^2)^2 / (1 - rho^2(r^2)).
    """
    s = r * r
    rho = float(profile.value(s))
    d1 = float(profile.deriv(s, 1))
    d2 = float(profile.deriv(s, 2))
    det = float(profile.one_minus_value(s)) * (1.0 + rho)
    return -2.0 * d1 - 4.0 * s * d2 - 4.0 * s * rho * d1 * d1 / det


def lcov_closed_form(profile: RadialProfile, r: float, dim: int) -> np.ndarray:
    """Conditional covariance of (grad X_i(0), grad X_i(r e1)) given the pins.

    Layout: indices 0..dim-1 are the gradient at 0 (e1 component first),
    indices dim..2dim-1 the gradient at r e1.

    The e1-direction variances are sigma_i^2(r) (the variance, not its
    square root: the only reading consistent with generic conditioning),
    the single conditioning-induced coupling is b_i(r) sigma_i(r) between
    the two e1 components, and all other entries vanish except that each
    transverse component keeps its unconditional variance -2 rho'(0) and
    its unconditional cross-point covariance -2 rho'(r^2).  (Transverse
    derivatives are jointly independent of the pinned values, so
    conditioning cannot remove that cross term; published displays of
    this matrix sometimes omit it.)
    """
    if r <= 0:
        raise ValueError("r must be positive")
    s2 = sigma_i2(profile, r)
    bs = b_sigma(profile, r)
    gv = profile.grad_var()
    trans_cross = -2.0 * float(profile.deriv(r * r, 1))
    out = np.zeros((2 * dim, 2 * dim))
    for j in range(1, dim):
        out[j, j] = gv
        out[dim + j, dim + j] = gv
        out[j, dim + j] = out[dim + j, j] = trans_cross
    out[0, 0] = out[dim, dim] = s2
    out[0, dim] = out[dim, 0] = bs
    return out


def lcov_conditional_means(profile: RadialProfile, r: float, dim: int, u: float):
    """Conditional means of (grad X_i(0), grad X_i(r e1)) given pins at u.

    Only the e1 components are biased (by -/+ r_line'(r) u / (1 + r_line));
    transverse components have exactly zero conditional mean because their
    covariance with both pinned values vanishes.
    """
    line = profile.line_model()
    mu1 = float(line.r1(r)) * u / (1.0 + float(line.r(r)))
    m0 = np.zeros(dim)
    m1 = np.zeros(dim)
    m0[0] = -mu1
    m1[0] = mu1
    return m0, m1


def joint_gradient_cov(profile: RadialProfile, r: float, dim: int) -> np.ndarray:
    """Unconditional covariance of (grad X(0), grad X(r e1), X(0), X(r e1)).

    Used as the generic-conditioning oracle for ``lcov_closed_form``.
    """
    s = r * r
    rho = float(profile.value(s))
    d1 = float(profile.deriv(s, 1))
    d2 = float(profile.deriv(s, 2))
    gv = profile.grad_var()
    n = 2 * dim + 2
    cov = np.zeros((n, n))
    g0 = slice(0, dim)
    g1 = slice(dim, 2 * dim)
    iv0, iv1 = 2 * dim, 2 * dim + 1
    cov[g0, g0] = np.eye(dim) * gv
    cov[g1, g1] = np.eye(dim) * gv
    # Cov(d_a X(0), d_b X(h)) = -d_ab C(h), h = r e1
    cross = -(2.0 * d1 * np.eye(dim))
    cross[0, 0] -= 4.0 * s * d2
    cov[g0, g1] = cross
    cov[g1, g0] = cross.T
    # Cov(d_a X(0), X(h)) = -d_a C(h) = -2 h_a rho'; nonzero for a = 1 only
    cov[0, iv1] = cov[iv1, 0] = -2.0 * r * d1
    cov[dim, iv0] = cov[iv0, dim] = 2.0 * r * d1
    cov[iv0, iv0] = cov[iv1, iv1] = 1.0
    cov[iv0, iv1] = cov[iv1, iv0] = rho
    return cov


# ---------------------------------------------------------------------------
# bivariate absolute moment E|Y1 Y2|
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class BivariateAbsMomentQuery:
    """Unit-variance bivariate normal pair with means m1, m2 and correlation rho."""

    m1: float
    m2: float
    rho: float

    def __post_init__(self):
        if abs(self.rho) > 1.0 + 1e-12:
            raise ValueError("|rho| must not exceed 1")


def _phi(x):
    return norm.pdf(x)


def _Phi(x):
    return norm.cdf(x)


def _Phibar(x):
    return norm.sf(x)


def _bvn_upper(h, k, rho, s):
    """P(X > h, Y > k) for a standard bivariate normal pair."""
    hh, kk = -h, -k  # = Phi2(hh, kk, rho)
    if abs(hh) < 1e-14 and abs(kk) < 1e-14:
        return 0.25 + math.asin(rho) / (2.0 * math.pi)
    if abs(hh) < 1e-14:
        hh = 1e-14
    if abs(kk) < 1e-14:
        kk = 1e-14
    val = 0.5 * (_Phi(hh) + _Phi(kk))
    val -= float(owens_t(hh, (kk - rho * hh) / (hh * s)))
    val -= float(owens_t(kk, (hh - rho * kk) / (kk * s)))
    if hh * kk < 0:
        val -= 0.5
    return val


def _abs_moment_degenerate(m1, m2, rho):
    """E|(m1+Z)(m2 + sign(rho) Z)| for |rho| = 1, via quadratic partial moments."""
    def partial(a, b, c0, c1, c2):
        # int_a^b (c0 + c1 z + c2 z^2) phi(z) dz
        i0 = _Phi(b) - _Phi(a)
        i1 = _phi(a) - _phi(b)
        i2 = i0 - (b * _phi(b) - a * _phi(a))
        return c0 * i0 + c1 * i1 + c2 * i2

    if rho > 0:
        # q(z) = z^2 + (m1+m2) z + m1 m2, negative between its roots
        z1, z2 = sorted((-m1, -m2))
        eq = m1 * m2 + 1.0
        inner = partial(z1, z2, m1 * m2, m1 + m2, 1.0)
        return eq - 2.0 * inner
    # q(z) = -z^2 + (m2-m1) z + m1 m2, positive between its roots
    z1, z2 = sorted((-m1, m2))
    eq = m1 * m2 - 1.0
    inner = partial(z1, z2, m1 * m2, m2 - m1, -1.0)
    return -eq + 2.0 * inner


def _abs_moment_closed(m1, m2, rho):
    s = math.sqrt(max(0.0, (1.0 - rho) * (1.0 + rho)))
    if s < 1e-12:
        return _abs_moment_degenerate(m1, m2, 1.0 if rho > 0 else -1.0)
    h, k = -m1, -m2
    p_upper = _bvn_upper(h, k, rho, s)
    zh = (k - rho * h) / s
    zk = (h - rho * k) / s
    ex = _phi(h) * _Phibar(zh) + rho * _phi(k) * _Phibar(zk)
    ey = _phi(k) * _Phibar(zk) + rho * _phi(h) * _Phibar(zh)
    exy = (
        rho * p_upper
        + rho * h * _phi(h) * _Phibar(zh)
        + rho * k * _phi(k) * _Phibar(zk)
        + s * _phi(k) * _phi(zk)
    )
    a_quad = m1 * m2 * p_upper + m1 * ey + m2 * ex + exy
    b1 = (m2 - rho * m1) * (m1 * _Phi(m1) + _phi(m1)) + rho * (
        (m1 * m1 + 1.0) * _Phi(m1) + m1 * _phi(m1)
    )
    b2 = (m1 - rho * m2) * (m2 * _Phi(m2) + _phi(m2)) + rho * (
        (m2 * m2 + 1.0) * _Phi(m2) + m2 * _phi(m2)
    )
    return 4.0 * a_quad - 2.0 * b1 - 2.0 * b2 + (m1 * m2 + rho)


_HERMGAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _hermgauss(deg):
    if deg not in _HERMGAUSS_CACHE:
        x, w = np.polynomial.hermite.hermgauss(deg)
        _HERMGAUSS_CACHE[deg] = (np.sqrt(2.0) * x, w / math.sqrt(math.pi))
    return _HERMGAUSS_CACHE[deg]


def _abs_moment_hermite(m1, m2, rho, degree):
    """Tensorized Gauss-Hermite evaluation on Y2 = m2 + rho(Y1-m1) + s Z.

    Kept as a cross-check; the kink of |.| limits it to ~1e-3 accuracy,
    so the closed form is the default evaluation path.
    """
    z, w = _hermgauss(degree)
    s = math.sqrt(max(0.0, (1.0 - rho) * (1.0 + rho)))
    y1 = m1 + z[:, None]
    y2 = m2 + rho * z[:, None] + s * z[None, :]
    return float(np.einsum("i,j,ij->", w, w, np.abs(y1 * y2)))


def abs_moment(query: BivariateAbsMomentQuery, method: str = "closed", degree: int = 64) -> float:
    """E|Y1 Y2| for a unit-variance bivariate normal pair.

    ``method="closed"`` evaluates the exact expression (partial moments of
    the truncated pair, bivariate orthant probabilities via Owen's T);
    ``method="hermite"`` uses the tensorized Gauss-Hermite rule of the
    stated degree (64 default, 128 in validation settings).
    """
    m1, m2, rho = float(query.m1), float(query.m2), float(query.rho)
    rho = min(1.0, max(-1.0, rho))
    if method == "closed":
        return _abs_moment_closed(m1, m2, rho)
    if method == "hermite":
        if abs(rho) == 1.0:
            return _abs_moment_degenerate(m1, m2, rho)
        return _abs_moment_hermite(m1, m2, rho, degree)
    raise ValueError(f"unknown method {method!r}")


def conditional_abs_product(model: CovarianceModel1D, tau: float, u: float) -> float:
    """E[|X'(0) X'(tau)|  |  X(0) = X(tau) = u] for a 1D model."""
    pc = pair_conditional_1d(model, tau, u)
    if pc.sigma2 <= 0.0:
        return pc.mu1 * pc.mu1  # degenerate law: |mu2 * mu1|
    sig = math.sqrt(pc.sigma2)
    q = BivariateAbsMomentQuery(m1=pc.mu2 / sig, m2=pc.mu1 / sig, rho=pc.rho_cond)
    return pc.sigma2 * abs_moment(q)


# ---------------------------------------------------------------------------
# Hermite / Mehler utilities (probabilists' convention, H2(y) = y^2 - 1)
# ---------------------------------------------------------------------------

def hermite_e(n: int, y):
    """Probabilists' Hermite polynomial He_n(y)."""
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    return np.polynomial.hermite_e.hermeval(y, coeffs)


def mehler_covariance(i: int, j: int, rho: float) -> float:
    """E[H_i(Y1) H_j(Y2)] = delta_ij rho^i i! for a standard pair."""
    if i < 0 or j < 0:
        raise ValueError("orders must be nonnegative")
    if i != j:
        return 0.0
    return rho**i * math.factorial(i)


def product_variance_lower(rho: float) -> float:
    """The Mehler value 1 + 2 rho^2 = E[(Y1-m1)^2 (Y2-m2)^2].

    Via the chaos decomposition this is a lower bound on
    Var(Y1 Y2) + rho^2 for any means, hence Var(Y1 Y2) >= 1 + rho^2 >= 1:
    the product of a unit-variance pair is never a.s. constant.  (The
    value itself is the second moment of the centered product, which
    exceeds its variance by exactly rho^2.)
    """
    if abs(rho) > 1:
        raise ValueError("|rho| must not exceed 1")
    return 1.0 + 2.0 * rho * rho
