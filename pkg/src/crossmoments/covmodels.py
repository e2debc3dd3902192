"""Stationary unit-variance covariance models and their small-lag machinery.

Every 1D model exposes the covariance r(tau) together with its first two
derivatives, the spectral moments lambda_2 = -r''(0) and lambda_4 = r''''(0),
and two quantities that drive everything downstream:

* ``sigma2(tau)``  -- Var(X'(0) | X(0) = X(tau) = 0)
                      = lambda_2 - r'(tau)^2 / (1 - r(tau)^2),
* ``geman_numerator(tau)`` -- lambda_2 + r''(tau),

both of which are O(tau^2) for smooth models and therefore suffer
catastrophic cancellation when evaluated naively near tau = 0.  Models
implement stable forms (``one_minus_r`` via expm1 / half-angle identities,
and a sixth-order small-lag series for ``sigma2`` where the spectral
moments allow it).

Isotropic field ingredients (radial profiles rho_i of the squared distance,
and the d-coordinate field container) live here as well.
"""

from __future__ import annotations

import dataclasses
import json
import math
from abc import ABC, abstractmethod

import numpy as np
from scipy import special

from .errors import DegenerateLag, InconclusiveTail, NonSmooth

# Below this lag, sigma2 switches to the small-lag series when the model
# has a finite fourth spectral moment (naive arithmetic loses ~tau^-2 digits).
TAU_SERIES_SWITCH = 1e-3

# a lag is degenerate when 1 - r^2 falls below this fraction of its
# small-lag size lambda2 tau^2 (the ratio tends to 1 at zero and to 0 at
# a periodic degeneracy)
DEGENERACY_TOL = 1e-12


def _sigma2_series(lam2, lam4, lam6, tau):
    """Small-lag expansion sigma2 = ((lam4-lam2^2)/4) tau^2 (1 + c1 tau^2).

    The c1 correction requires a finite sixth spectral moment; without it
    the leading term alone is returned (relative error O(tau^{min(2,2nu-4)})).
    """
    lead = 0.25 * (lam4 - lam2 * lam2) * tau * tau
    if lam6 is None or not math.isfinite(lam6):
        return lead
    m = lam2 * lam2 * lam4 / 24.0 - lam4 * lam4 / 36.0 - lam2 * lam6 / 72.0
    c1 = 4.0 * m / (lam2 * (lam4 - lam2 * lam2)) + lam2 / 4.0 + lam4 / (12.0 * lam2)
    return lead * (1.0 + c1 * tau * tau)


class CovarianceModel1D(ABC):
    """A stationary covariance r(tau) with r(0) = 1, r'(0) = 0.

    Subclasses are immutable; all methods are pure functions, safe to call
    from any number of workers.
    """

    kind: str = ""

    #: smallest lag at which direct sigma2 evaluation is trustworthy
    eval_floor: float = 2.0**-48

    #: below this lag sigma2 uses the spectral-moment series (None: never)
    series_floor: float | None = None

    #: whether one_minus_r avoids the 1 - r cancellation (expm1 or
    #: half-angle forms); models without it fall back to series for the
    #: pair determinant as well
    stable_one_minus_r: bool = True

    # --- covariance and derivatives -----------------------------------
    @abstractmethod
    def r(self, tau):
        """Covariance at lag tau (vectorized over numpy arrays)."""

    @abstractmethod
    def r1(self, tau):
        """First derivative r'(tau)."""

    @abstractmethod
    def r2(self, tau):
        """Second derivative r''(tau)."""

    def one_minus_r(self, tau):
        """1 - r(tau), computed without cancellation where possible."""
        return 1.0 - self.r(tau)

    # --- spectral moments ----------------------------------------------
    @property
    @abstractmethod
    def lambda2(self) -> float:
        """Second spectral moment, -r''(0); positive and finite."""

    @property
    @abstractmethod
    def lambda4(self) -> float:
        """Fourth spectral moment; may be math.inf."""

    @property
    def lambda6(self) -> float | None:
        """Sixth spectral moment when known in closed form, else None."""
        return None

    # --- structure ------------------------------------------------------
    @property
    def first_degenerate_lag(self) -> float:
        """Smallest tau > 0 with 1 - r^2(tau) = 0 (inf when none exists)."""
        return math.inf

    def det_pair_var(self, tau):
        """det Var(X(0), X(tau)) = 1 - r^2(tau), evaluated stably."""
        if (
            not self.stable_one_minus_r
            and self.series_floor is not None
            and 0.0 < tau < self.series_floor
        ):
            a, b = self.lambda2, self.lambda4
            return a * tau * tau * (1.0 - (a / 4.0 + b / (12.0 * a)) * tau * tau)
        omr = self.one_minus_r(tau)
        return omr * (1.0 + self.r(tau))

    def _check_lag(self, tau):
        if tau <= 0:
            raise ValueError(f"lag must be positive, got {tau}")
        # at phases tau sqrt(lambda2) below 1e-4 the determinant cannot be
        # resolved in double precision, and no periodic degeneracy (which
        # occurs at full periods) can live there either
        if tau * math.sqrt(self.lambda2) <= 1e-4:
            return
        if self.det_pair_var(tau) < DEGENERACY_TOL * self.lambda2 * tau * tau:
            raise DegenerateLag(
                f"1 - r^2 vanishes at tau = {tau} for model {self.kind!r}"
            )

    def sigma2(self, tau: float) -> float:
        """Conditional variance Var(X'(0) | X(0) = X(tau) = 0)."""
        self._check_lag(tau)
        if self.series_floor is not None and tau < self.series_floor:
            return _sigma2_series(self.lambda2, self.lambda4, self.lambda6, tau)
        omr = self.one_minus_r(tau)
        den = omr * (1.0 + self.r(tau))
        num = self.lambda2 * den - self.r1(tau) ** 2
        return max(num / den, 0.0)

    def geman_numerator(self, tau: float) -> float:
        """lambda_2 + r''(tau), evaluated stably (it is O(tau^2) at zero)."""
        if self.series_floor is not None and 0.0 < tau < self.series_floor:
            val = 0.5 * self.lambda4 * tau * tau
            lam6 = self.lambda6
            if lam6 is not None and math.isfinite(lam6):
                val -= lam6 * tau**4 / 24.0
            return val
        return self.lambda2 + self.r2(tau)

    # --- sampling & serialization ----------------------------------------
    def spectral_draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw frequencies from the one-sided (folded) spectral measure."""
        raise NotImplementedError(f"{self.kind} has no spectral sampler")

    def params(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params()}


@dataclasses.dataclass(frozen=True)
class GaussianExp(CovarianceModel1D):
    """Squared-exponential covariance r(tau) = exp(-tau^2 / (2 scale^2))."""

    scale: float = 1.0
    kind = "gaussian_exp"
    series_floor = TAU_SERIES_SWITCH

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def r(self, tau):
        return np.exp(-0.5 * (np.asarray(tau, dtype=float) / self.scale) ** 2)

    def r1(self, tau):
        tau = np.asarray(tau, dtype=float)
        return -(tau / self.scale**2) * self.r(tau)

    def r2(self, tau):
        tau = np.asarray(tau, dtype=float)
        return (tau**2 / self.scale**4 - 1.0 / self.scale**2) * self.r(tau)

    def one_minus_r(self, tau):
        tau = np.asarray(tau, dtype=float)
        return -np.expm1(-0.5 * (tau / self.scale) ** 2)

    @property
    def lambda2(self):
        return 1.0 / self.scale**2

    @property
    def lambda4(self):
        return 3.0 / self.scale**4

    @property
    def lambda6(self):
        return 15.0 / self.scale**6

    def geman_numerator(self, tau):
        x = 0.5 * (tau / self.scale) ** 2
        return -np.expm1(-x) / self.scale**2 + (tau**2 / self.scale**4) * np.exp(-x)

    def spectral_draw(self, rng, size):
        return np.abs(rng.standard_normal(size)) / self.scale


@dataclasses.dataclass(frozen=True)
class SineCosine(CovarianceModel1D):
    """r(tau) = cos(w tau): the degenerate boundary case lambda4 = lambda2^2.

    The process is xi_1 sin(w t) + xi_2 cos(w t); sigma2 is identically zero
    and 1 - r^2 vanishes at every multiple of pi / w.
    """

    w: float
    kind = "sine_cosine"

    def __post_init__(self):
        if self.w <= 0:
            raise ValueError("angular frequency w must be positive")

    def r(self, tau):
        return np.cos(self.w * np.asarray(tau, dtype=float))

    def r1(self, tau):
        return -self.w * np.sin(self.w * np.asarray(tau, dtype=float))

    def r2(self, tau):
        return -self.w**2 * np.cos(self.w * np.asarray(tau, dtype=float))

    def one_minus_r(self, tau):
        return 2.0 * np.sin(0.5 * self.w * np.asarray(tau, dtype=float)) ** 2

    @property
    def lambda2(self):
        return self.w**2

    @property
    def lambda4(self):
        return self.w**4

    @property
    def lambda6(self):
        return self.w**6

    @property
    def first_degenerate_lag(self):
        return math.pi / self.w

    def sigma2(self, tau):
        self._check_lag(tau)
        return 0.0

    def geman_numerator(self, tau):
        return 2.0 * self.w**2 * np.sin(0.5 * self.w * tau) ** 2

    def spectral_draw(self, rng, size):
        return np.full(size, self.w)


@dataclasses.dataclass(frozen=True)
class MaternLike(CovarianceModel1D):
    """Matern covariance driven by the spectral density C (1+(s l)^2)^(-nu-1/2).

    In closed form r(tau) = 2^(1-nu)/Gamma(nu) (tau/l)^nu K_nu(tau/l).
    lambda2 is finite for nu > 1; lambda4 is finite only for nu > 2, so
    nu in (1, 2] provides smooth models with an infinite fourth moment
    (which still satisfy the small-lag convergence criterion).
    """

    nu: float
    scale: float = 1.0
    kind = "matern"
    stable_one_minus_r = False

    def __post_init__(self):
        if self.nu <= 1:
            raise ValueError("nu must exceed 1 so that lambda2 is finite")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        # direct sigma2 keeps >=4 digits down to ~2^-30 even when lambda4
        # is infinite (the cancellation is O(tau^{2nu-2}) vs O(tau^2))
        object.__setattr__(self, "_cnu", 2.0 ** (1 - self.nu) / special.gamma(self.nu))

    @property
    def series_floor(self):
        # for nu in (2, 3] the leading term alone carries an O(tau^{2nu-4})
        # relative error at the switch; still far better than the direct
        # path, which loses the whole signal there
        return TAU_SERIES_SWITCH if self.nu > 2 else None

    @property
    def eval_floor(self):
        # below nu = 2 there is no small-lag series; direct evaluation is
        # limited by the naive 1 - r cancellation in the Bessel forms
        return 2.0**-48 if self.nu > 2 else 2.0**-14

    def _x(self, tau):
        return np.asarray(tau, dtype=float) / self.scale

    def r(self, tau):
        x = self._x(tau)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.ones_like(x)
        pos = x > 0
        xp = x[pos]
        out[pos] = self._cnu * xp**self.nu * special.kv(self.nu, xp)
        # kv underflows to 0 for large arguments; so does r
        np.nan_to_num(out, copy=False, nan=0.0)
        return float(out[0]) if scalar else out

    def r1(self, tau):
        x = self._x(tau)
        return -self._cnu * x**self.nu * special.kv(self.nu - 1, x) / self.scale

    def r2(self, tau):
        x = self._x(tau)
        val = special.kv(self.nu - 1, x) - x * special.kv(self.nu - 2, x)
        return -self._cnu * x ** (self.nu - 1) * val / self.scale**2

    @property
    def lambda2(self):
        return 1.0 / (2.0 * (self.nu - 1) * self.scale**2)

    @property
    def lambda4(self):
        if self.nu <= 2:
            return math.inf
        return 3.0 / (4.0 * (self.nu - 1) * (self.nu - 2) * self.scale**4)

    @property
    def lambda6(self):
        if self.nu <= 3:
            return None
        return 15.0 / (8.0 * (self.nu - 1) * (self.nu - 2) * (self.nu - 3) * self.scale**6)

    def spectral_draw(self, rng, size):
        t = rng.standard_t(2.0 * self.nu, size)
        return np.abs(t) / (math.sqrt(2.0 * self.nu) * self.scale)


@dataclasses.dataclass(frozen=True)
class LacunaryLog(CovarianceModel1D):
    """Octave-spaced spectral atoms with weights j^(-q) on frequency 2^j.

    The atomic part has sigma2(tau) decaying like a power of 1/|log tau|,
    so the small-lag integral of sigma2(tau)/tau diverges: this is the
    shipped counterexample to second-moment finiteness.  A squared-
    exponential component (weight ``mix``) keeps |r| < 1 strictly away
    from lag zero, removing the periodic degeneracies a pure atomic
    measure would have.

    ``weight_exp`` is the exponent q; q in (1, 2] diverges, with q = 2
    giving exactly the sigma2 ~ 1/|log tau| borderline class and smaller
    q a slower decay (stronger, easier to observe empirically).
    """

    weight_exp: float = 1.1
    levels: int = 200
    mix: float = 0.2
    component_scale: float = 0.5
    kind = "lacunary_log"
    eval_floor = 2.0**-44

    def __post_init__(self):
        if not 1.0 < self.weight_exp:
            raise ValueError("weight_exp must exceed 1 so that lambda2 is finite")
        if not 0.0 < self.mix < 1.0:
            raise ValueError("mix must lie strictly in (0, 1)")
        if self.levels < 8 or self.levels > 1000:
            raise ValueError("levels out of the supported range [8, 1000]")
        j = np.arange(1, self.levels + 1, dtype=float)
        w = j ** (-self.weight_exp) * 4.0 ** (-j)
        p = w / w.sum()
        object.__setattr__(self, "_p", p)
        object.__setattr__(self, "_om", 2.0**j)
        object.__setattr__(self, "_comp", GaussianExp(scale=self.component_scale))

    def atoms(self):
        """(frequencies, weights) of the atomic part, weights summing to 1."""
        return self._om.copy(), self._p.copy()

    @property
    def component_model(self) -> GaussianExp:
        return self._comp

    def _atomic(self, fn, tau):
        tau = np.asarray(tau, dtype=float)
        flat = tau.reshape(-1)
        out = np.empty_like(flat)
        # chunked outer product keeps memory bounded for long lag grids
        step = max(1, 2_000_000 // self._om.size)
        for i in range(0, flat.size, step):
            block = flat[i : i + step, None] * self._om[None, :]
            out[i : i + step] = fn(block) @ self._p
        return out.reshape(tau.shape) if tau.shape else float(out[0])

    def r(self, tau):
        a = self._atomic(np.cos, tau)
        return (1 - self.mix) * a + self.mix * self._comp.r(tau)

    def r1(self, tau):
        a = self._atomic(lambda x: -np.sin(x) * self._om, tau)
        return (1 - self.mix) * a + self.mix * self._comp.r1(tau)

    def r2(self, tau):
        a = self._atomic(lambda x: -np.cos(x) * self._om**2, tau)
        return (1 - self.mix) * a + self.mix * self._comp.r2(tau)

    def one_minus_r(self, tau):
        a = self._atomic(lambda x: 2.0 * np.sin(0.5 * x) ** 2, tau)
        return (1 - self.mix) * a + self.mix * self._comp.one_minus_r(tau)

    @property
    def lambda2(self):
        at = float(np.sum(self._p * self._om**2))
        return (1 - self.mix) * at + self.mix * self._comp.lambda2

    @property
    def lambda4(self):
        at = float(np.sum(self._p * self._om**4))
        return (1 - self.mix) * at + self.mix * self._comp.lambda4

    def geman_numerator(self, tau):
        at = self._atomic(lambda x: 2.0 * np.sin(0.5 * x) ** 2 * self._om**2, tau)
        return (1 - self.mix) * at + self.mix * self._comp.geman_numerator(tau)

    def spectral_draw(self, rng, size):
        out = np.empty(size)
        comp = rng.random(size) < self.mix
        n_comp = int(comp.sum())
        out[comp] = self._comp.spectral_draw(rng, n_comp)
        out[~comp] = rng.choice(self._om, size=size - n_comp, p=self._p)
        return out


class SpectralTable(CovarianceModel1D):
    """Covariance defined by a tabulated one-sided spectral density.

    The density is given on an ascending frequency grid and extended beyond
    the last node by an algebraic tail C lambda^(-p); the tail exponent p
    can be supplied or is fitted on the last decade of the table.  The even
    extension is normalized to integrate to 1 (unit variance).
    """

    kind = "spectral_table"
    eval_floor = 2.0**-16
    #: relative margin around the critical exponent k+1 inside which the
    #: finiteness of lambda_k cannot be decided
    tail_margin = 0.05

    def __init__(self, freqs, values, tail_exponent=None):
        freqs = np.asarray(freqs, dtype=float)
        values = np.asarray(values, dtype=float)
        if freqs.ndim != 1 or freqs.size < 8:
            raise ValueError("need at least 8 grid nodes")
        if np.any(np.diff(freqs) <= 0) or freqs[0] < 0:
            raise ValueError("frequencies must be nonnegative and ascending")
        if np.any(values < 0):
            raise ValueError("spectral density must be nonnegative")
        self._fitted_se = 0.0
        if tail_exponent is None:
            tail_exponent, self._fitted_se = self._fit_tail(freqs, values)
        self.tail_exponent = float(tail_exponent)
        if self.tail_exponent <= 3.0 + self.tail_margin:
            raise InconclusiveTail(
                "tail exponent must exceed 3 for a finite second spectral moment"
            )
        lam_m = freqs[-1]
        c_tail = values[-1] * lam_m**self.tail_exponent
        tail_mass = c_tail * lam_m ** (1 - self.tail_exponent) / (self.tail_exponent - 1)
        mass = 2.0 * (np.trapezoid(values, freqs) + tail_mass)
        self.freqs = freqs
        self.values = values / mass
        self._c_tail = c_tail / mass
        # extended grid (table + 4 decades of algebraic tail) used by the
        # cosine transforms; moments use the exact tail formulas instead
        tail_nodes = lam_m * np.logspace(0, 4, 65)[1:]
        self._grid = np.concatenate([freqs, tail_nodes])
        self._dens = np.concatenate(
            [self.values, self._c_tail * tail_nodes**-self.tail_exponent]
        )
        self._lam2 = self._moment_raw(2)

    @staticmethod
    def _fit_tail(freqs, values):
        lo = freqs[-1] / 10.0
        sel = (freqs >= lo) & (values > 0)
        if sel.sum() < 4:
            raise InconclusiveTail("too few positive nodes in the last decade")
        x = np.log(freqs[sel])
        y = np.log(values[sel])
        A = np.vstack([np.ones_like(x), x]).T
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        dof = max(1, x.size - 2)
        sxx = np.sum((x - x.mean()) ** 2)
        se = math.sqrt(float(resid @ resid) / dof / sxx)
        return -coef[1], se

    @classmethod
    def from_csv(cls, path, tail_exponent=None):
        """Load a two-column CSV (frequency, density)."""
        data = np.loadtxt(path, delimiter=",", comments="#")
        return cls(data[:, 0], data[:, 1], tail_exponent=tail_exponent)

    def _tail_moment(self, k):
        p = self.tail_exponent
        lam_m = self.freqs[-1]
        gap = p - (k + 1)
        margin = max(self.tail_margin, 2.0 * self._fitted_se)
        if gap > margin:
            return self._c_tail * lam_m**-gap / gap
        if gap < -margin:
            return math.inf
        raise InconclusiveTail(
            f"tail exponent {p:.3f} too close to critical {k + 1} "
            f"(se {self._fitted_se:.3f}) to decide lambda_{k}"
        )

    def _moment_raw(self, k):
        body = np.trapezoid(self.freqs**k * self.values, self.freqs)
        return 2.0 * (body + self._tail_moment(k))

    @property
    def lambda2(self):
        return self._lam2

    @property
    def lambda4(self):
        return self._moment_raw(4)

    def _transform(self, weight):
        """2 * integral of weight(lam) * density over the extended grid.

        Trapezoid accuracy is limited by the table's own resolution; the
        oscillatory error beyond the grid is bounded by the local tail mass.
        """
        return 2.0 * float(np.trapezoid(weight(self._grid) * self._dens, self._grid))

    def r(self, tau):
        return 1.0 - self.one_minus_r(tau)

    def one_minus_r(self, tau):
        return self._transform(lambda lam: 2.0 * np.sin(0.5 * lam * tau) ** 2)

    def r1(self, tau):
        return self._transform(lambda lam: -lam * np.sin(lam * tau))

    def r2(self, tau):
        return self.geman_numerator(tau) - self.lambda2

    def geman_numerator(self, tau):
        return self._transform(
            lambda lam: 2.0 * lam**2 * np.sin(0.5 * lam * tau) ** 2
        )

    def spectral_draw(self, rng, size):
        # inverse-CDF on the table, power-law inversion on the tail
        cdf = np.concatenate([[0.0], np.cumsum(np.diff(self.freqs) * 0.5
                             * (self.values[1:] + self.values[:-1]))])
        body_mass = cdf[-1]
        p = self.tail_exponent
        lam_m = self.freqs[-1]
        tail_mass = self._c_tail * lam_m ** (1 - p) / (p - 1)
        total = body_mass + tail_mass
        u = rng.random(size) * total
        out = np.interp(u, cdf, self.freqs)
        in_tail = u > body_mass
        v = rng.random(int(in_tail.sum()))
        out[in_tail] = lam_m * (1.0 - v) ** (-1.0 / (p - 1))
        return out

    def params(self):
        return {
            "freqs": self.freqs.tolist(),
            "values": self.values.tolist(),
            "tail_exponent": self.tail_exponent,
        }


_MODEL_REGISTRY = {
    "gaussian_exp": GaussianExp,
    "sine_cosine": SineCosine,
    "matern": MaternLike,
    "lacunary_log": LacunaryLog,
    "spectral_table": SpectralTable,
}


def model_from_json(obj) -> CovarianceModel1D:
    """Build a model from {"kind": ..., "params": {...}} (dict or JSON str)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("kind")
    if kind not in _MODEL_REGISTRY:
        raise ValueError(f"unknown model kind {kind!r}")
    return _MODEL_REGISTRY[kind](**obj.get("params", {}))


# ---------------------------------------------------------------------------
# module-level operations on 1D models
# ---------------------------------------------------------------------------

def eval_cov(model: CovarianceModel1D, tau: float):
    """Covariance and its first two derivatives at lag tau >= 0."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0:
        return 1.0, 0.0, -model.lambda2
    return float(model.r(tau)), float(model.r1(tau)), float(model.r2(tau))


def spectral_moment(model: CovarianceModel1D, k: int) -> float:
    """Spectral moment lambda_k for k in {2, 4}; math.inf when divergent."""
    if k == 2:
        return model.lambda2
    if k == 4:
        return model.lambda4
    raise ValueError("only k in {2, 4} is supported")


def sigma2(model: CovarianceModel1D, tau: float) -> float:
    """Var(X'(0) | X(0) = X(tau) = 0) = lambda2 - r'^2/(1 - r^2)."""
    return model.sigma2(tau)


def geman_integrands(model: CovarianceModel1D, tau: float):
    """The pair (sigma2(tau)/tau, (lambda2 + r''(tau))/tau).

    By the equivalence of the two small-lag integral tests these share a
    convergence class at zero for every admissible model.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    return model.sigma2(tau) / tau, float(model.geman_numerator(tau)) / tau


# ---------------------------------------------------------------------------
# isotropic fields: radial profiles rho(s), s = squared distance
# ---------------------------------------------------------------------------

class RadialProfile(ABC):
    """A coordinate covariance Cov(X(s), X(t)) = rho(||s - t||^2)."""

    kind: str = ""
    order: int = 2  # derivatives of rho available

    @abstractmethod
    def value(self, s):
        """rho(s)."""

    @abstractmethod
    def deriv(self, s, k: int = 1):
        """k-th derivative of rho at squared distance s."""

    def one_minus_value(self, s):
        return 1.0 - self.value(s)

    def grad_var(self) -> float:
        """Variance of each gradient coordinate, -2 rho'(0)."""
        return -2.0 * float(self.deriv(0.0, 1))

    def line_model(self) -> CovarianceModel1D:
        """The 1D covariance t -> rho(t^2) along any fixed direction."""
        return _RadialLineModel(self)

    def to_json(self):
        return {"kind": self.kind, "params": dataclasses.asdict(self)}


@dataclasses.dataclass(frozen=True)
class GaussianRadial(RadialProfile):
    """rho(s) = exp(-s / (2 scale^2)): all derivatives in closed form."""

    scale: float = 1.0
    kind = "gaussian"
    order = 99

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def value(self, s):
        return np.exp(-0.5 * np.asarray(s, dtype=float) / self.scale**2)

    def deriv(self, s, k=1):
        return (-0.5 / self.scale**2) ** k * self.value(s)

    def one_minus_value(self, s):
        return -np.expm1(-0.5 * np.asarray(s, dtype=float) / self.scale**2)


@dataclasses.dataclass(frozen=True)
class MaternRadial(RadialProfile):
    """Matern coordinate covariance as a function of squared distance.

    Valid isotropic covariance in every dimension; rho has two derivatives
    in s as long as nu > 2 (lambda4 of the line process finite).
    """

    nu: float
    scale: float = 1.0
    kind = "matern"
    order = 2

    def __post_init__(self):
        if self.nu <= 2:
            raise ValueError("nu must exceed 2 for a twice-differentiable profile")
        object.__setattr__(self, "_line", MaternLike(nu=self.nu, scale=self.scale))

    def value(self, s):
        return self._line.r(np.sqrt(np.asarray(s, dtype=float)))

    def deriv(self, s, k=1):
        if k > 2:
            raise NonSmooth("MaternRadial provides rho', rho'' only")
        lam2 = self._line.lambda2
        lam4 = self._line.lambda4
        s = float(s)
        if s < 1e-12:
            # series via the line model's spectral moments
            return -0.5 * lam2 + 0.25 * lam4 * s / 3.0 if k == 1 else lam4 / 12.0
        t = math.sqrt(s)
        m1 = float(self._line.r1(t))
        if k == 1:
            return m1 / (2.0 * t)
        m2 = float(self._line.r2(t))
        return m2 / (4.0 * s) - m1 / (4.0 * s * t)


class _RadialLineModel(CovarianceModel1D):
    """Adapter exposing a radial profile as a 1D covariance model."""

    kind = "radial_line"

    def __init__(self, profile: RadialProfile):
        self.profile = profile
        self.stable_one_minus_r = isinstance(profile, GaussianRadial)

    def r(self, tau):
        return self.profile.value(np.asarray(tau, dtype=float) ** 2)

    def r1(self, tau):
        tau = np.asarray(tau, dtype=float)
        return 2.0 * tau * self.profile.deriv(tau**2, 1)

    def r2(self, tau):
        tau = np.asarray(tau, dtype=float)
        return 2.0 * self.profile.deriv(tau**2, 1) + 4.0 * tau**2 * self.profile.deriv(
            tau**2, 2
        )

    def one_minus_r(self, tau):
        return self.profile.one_minus_value(np.asarray(tau, dtype=float) ** 2)

    @property
    def lambda2(self):
        return self.profile.grad_var()

    @property
    def lambda4(self):
        return 12.0 * float(self.profile.deriv(0.0, 2))

    @property
    def series_floor(self):
        return TAU_SERIES_SWITCH if math.isfinite(self.lambda4) else None

    def params(self):
        return {"profile": self.profile.to_json()}


_PROFILE_REGISTRY = {"gaussian": GaussianRadial, "matern": MaternRadial}


def profile_from_json(obj) -> RadialProfile:
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("kind")
    if kind not in _PROFILE_REGISTRY:
        raise ValueError(f"unknown profile kind {kind!r}")
    return _PROFILE_REGISTRY[kind](**obj.get("params", {}))


@dataclasses.dataclass(frozen=True)
class IsotropicFieldModel:
    """A field R^D -> R^d with independent isotropic coordinates.

    ``profiles`` holds one radial profile per output coordinate (d of
    them); ``domain_dim`` is D.  The square case d = D covers root
    counting; d = 1 < D covers level-set measures.
    """

    profiles: tuple
    domain_dim: int | None = None

    def __post_init__(self):
        profiles = tuple(self.profiles)
        object.__setattr__(self, "profiles", profiles)
        if self.domain_dim is None:
            object.__setattr__(self, "domain_dim", len(profiles))
        if not profiles:
            raise ValueError("need at least one coordinate profile")
        for p in profiles:
            if abs(float(p.value(0.0)) - 1.0) > 1e-12:
                raise ValueError("profiles must be normalized, rho(0) = 1")
            if p.grad_var() <= 0:
                raise ValueError("profiles must have -2 rho'(0) > 0")

    @property
    def codomain_dim(self) -> int:
        return len(self.profiles)

    def to_json(self):
        return {
            "profiles": [p.to_json() for p in self.profiles],
            "domain_dim": self.domain_dim,
        }


def field_from_json(obj) -> IsotropicFieldModel:
    if isinstance(obj, str):
        obj = json.loads(obj)
    profiles = tuple(profile_from_json(p) for p in obj["profiles"])
    return IsotropicFieldModel(profiles=profiles, domain_dim=obj.get("domain_dim"))
