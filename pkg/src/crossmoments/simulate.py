"""Monte Carlo engine: exact-in-distribution sampling of stationary
Gaussian paths/fields and empirical level-set statistics.

Sampling is exact where the model allows it (trigonometric representations
for the sine-cosine and lacunary models, circulant embedding elsewhere);
the embedding escalates its padding factor x2 up to x16 before either
falling back to a randomized spectral superposition or raising
EmbeddingNotPSD.  Replicates draw from counter-based Philox substreams
keyed by (master seed, replicate index), so results are independent of
evaluation order and worker count.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.fft import next_fast_len

from ._rng import substream
from .covmodels import (
    CovarianceModel1D,
    GaussianExp,
    IsotropicFieldModel,
    LacunaryLog,
    SineCosine,
)
from .errors import CrossmomentsError, EmbeddingNotPSD

# eigenvalues of the embedding no smaller than this fraction of the top
# eigenvalue are treated as rounding noise and clipped to zero
EMBED_EIG_TOL = -1e-9

PAD_FACTORS = (1, 2, 4, 8, 16)


@dataclasses.dataclass
class GridField:
    """Sampled values on a uniform grid.

    1D paths: ``values`` has shape (n,).  2D fields: shape (ny, nx) for a
    scalar layer or (d, ny, nx) for a vector field; ``spacing`` is the
    grid step per axis.
    """

    values: np.ndarray
    spacing: float | tuple
    origin: float | tuple = 0.0

    @property
    def n_points(self):
        return self.values.shape[-1]


def resolve_workers(requested: int | None = None) -> int:
    """Worker count, capped by the CROSSMOMENTS_THREADS environment variable."""
    cap = os.environ.get("CROSSMOMENTS_THREADS")
    cap = int(cap) if cap else (os.cpu_count() or 1)
    if requested is None:
        requested = 1
    return max(1, min(requested, cap))


# ---------------------------------------------------------------------------
# 1D sampling
# ---------------------------------------------------------------------------

def _decay_length(cov, start, tol=1e-12, max_doublings=16):
    """Smallest L (up to ~2%) with |cov| below tol on [L, 4L] (None if never)."""

    def decayed(L):
        window = np.linspace(L, 4 * L, 64)
        return float(np.max(np.abs(cov(window)))) <= tol

    L = max(start, 1e-6)
    for _ in range(max_doublings):
        if decayed(L):
            lo, hi = L / 2.0, L
            for _ in range(6):
                mid = 0.5 * (lo + hi)
                lo, hi = (lo, mid) if decayed(mid) else (mid, hi)
            return hi
        L *= 2.0
    return None


def _base_extension(n, dt, decay):
    """Torus size (cells) placing the wrap kink past the covariance support."""
    m = 2 * (n - 1)
    if decay is not None:
        m = max(m, int(math.ceil(2.0 * decay / dt)), int(math.ceil(((n - 1) * dt + decay) / dt)))
    return next_fast_len(m)


def _embedding_eigs(model, n, dt):
    """Eigenvalues of the circulant embedding.

    The base torus is sized so the wrapped covariance has decayed at the
    half-period kink; if the spectrum still dips below the (relative)
    -1e-9 floor, the padding escalates x2 up to x16 before giving up.
    """
    decay = _decay_length(model.r, (n - 1) * dt)
    base = _base_extension(n, dt, decay)
    last_min = None
    for pad in PAD_FACTORS:
        m = next_fast_len(base * pad)
        k = np.arange(m)
        lag = np.minimum(k, m - k) * dt
        lam = np.fft.fft(model.r(lag)).real
        last_min = float(lam.min())
        if last_min >= EMBED_EIG_TOL * max(float(lam.max()), 1.0):
            return np.clip(lam, 0.0, None), m
    return None, last_min


def _ce_draw_pair(rng, lam, m, n):
    """Two independent samples from one complex FFT over the embedding."""
    z = rng.standard_normal((2, m))
    spec = (z[0] + 1j * z[1]) * np.sqrt(lam / m)
    x = np.fft.fft(spec)
    return x.real[:n], x.imag[:n]


def _spectral_fallback(model, rng, t, n_modes):
    """Randomized superposition sqrt(2/M) sum cos(lam_m t + phi_m)."""
    freqs = model.spectral_draw(rng, n_modes)
    phases = rng.uniform(0.0, 2.0 * math.pi, n_modes)
    out = np.zeros_like(t)
    step = max(1, 4_000_000 // t.size)
    for i in range(0, n_modes, step):
        out += np.cos(np.outer(freqs[i : i + step], t) + phases[i : i + step, None]).sum(axis=0)
    return math.sqrt(2.0 / n_modes) * out


class _Path1DSampler:
    """Per-model sampling strategy for paths on [0, T] with n points."""

    def __init__(self, model, T, n_points, fallback=True, fallback_modes=10_000):
        if n_points < 2:
            raise ValueError("need at least two grid points")
        self.model = model
        self.T = T
        self.n = n_points
        self.dt = T / (n_points - 1)
        self.t = np.linspace(0.0, T, n_points)
        self.mode = None
        self.lam = None
        self.m = None
        self.fallback_modes = fallback_modes
        if isinstance(model, SineCosine):
            self.mode = "sine_cosine"
        elif isinstance(model, LacunaryLog):
            self.mode = "lacunary"
            om, p = model.atoms()
            amp = np.sqrt((1.0 - model.mix) * p)
            keep = amp > 1e-9  # discarded atoms perturb the covariance < 1e-18
            self._amp = amp[keep]
            self._om = om[keep]
            self._comp = _Path1DSampler(model.component_model, T, n_points)
        else:
            lam, m = _embedding_eigs(model, n_points, self.dt)
            if lam is not None:
                self.mode = "circulant"
                self.lam, self.m = lam, m
            elif fallback:
                self.mode = "spectral"
            else:
                raise EmbeddingNotPSD(
                    f"embedding indefinite after x16 padding (min eig {m:.3e})",
                    min_eigenvalue=m,
                )

    def sample_pair(self, rng):
        """Two independent paths from one substream."""
        if self.mode == "sine_cosine":
            w = self.model.w
            c = rng.standard_normal(4)
            return (
                c[0] * np.sin(w * self.t) + c[1] * np.cos(w * self.t),
                c[2] * np.sin(w * self.t) + c[3] * np.cos(w * self.t),
            )
        if self.mode == "lacunary":
            out = []
            comp_pair = self._comp.sample_pair(rng)
            for half in range(2):
                xi = rng.standard_normal((2, self._amp.size)) * self._amp
                trig = xi[0] @ np.cos(np.outer(self._om, self.t)) + xi[1] @ np.sin(
                    np.outer(self._om, self.t)
                )
                out.append(trig + math.sqrt(self.model.mix) * comp_pair[half])
            return tuple(out)
        if self.mode == "circulant":
            return _ce_draw_pair(rng, self.lam, self.m, self.n)
        return (
            _spectral_fallback(self.model, rng, self.t, self.fallback_modes),
            _spectral_fallback(self.model, rng, self.t, self.fallback_modes),
        )

    def sample(self, rng):
        return self.sample_pair(rng)[0]


def sample_process_1d(
    model: CovarianceModel1D,
    T: float,
    n_points: int,
    seed: int,
    fallback: bool = True,
    fallback_modes: int = 10_000,
) -> GridField:
    """One exact-in-distribution path of the model on a uniform grid.

    Circulant embedding (FFT) with padding escalation; trigonometric
    models sample their finite representation directly; the randomized
    spectral superposition is used when the embedding fails and
    ``fallback`` is enabled.
    """
    sampler = _Path1DSampler(model, T, n_points, fallback, fallback_modes)
    values = sampler.sample(substream(seed, 0))
    return GridField(values=values, spacing=sampler.dt)


# ---------------------------------------------------------------------------
# crossing counting
# ---------------------------------------------------------------------------

def count_crossings(path: GridField, u: float, return_locations: bool = False):
    """Sign changes of X - u between adjacent grid points.

    Values exactly equal to u count as positive (fixed tie rule).  The
    count lower-bounds the true crossing count pathwise; the O(dt) bias
    is reported through the two-resolution check in ensembles.  Crossing
    locations are refined by one secant step on the bracketing cell.
    """
    x = np.asarray(path.values, dtype=float)
    pos = x >= u
    flips = pos[1:] != pos[:-1]
    count = int(np.count_nonzero(flips))
    if not return_locations:
        return count
    idx = np.nonzero(flips)[0]
    x0, x1 = x[idx], x[idx + 1]
    frac = (u - x0) / (x1 - x0)
    locs = (idx + frac) * path.spacing + path.origin
    return count, locs


def tangency_screen(path: GridField, u: float, window: float = 0.25) -> int:
    """Cells whose local parabola grazes the level without a sign change.

    Diagnostic for the O(dt) undercount: fits the three-point parabola
    around each interior node and counts non-crossing cells whose
    extremum lands within ``window`` * local amplitude of u.
    """
    x = np.asarray(path.values, dtype=float)
    if x.size < 3:
        return 0
    a = 0.5 * (x[2:] + x[:-2]) - x[1:-1]
    b = 0.5 * (x[2:] - x[:-2])
    center = x[1:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        extremum = center - b * b / (4.0 * a)
    pos = x >= u
    crossing = pos[1:] != pos[:-1]
    quiet = ~(crossing[1:] | crossing[:-1])
    near = np.abs(extremum - u) < window * np.abs(center - u)
    ok = np.isfinite(extremum) & quiet & near & (np.sign(center - u) != np.sign(extremum - u))
    return int(np.count_nonzero(ok))


# ---------------------------------------------------------------------------
# 2D sampling
# ---------------------------------------------------------------------------

def _embedding_eigs_2d(profile, shape, spacing):
    ny, nx = shape
    dy, dx = spacing
    decay = _decay_length(lambda d: profile.value(d * d), max((ny - 1) * dy, (nx - 1) * dx))
    base_y = _base_extension(ny, dy, decay)
    base_x = _base_extension(nx, dx, decay)
    last_min = None
    for pad in PAD_FACTORS:
        my = next_fast_len(base_y * pad)
        mx = next_fast_len(base_x * pad)
        ky = np.minimum(np.arange(my), my - np.arange(my)) * dy
        kx = np.minimum(np.arange(mx), mx - np.arange(mx)) * dx
        s2 = ky[:, None] ** 2 + kx[None, :] ** 2
        lam = np.fft.fft2(profile.value(s2)).real
        last_min = float(lam.min())
        if last_min >= EMBED_EIG_TOL * max(float(lam.max()), 1.0):
            return np.clip(lam, 0.0, None), (my, mx)
    return None, last_min


class _Field2DSampler:
    """Per-field sampler on an (ny, nx) grid over [0,a] x [0,b]."""

    def __init__(self, field: IsotropicFieldModel, rect, resolution):
        if field.domain_dim != 2:
            raise ValueError("2D sampler requires domain dimension 2")
        a, b = rect
        self.field = field
        self.shape = (resolution, resolution)
        self.spacing = (b / (resolution - 1), a / (resolution - 1))
        cache = {}
        self.layers = []
        for prof in field.profiles:
            if prof not in cache:
                lam, m = _embedding_eigs_2d(prof, self.shape, self.spacing)
                if lam is None:
                    raise EmbeddingNotPSD(
                        f"2D embedding indefinite after x16 padding (min eig {m:.3e})",
                        min_eigenvalue=m,
                    )
                cache[prof] = (lam, m)
            self.layers.append(cache[prof])

    def sample(self, rng):
        ny, nx = self.shape
        out = np.empty((len(self.layers), ny, nx))
        i = 0
        while i < len(self.layers):
            lam, (my, mx) = self.layers[i]
            z = rng.standard_normal((2, my, mx))
            spec = (z[0] + 1j * z[1]) * np.sqrt(lam / (my * mx))
            x = np.fft.fft2(spec)
            out[i] = x.real[:ny, :nx]
            # the imaginary part is an independent copy; reuse it when the
            # next layer shares the same embedding
            if i + 1 < len(self.layers) and self.layers[i + 1][0] is lam:
                out[i + 1] = x.imag[:ny, :nx]
                i += 2
            else:
                i += 1
        return out


def sample_field_2d(
    field: IsotropicFieldModel,
    rect,
    resolution: int,
    seed: int,
) -> GridField:
    """One vector-valued field sample: independent stationary layers.

    Layers with identical profiles share a circulant embedding and are
    drawn as the real/imaginary parts of a single transform.
    """
    sampler = _Field2DSampler(field, rect, resolution)
    values = sampler.sample(substream(seed, 0))
    return GridField(values=values, spacing=sampler.spacing)


# ---------------------------------------------------------------------------
# root counting on a 2D vector field
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class RootCount:
    count: int
    locations: np.ndarray
    stalled_cells: int


def count_roots_2d(field: GridField, u, max_iter: int = 40) -> RootCount:
    """Roots of the bilinear interpolant of X - u, cell by cell.

    Candidate cells are those where both components change sign among the
    four corners; candidates are polished by damped Newton iterations on
    the bilinear system from five starts (both roots of a two-root cell
    are reachable), then deduplicated within half a grid step.  Stalled
    cells are counted and reported, never silently dropped.
    """
    vals = np.asarray(field.values, dtype=float)
    if vals.ndim != 3 or vals.shape[0] != 2:
        raise ValueError("need a two-layer vector field")
    u = np.broadcast_to(np.asarray(u, dtype=float), (2,))
    f = vals - u[:, None, None]
    c00 = f[:, :-1, :-1]
    c10 = f[:, :-1, 1:]
    c01 = f[:, 1:, :-1]
    c11 = f[:, 1:, 1:]
    pos = f >= 0
    mixed = np.ones(c00.shape[1:], dtype=bool)
    for comp in range(2):
        s = (
            pos[comp, :-1, :-1].astype(np.int8)
            + pos[comp, :-1, 1:]
            + pos[comp, 1:, :-1]
            + pos[comp, 1:, 1:]
        )
        mixed &= (s > 0) & (s < 4)
    iy, ix = np.nonzero(mixed)
    if iy.size == 0:
        return RootCount(0, np.empty((0, 2)), 0)

    corners = np.stack(
        [c00[:, iy, ix], c10[:, iy, ix], c01[:, iy, ix], c11[:, iy, ix]], axis=-1
    )  # (2, ncells, 4)
    starts = np.array(
        [[0.5, 0.5], [0.15, 0.15], [0.85, 0.15], [0.15, 0.85], [0.85, 0.85]]
    )
    scale = np.maximum(np.abs(corners).max(axis=(0, 2)), 1e-300)
    tol = 1e-11 * scale
    found = []  # (cell_index, xi, eta)
    converged_cells = np.zeros(iy.size, dtype=bool)

    def bilinear(xi, eta):
        # values and Jacobian of both components at local coords
        b = (
            corners[..., 0] * (1 - xi) * (1 - eta)
            + corners[..., 1] * xi * (1 - eta)
            + corners[..., 2] * (1 - xi) * eta
            + corners[..., 3] * xi * eta
        )
        bx = (corners[..., 1] - corners[..., 0]) * (1 - eta) + (
            corners[..., 3] - corners[..., 2]
        ) * eta
        by = (corners[..., 2] - corners[..., 0]) * (1 - xi) + (
            corners[..., 3] - corners[..., 1]
        ) * xi
        return b, bx, by

    for sx, sy in starts:
        xi = np.full(iy.size, sx)
        eta = np.full(iy.size, sy)
        active = np.ones(iy.size, dtype=bool)
        for _ in range(max_iter):
            b, bx, by = bilinear(xi, eta)
            resid = np.abs(b).max(axis=0)
            det = bx[0] * by[1] - by[0] * bx[1]
            ok = active & (np.abs(det) > 1e-300)
            if not ok.any():
                break
            dx = (b[0] * by[1] - b[1] * by[0]) / det
            dy = (bx[0] * b[1] - bx[1] * b[0]) / det
            step = np.clip(np.maximum(np.abs(dx), np.abs(dy)), 0.0, 1.0)
            damp = np.where(step > 0.5, 0.5 / np.maximum(step, 1e-300), 1.0)
            xi = np.where(ok, np.clip(xi - damp * dx, -0.2, 1.2), xi)
            eta = np.where(ok, np.clip(eta - damp * dy, -0.2, 1.2), eta)
            active = ok & (resid > tol)
        b, _, _ = bilinear(xi, eta)
        resid = np.abs(b).max(axis=0)
        good = (
            (resid <= tol)
            & (xi > -1e-9)
            & (xi < 1 + 1e-9)
            & (eta > -1e-9)
            & (eta < 1 + 1e-9)
        )
        converged_cells |= resid <= tol
        for cell in np.nonzero(good)[0]:
            found.append((cell, float(xi[cell]), float(eta[cell])))

    dy, dx = (field.spacing, field.spacing) if np.isscalar(field.spacing) else field.spacing
    pts = np.array(
        [
            ((ix[c] + xi) * dx, (iy[c] + eta) * dy)
            for c, xi, eta in found
        ]
    )
    if pts.size:
        # dedupe within half a grid step
        keep = []
        for p in pts:
            if all(np.hypot(*(p - q)) > 0.5 * min(dx, dy) for q in keep):
                keep.append(p)
        pts = np.array(keep)
    stalled = int(np.count_nonzero(~converged_cells))
    return RootCount(count=len(pts), locations=pts, stalled_cells=stalled)


# ---------------------------------------------------------------------------
# marching squares: level-curve length
# ---------------------------------------------------------------------------

def contour_length(field: GridField, u: float) -> float:
    """Total polyline length of the marching-squares level curve.

    Linear interpolation on cell edges; the two ambiguous saddle cases
    are resolved by the cell-center mean value; values equal to u count
    as positive.
    """
    x = np.asarray(field.values, dtype=float)
    if x.ndim != 2:
        raise ValueError("need a scalar 2D field")
    dy, dx = (field.spacing, field.spacing) if np.isscalar(field.spacing) else field.spacing
    f = x - u
    pos = f >= 0
    case = (
        pos[:-1, :-1].astype(np.int8)
        + 2 * pos[:-1, 1:]
        + 4 * pos[1:, 1:]
        + 8 * pos[1:, :-1]
    )
    iy, ix = np.nonzero((case > 0) & (case < 15))
    if iy.size == 0:
        return 0.0

    v00 = f[iy, ix]
    v10 = f[iy, ix + 1]
    v11 = f[iy + 1, ix + 1]
    v01 = f[iy + 1, ix]

    def cut(a, b):
        return a / (a - b)

    # edge intersection points in local cell coordinates (x right, y up)
    top = np.stack([cut(v00, v10), np.zeros_like(v00)], axis=-1)
    right = np.stack([np.ones_like(v00), cut(v10, v11)], axis=-1)
    bottom = np.stack([cut(v01, v11), np.ones_like(v00)], axis=-1)
    left = np.stack([np.zeros_like(v00), cut(v00, v01)], axis=-1)
    edges = {"t": top, "r": right, "b": bottom, "l": left}

    segments = {
        1: [("l", "t")], 2: [("t", "r")], 3: [("l", "r")], 4: [("r", "b")],
        6: [("t", "b")], 7: [("l", "b")], 8: [("b", "l")], 9: [("t", "b")],
        11: [("r", "b")], 12: [("l", "r")], 13: [("t", "r")], 14: [("l", "t")],
    }

    total = 0.0
    cell_case = case[iy, ix]
    center = 0.25 * (v00 + v10 + v11 + v01)
    for idx in range(iy.size):
        c = int(cell_case[idx])
        if c in (5, 10):
            # saddle: the center sign decides which diagonal the positive
            # region connects, hence how the four cuts pair up
            if (c == 5) == (center[idx] >= 0):
                pairs = [("t", "r"), ("l", "b")]
            else:
                pairs = [("l", "t"), ("r", "b")]
        else:
            pairs = segments[c]
        for e1, e2 in pairs:
            p = edges[e1][idx]
            q = edges[e2][idx]
            total += math.hypot((p[0] - q[0]) * dx, (p[1] - q[1]) * dy)
    return total


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class EnsembleConfig:
    """Replicated simulation experiment; fully determined by (config, seed)."""

    mode: str                      # "crossings" | "roots2d" | "length2d"
    model: object                  # CovarianceModel1D or IsotropicFieldModel
    u: object
    domain: object                 # T (crossings) or (a, b) rectangle
    resolution: int                # grid points along each axis
    replicates: int
    seed: int
    richardson: bool = True
    workers: int | None = None
    fallback: bool = True

    def __post_init__(self):
        if self.replicates <= 0:
            raise ValueError("replicates must be positive")
        if self.mode not in ("crossings", "roots2d", "length2d"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.resolution < 4:
            raise ValueError("resolution too small")


@dataclasses.dataclass
class SimulationEnsemble:
    """Per-replicate level-set statistics plus batch-means aggregates."""

    config: EnsembleConfig
    values: np.ndarray          # count or length per replicate, finest grid
    coarse_values: np.ndarray | None
    stalled: int
    replicate_ids: np.ndarray | None = None
    failures: int = 0
    mean: float = 0.0
    variance: float = 0.0
    se: float = 0.0
    pair_mean: float = 0.0      # mean of N(N-1) for counts, of L^2 for lengths
    pair_se: float = 0.0
    n_batches: int = 0
    richardson_bias: float | None = None

    def __post_init__(self):
        v = self.values.astype(float)
        self.mean = float(v.mean())
        self.variance = float(v.var(ddof=1)) if v.size > 1 else 0.0
        pair = v * (v - 1.0) if self.config.mode != "length2d" else v * v
        self.pair_mean = float(pair.mean())
        nb = min(20, v.size) if v.size < 40 else 20
        self.n_batches = nb
        bm = np.array([b.mean() for b in np.array_split(v, nb)])
        self.se = float(bm.std(ddof=1) / math.sqrt(nb)) if nb > 1 else 0.0
        pm = np.array([b.mean() for b in np.array_split(pair, nb)])
        self.pair_se = float(pm.std(ddof=1) / math.sqrt(nb)) if nb > 1 else 0.0
        if self.coarse_values is not None:
            self.richardson_bias = float(v.mean() - self.coarse_values.mean())

    def to_csv(self, path) -> None:
        """One row per replicate: replicate_id, value, grid step."""
        if self.config.mode == "crossings":
            delta = self.config.domain / (self.config.resolution - 1)
        else:
            delta = self.config.domain[0] / (self.config.resolution - 1)
        ids = self.replicate_ids
        if ids is None:
            ids = np.arange(self.values.size)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("replicate_id,value,delta\n")
            for i, v in zip(ids, self.values):
                fh.write(f"{i},{v!r},{delta!r}\n")

    def aggregate_dict(self) -> dict:
        return {
            "mode": self.config.mode,
            "replicates": int(self.values.size),
            "seed": self.config.seed,
            "resolution": self.config.resolution,
            "mean": self.mean,
            "variance": self.variance,
            "se": self.se,
            "pair_moment_mean": self.pair_mean,
            "pair_moment_se": self.pair_se,
            "n_batches": self.n_batches,
            "richardson_bias": self.richardson_bias,
            "stalled_cells": self.stalled,
            "failed_replicates": self.failures,
        }

    def aggregate_json(self) -> str:
        return json.dumps(self.aggregate_dict(), sort_keys=True, indent=2)


def _replicate_stats(cfg: EnsembleConfig, lo: int, hi: int):
    """Statistics for replicates [lo, hi); pure function of (cfg, range).

    Failed replicates are recorded as NaN and counted; the caller decides
    whether the failure fraction is tolerable.
    """
    fine = np.full(hi - lo, np.nan)
    coarse = np.full(hi - lo, np.nan) if cfg.richardson else None
    stalled = 0
    failures = 0
    if cfg.mode == "crossings":
        dt = cfg.domain / (cfg.resolution - 1)
        sampler = _Path1DSampler(cfg.model, cfg.domain, cfg.resolution, cfg.fallback)
        pair_cache = {}
        for i in range(lo, hi):
            pair_idx, half = divmod(i, 2)
            try:
                if pair_idx not in pair_cache:
                    pair_cache = {pair_idx: sampler.sample_pair(substream(cfg.seed, pair_idx))}
                x = pair_cache[pair_idx][half]
                fine[i - lo] = count_crossings(GridField(x, spacing=dt), cfg.u)
                if cfg.richardson:
                    # same path restricted to the nested half grid
                    coarse[i - lo] = count_crossings(GridField(x[::2], spacing=2 * dt), cfg.u)
            except Exception:
                failures += 1
        return fine, coarse, stalled, failures
    sampler = _Field2DSampler(cfg.model, cfg.domain, cfg.resolution)
    for i in range(lo, hi):
        try:
            sample = sampler.sample(substream(cfg.seed, i))
            if cfg.mode == "roots2d":
                rc = count_roots_2d(GridField(sample, spacing=sampler.spacing), cfg.u)
                fine[i - lo] = rc.count
                stalled += rc.stalled_cells
                if cfg.richardson:
                    rc2 = count_roots_2d(
                        GridField(sample[:, ::2, ::2], spacing=tuple(2 * s for s in sampler.spacing)),
                        cfg.u,
                    )
                    coarse[i - lo] = rc2.count
            else:
                gf = GridField(sample[0], spacing=sampler.spacing)
                fine[i - lo] = contour_length(gf, cfg.u)
                if cfg.richardson:
                    coarse[i - lo] = contour_length(
                        GridField(sample[0, ::2, ::2], spacing=tuple(2 * s for s in sampler.spacing)),
                        cfg.u,
                    )
        except Exception:
            failures += 1
    return fine, coarse, stalled, failures


def run_ensemble(cfg: EnsembleConfig) -> SimulationEnsemble:
    """Run all replicates and aggregate; reproducible for a fixed seed.

    Replicates are spread over a process pool when ``workers > 1``; the
    reduction is by replicate index, so the output is identical for any
    worker count.
    """
    if cfg.mode == "crossings":
        lam2 = cfg.model.lambda2
        dt = cfg.domain / (cfg.resolution - 1)
        if lam2 * dt * dt > 0.01:
            warnings.warn(
                f"grid too coarse: lambda2 * dt^2 = {lam2 * dt * dt:.3g} > 0.01",
                stacklevel=2,
            )
    workers = resolve_workers(cfg.workers)
    n = cfg.replicates
    if workers == 1 or n < 4 * workers:
        fine, coarse, stalled, failures = _replicate_stats(cfg, 0, n)
    else:
        edges = np.linspace(0, n, workers * 2 + 1).astype(int)
        parts = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_replicate_stats, cfg, int(a), int(b))
                for a, b in zip(edges[:-1], edges[1:])
                if b > a
            ]
            parts = [f.result() for f in futures]
        fine = np.concatenate([p[0] for p in parts])
        coarse = np.concatenate([p[1] for p in parts]) if cfg.richardson else None
        stalled = sum(p[2] for p in parts)
        failures = sum(p[3] for p in parts)
    if failures > 0.01 * n:
        raise CrossmomentsError(
            f"{failures} of {n} replicates failed (tolerance is 1%)"
        )
    ok = np.isfinite(fine)
    return SimulationEnsemble(
        config=cfg,
        values=fine[ok],
        coarse_values=coarse[ok] if coarse is not None else None,
        stalled=stalled,
        replicate_ids=np.nonzero(ok)[0],
        failures=failures,
    )
