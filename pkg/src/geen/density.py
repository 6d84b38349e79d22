"""Gaussian-kernel density estimation in log-space.

Estimators are kernel mixtures over the m points of one observation: the
marginal of the generated latent, pairwise joints of one measurement with
the latent, and the full (k+1)-dimensional joint of all measurements with
the latent. Every evaluation runs through log-sum-exp; raw densities are
never materialized outside of tests.

Bandwidths follow the rule-of-thumb h = w * sigma * n^(-1/5), with the
sample count n taken to be m, the number of points actually entering each
kernel mixture (overridable for sensitivity checks). The latent bandwidth
uses the sample std of the current generated latents and is treated as a
constant under differentiation: the gradient of the loss never flows
through bandwidths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class DegenerateScaleError(ValueError):
    """A sample needed for bandwidth selection has zero spread."""


def gaussian_kernel(u):
    """Standard normal density (2*pi)^(-1/2) * exp(-u^2 / 2)."""
    return np.exp(-0.5 * np.square(u) - LOG_SQRT_2PI)


def log_gaussian_kernel(u):
    return -0.5 * np.square(u) - LOG_SQRT_2PI


def silverman_bandwidth(sigma: float, w: float, n: int) -> float:
    """Rule-of-thumb bandwidth w * sigma * n^(-1/5).

    Raises :class:`DegenerateScaleError` for sigma == 0; the caller decides
    the fallback policy (early training collapse must stay visible).
    """
    if sigma == 0.0:
        raise DegenerateScaleError("zero sample standard deviation")
    if sigma < 0 or not np.isfinite(sigma):
        raise ValueError(f"sigma must be positive and finite, got {sigma}")
    if w <= 0:
        raise ValueError(f"window multiplier must be positive, got {w}")
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    return w * sigma * float(n) ** -0.2


@dataclass(frozen=True)
class BandwidthSpec:
    """Per-measurement bandwidths, the latent bandwidth, and the window w."""

    h: np.ndarray
    h_star: float
    w: float

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64)
        if h.ndim != 1 or h.size < 1:
            raise ValueError("h must be a non-empty vector")
        if not (np.all(np.isfinite(h)) and np.all(h > 0)):
            raise ValueError("all measurement bandwidths must be positive and finite")
        if not (np.isfinite(self.h_star) and self.h_star > 0):
            raise ValueError("latent bandwidth must be positive and finite")
        if not (np.isfinite(self.w) and self.w > 0):
            raise ValueError("window multiplier must be positive and finite")
        h.flags.writeable = False
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "h_star", float(self.h_star))
        object.__setattr__(self, "w", float(self.w))

    @property
    def k(self) -> int:
        return self.h.size


@dataclass(frozen=True)
class KdeContext:
    """One observation's m x k measurement slice, generated latents, bandwidths.

    Immutable; all density operations over a context are pure functions, so
    a context may be evaluated from many threads at once.
    """

    points: np.ndarray
    latents: np.ndarray
    bandwidths: BandwidthSpec

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, order="C")
        lat = np.array(self.latents, dtype=np.float64, order="C")
        if pts.ndim != 2:
            raise ValueError(f"points must be 2-D, got shape {pts.shape}")
        if lat.shape != (pts.shape[0],):
            raise ValueError("latents length must equal points row count")
        if pts.shape[1] != self.bandwidths.k:
            raise ValueError("bandwidth count must equal measurement count")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(lat))):
            raise ValueError("points and latents must be finite")
        pts.flags.writeable = False
        lat.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "latents", lat)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def k(self) -> int:
        return self.points.shape[1]


def context_bandwidths(points, latents, w: float, n: int | None = None) -> BandwidthSpec:
    """Bandwidths for one observation from per-column sample stds (ddof=1).

    `n` in the n^(-1/5) factor defaults to m, the KDE's own sample size.
    Zero spread in any measurement column or in the latents raises
    :class:`DegenerateScaleError`.
    """
    points = np.asarray(points, dtype=np.float64)
    latents = np.asarray(latents, dtype=np.float64)
    m = points.shape[0]
    if m < 2:
        raise ValueError("need at least 2 points to estimate a scale")
    n_eff = m if n is None else int(n)
    sig = points.std(axis=0, ddof=1)
    if np.any(sig == 0.0):
        col = int(np.flatnonzero(sig == 0.0)[0])
        raise DegenerateScaleError(f"measurement column x{col + 1} has zero spread")
    sig_star = latents.std(ddof=1)
    if sig_star == 0.0:
        raise DegenerateScaleError("generated latents have zero spread (collapse)")
    factor = w * float(n_eff) ** -0.2
    return BandwidthSpec(h=factor * sig, h_star=factor * float(sig_star), w=w)


def _logsumexp(a, axis=None):
    a = np.asarray(a)
    amax = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - amax), axis=axis)) + np.squeeze(amax, axis=axis)
    return out


def log_kde_marginal(centers, h: float, x):
    """Log of the kernel mixture (1/m) sum_i K((c_i - x)/h) / h at x.

    Vectorized over x; exponentiating recovers a proper density.
    """
    centers = np.asarray(centers, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    logk = log_gaussian_kernel((centers - x[..., None]) / h) - np.log(h)
    return _logsumexp(logk, axis=-1) - np.log(centers.size)


def log_kde_pair(centers_x, centers_s, h_x: float, h_s: float, x: float, s: float):
    """Log of the product-kernel pair estimator at (x, s)."""
    centers_x = np.asarray(centers_x, dtype=np.float64)
    centers_s = np.asarray(centers_s, dtype=np.float64)
    logk = (
        log_gaussian_kernel((centers_x - x) / h_x)
        + log_gaussian_kernel((centers_s - s) / h_s)
        - np.log(h_x)
        - np.log(h_s)
    )
    return _logsumexp(logk, axis=-1) - np.log(centers_x.size)


def log_kde_full_joint(ctx: KdeContext, point, s: float):
    """Log of the full (k+1)-dimensional joint estimator at (point, s)."""
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (ctx.k,):
        raise ValueError(f"point must have length {ctx.k}, got shape {point.shape}")
    h = ctx.bandwidths.h
    logk = log_gaussian_kernel((ctx.latents - s) / ctx.bandwidths.h_star) - np.log(
        ctx.bandwidths.h_star
    )
    logk = logk + np.sum(
        log_gaussian_kernel((ctx.points - point) / h) - np.log(h), axis=1
    )
    return _logsumexp(logk, axis=-1) - np.log(ctx.m)
