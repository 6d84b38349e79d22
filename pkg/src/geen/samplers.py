"""Pinned distribution samplers built on the raw uniform stream.

numpy guarantees stability of the PCG64 bit stream and of
``Generator.random``, but not of its distribution methods, so every
non-uniform draw here is derived explicitly from uniforms:

- normal: Wichura's AS241 rational approximation of the inverse normal CDF
  (double precision, relative error ~1e-15), one uniform per draw;
- laplace: inverse CDF;
- gamma (shape >= 1): Marsaglia-Tsang squeeze method, boosted by U^(1/a)
  for shape < 1;
- beta: ratio of two gamma draws.

Given the same seed these produce identical samples on every platform and
numpy version.
"""

from __future__ import annotations

import numpy as np

# AS241 PPND16 coefficients (central region |p - 0.5| <= 0.425).
_A = (
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
)
_B = (
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
)
# Intermediate tail (r = sqrt(-log(min(p, 1-p))) <= 5).
_C = (
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
)
_D = (
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
# Far tail (r > 5).
_E = (
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
)
_F = (
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _poly(coeffs, x):
    out = np.full_like(x, coeffs[-1], dtype=np.float64)
    for c in reversed(coeffs[:-1]):
        out = out * x + c
    return out


def norm_ppf(p):
    """Inverse standard normal CDF (AS241), vectorized.

    Valid on the open interval (0, 1); endpoints map to +-inf.
    """
    arr = np.atleast_1d(np.asarray(p, dtype=np.float64))
    q = arr - 0.5
    out = np.empty_like(q)

    central = np.abs(q) <= 0.425
    r = 0.180625 - np.square(q[central])
    out[central] = q[central] * _poly(_A, r) / _poly(_B, r)

    tail = ~central
    if np.any(tail):
        pt = arr[tail]
        r = np.sqrt(-np.log(np.minimum(pt, 1.0 - pt)))
        near = r <= 5.0
        val = np.empty_like(r)
        rn = r[near] - 1.6
        val[near] = _poly(_C, rn) / _poly(_D, rn)
        rf = r[~near] - 5.0
        val[~near] = _poly(_E, rf) / _poly(_F, rf)
        out[tail] = np.where(pt < 0.5, -val, val)
    if np.ndim(p) == 0:
        return float(out[0])
    return out.reshape(np.shape(p))


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """N(0, 1) draws via the inverse CDF of the uniform stream."""
    u = rng.random(size)
    # rng.random() is in [0, 1); shift the rare exact zero off the endpoint
    u[u == 0.0] = 0.5 / 2**53
    return norm_ppf(u)


def laplace(rng: np.random.Generator, scale, size) -> np.ndarray:
    """Laplace(0, scale) via the inverse CDF; scale may be a vector."""
    u = rng.random(size) - 0.5
    mag = np.maximum(1.0 - 2.0 * np.abs(u), 1.0 / 2**53)
    return -np.sign(u) * np.asarray(scale) * np.log(mag)


def _gamma_ge1(rng: np.random.Generator, shape: float, size: int) -> np.ndarray:
    """Gamma(shape, 1) for shape >= 1 by the Marsaglia-Tsang method."""
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(size)
    filled = 0
    while filled < size:
        n = size - filled
        x = standard_normal(rng, n)
        v = (1.0 + c * x) ** 3
        u = rng.random(n)
        ok = v > 0
        x2 = np.square(x)
        accept = ok & (
            (u < 1.0 - 0.0331 * np.square(x2))
            | (np.log(np.maximum(u, 1e-320)) < 0.5 * x2 + d * (1.0 - v + np.log(np.where(ok, v, 1.0))))
        )
        good = d * v[accept]
        out[filled : filled + good.size] = good
        filled += good.size
    return out


def gamma(rng: np.random.Generator, shape: float, size: int) -> np.ndarray:
    """Gamma(shape, 1) draws; shapes below 1 use the U^(1/shape) boost."""
    if shape <= 0:
        raise ValueError(f"shape must be positive, got {shape}")
    if shape >= 1.0:
        return _gamma_ge1(rng, shape, size)
    g = _gamma_ge1(rng, shape + 1.0, size)
    u = rng.random(size)
    u[u == 0.0] = 0.5 / 2**53
    return g * u ** (1.0 / shape)


def beta(rng: np.random.Generator, a: float, b: float, size: int) -> np.ndarray:
    """Beta(a, b) as G_a / (G_a + G_b) with independent gamma draws."""
    ga = gamma(rng, a, size)
    gb = gamma(rng, b, size)
    return ga / (ga + gb)
