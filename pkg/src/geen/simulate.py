"""Synthetic-data generators for the four named experiments.

Each experiment fixes a latent law, four measurement functions, and four
conditional error laws; a sample row is X_j = m_j(x_star) + eps_j. Closed
forms (distribution parameters read as mean/variance for the normal,
location/scale for the Laplace, endpoints for the uniform):

baseline:
    m1(x) = x             eps1 ~ N(0, 1)
    m2(x) = 1/(1+e^x)     eps2 ~ Beta(2, 2) - 1/2
    m3(x) = x^2           eps3 ~ Laplace(0, 1)
    m4(x) = ln(1+e^x)     eps4 ~ Uniform(0, 1) - 1/2
    x_star ~ N(0, 4)

linear_error: as baseline, errors scaling with the latent:
    eps1 ~ N(0, x^2/4), eps3 ~ Laplace(0, |x|/2),
    eps4 ~ Uniform(0, |x|/2) - |x|/4   (eps2 unchanged)

double_error: as baseline with
    eps1 ~ N(0, 4), eps2 ~ Beta(2, 4) - 1/3,
    eps3 ~ Laplace(0, 2), eps4 ~ Uniform(0, 2) - 1

no_normalization: as baseline with m1(x) = x^2 + x, which breaks the
    mean-anchoring of the first measurement (latent sign unidentified).

Every error law is centered: E[eps_j | x_star] = 0. Different error
columns draw from independent child streams of the split seed, so the
measurements are conditionally independent by construction. The
linear_error laws degenerate gracefully to point masses at x_star = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import Dataset, check_seed
from .samplers import beta, laplace, standard_normal

EXPERIMENT_NAMES = ("baseline", "linear_error", "double_error", "no_normalization")


@dataclass(frozen=True)
class SplitSizes:
    n_train: int
    n_val: int
    n_test: int

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("all split sizes must be >= 1")


@dataclass(frozen=True)
class ExperimentSpec:
    """Name plus the measurement maps and conditional error samplers it pins."""

    name: str
    measurement_fns: tuple[Callable, ...]
    error_samplers: tuple[Callable, ...]
    latent_std: float = 2.0

    @property
    def k(self) -> int:
        return len(self.measurement_fns)


def _logistic(x):
    return 1.0 / (1.0 + np.exp(x))


def _softplus(x):
    return np.log1p(np.exp(x))


def _normal_err(std_fn):
    return lambda xs, rng: std_fn(xs) * standard_normal(rng, xs.shape)


def _beta_err(a, b, shift):
    return lambda xs, rng: beta(rng, a, b, xs.size).reshape(xs.shape) - shift


def _laplace_err(scale_fn):
    return lambda xs, rng: laplace(rng, scale_fn(xs), xs.shape)


def _uniform_err(width_fn):
    # Uniform(0, width) - width/2, centered
    return lambda xs, rng: width_fn(xs) * (rng.random(xs.shape) - 0.5)


_BASE_MEASUREMENTS = (lambda x: np.asarray(x, dtype=np.float64), _logistic,
                      lambda x: np.square(x), _softplus)

_EXPERIMENTS = {
    "baseline": ExperimentSpec(
        name="baseline",
        measurement_fns=_BASE_MEASUREMENTS,
        error_samplers=(
            _normal_err(lambda xs: 1.0),
            _beta_err(2, 2, 0.5),
            _laplace_err(lambda xs: 1.0),
            _uniform_err(lambda xs: 1.0),
        ),
    ),
    "linear_error": ExperimentSpec(
        name="linear_error",
        measurement_fns=_BASE_MEASUREMENTS,
        error_samplers=(
            _normal_err(lambda xs: 0.5 * np.abs(xs)),
            _beta_err(2, 2, 0.5),
            _laplace_err(lambda xs: 0.5 * np.abs(xs)),
            _uniform_err(lambda xs: 0.5 * np.abs(xs)),
        ),
    ),
    "double_error": ExperimentSpec(
        name="double_error",
        measurement_fns=_BASE_MEASUREMENTS,
        error_samplers=(
            _normal_err(lambda xs: 2.0),
            _beta_err(2, 4, 1.0 / 3.0),
            _laplace_err(lambda xs: 2.0),
            _uniform_err(lambda xs: 2.0),
        ),
    ),
    "no_normalization": ExperimentSpec(
        name="no_normalization",
        measurement_fns=(lambda x: np.square(x) + x,) + _BASE_MEASUREMENTS[1:],
        error_samplers=(
            _normal_err(lambda xs: 1.0),
            _beta_err(2, 2, 0.5),
            _laplace_err(lambda xs: 1.0),
            _uniform_err(lambda xs: 1.0),
        ),
    ),
}


def get_experiment(name: str) -> ExperimentSpec:
    try:
        return _EXPERIMENTS[name]
    except KeyError:
        raise ValueError(f"unknown experiment {name!r}; choose from {EXPERIMENT_NAMES}")


def latent_draw(spec: ExperimentSpec, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws of the latent variable (N(0, variance 4) for all specs)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.PCG64(check_seed(seed)))
    return spec.latent_std * standard_normal(rng, n)


def measurement(spec: ExperimentSpec, j: int, x_star):
    """Noiseless part m_j(x_star) for measurement j in 1..k."""
    if not 1 <= j <= spec.k:
        raise ValueError(f"j must be in 1..{spec.k}, got {j}")
    return spec.measurement_fns[j - 1](np.asarray(x_star, dtype=np.float64))


def error_draw(spec: ExperimentSpec, j: int, x_star, rng: np.random.Generator):
    """One centered error draw per latent value for measurement j in 1..k."""
    if not 1 <= j <= spec.k:
        raise ValueError(f"j must be in 1..{spec.k}, got {j}")
    xs = np.atleast_1d(np.asarray(x_star, dtype=np.float64))
    out = spec.error_samplers[j - 1](xs, rng)
    return float(out[0]) if np.ndim(x_star) == 0 else out


def _one_split(spec: ExperimentSpec, n: int, stream: np.random.SeedSequence) -> Dataset:
    # one child stream for the latents plus one per error column
    children = stream.spawn(1 + spec.k)
    latent_rng = np.random.Generator(np.random.PCG64(children[0]))
    xs = spec.latent_std * standard_normal(latent_rng, n)
    feats = np.empty((n, spec.k))
    for j in range(1, spec.k + 1):
        rng = np.random.Generator(np.random.PCG64(children[j]))
        feats[:, j - 1] = measurement(spec, j, xs) + error_draw(spec, j, xs, rng)
    return Dataset(feats, xs)


def generate(spec: ExperimentSpec, sizes: SplitSizes, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """Train/validation/test datasets from disjoint sub-streams of one seed."""
    root = np.random.SeedSequence(check_seed(seed))
    train_ss, val_ss, test_ss = root.spawn(3)
    return (
        _one_split(spec, sizes.n_train, train_ss),
        _one_split(spec, sizes.n_val, val_ss),
        _one_split(spec, sizes.n_test, test_ss),
    )
