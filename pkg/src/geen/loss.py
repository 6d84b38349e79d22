"""The training objective and its analytic gradient in the latents.

For one observation of m points, the objective is a plug-in KL divergence
between the full joint kernel density and its conditionally-independent
factorization, both built from and evaluated at the observation's own
(point, latent) tuples, plus a squared-difference-of-means penalty that
anchors the generated latents to the first measurement:

    total = kl + lambda * (mean(x1) - mean(latents))^2

The factorization is computed through the identity

    log p_ci = sum_j log pair_j - (k - 1) * log marginal

so only three mixture families are ever needed. For k = 1 the joint and
the factorization coincide term by term and the KL is exactly zero.

Numerics. Every log-kernel weight matrix W[i, l] (center i, evaluation
site l) attains its column maximum on the diagonal, where the distance is
zero, and that diagonal value is one constant per mixture; the log-sum-exp
max-shift is therefore a scalar, the shifted weights are exp(-quadratic/2)
in (0, 1] with ones on the diagonal (so no column sum can vanish), and the
per-mixture constants cancel exactly between the joint and the
factorization. The plug-in KL may be negative at finite m; it is never
clamped.

The gradient with respect to each generated latent accounts for the latent
appearing both as an evaluation coordinate and as a kernel center in every
other point's density; bandwidths are held fixed (stop-gradient). Writing
R[i, l] = E[i, l] / denom[l] for the softmax responsibility of center i at
site l and G[i, l] = (s_i - s_l) / h_star^2, each mixture contributes

    colsum(E * G) / denom - (E * G) @ (1 / denom)

to the gradient of its summed log densities.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .density import KdeContext


@dataclass(frozen=True)
class LossBreakdown:
    """KL term, penalty term (unweighted), their weighted total, and lambda."""

    kl: float
    penalty: float
    lam: float

    @property
    def total(self) -> float:
        return self.kl + self.lam * self.penalty


class _Workspace:
    """Reusable m x m buffers; avoids fresh page-faulting allocations in the
    training hot loop. One instance per (m, k) per thread."""

    def __init__(self, m: int, k: int):
        self.ds = np.empty((m, m))
        self.eb = np.empty((m, m))
        self.ea = [np.empty((m, m)) for _ in range(k)]
        self.e_pairs = [np.empty((m, m)) for _ in range(k)]
        self.e_full = np.empty((m, m))
        self.prod = np.empty((m, m))


_local = threading.local()


def _workspace(m: int, k: int) -> _Workspace:
    cache = getattr(_local, "cache", None)
    if cache is None:
        cache = _local.cache = {}
    ws = cache.get((m, k))
    if ws is None:
        ws = cache[(m, k)] = _Workspace(m, k)
    return ws


def _fill_kernel_matrices(ctx: KdeContext, ws: _Workspace) -> None:
    """Diagonal-shifted kernel weights: ws.eb, ws.ea[j] in (0, 1], ws.ds raw
    latent differences s_i - s_l."""
    s = ctx.latents
    h_star = ctx.bandwidths.h_star
    np.subtract(s[:, None], s[None, :], out=ws.ds)
    np.multiply(ws.ds, -0.5 / (h_star * h_star), out=ws.eb)
    np.multiply(ws.eb, ws.ds, out=ws.eb)
    np.exp(ws.eb, out=ws.eb)
    for j in range(ctx.k):
        v = ctx.points[:, j] / ctx.bandwidths.h[j]
        d = ws.ea[j]
        np.subtract(v[:, None], v[None, :], out=d)
        np.multiply(d, d, out=d)
        np.multiply(d, -0.5, out=d)
        np.exp(d, out=d)


def _fill_mixtures(ctx: KdeContext, ws: _Workspace):
    """Pair and full-joint weight matrices plus all column-sum denominators."""
    k = ctx.k
    denom_marg = ws.eb.sum(axis=0)
    for j in range(k):
        np.multiply(ws.eb, ws.ea[j], out=ws.e_pairs[j])
    np.copyto(ws.e_full, ws.e_pairs[0])
    for j in range(1, k):
        np.multiply(ws.e_full, ws.ea[j], out=ws.e_full)
    denom_pairs = [e.sum(axis=0) for e in ws.e_pairs]
    denom_full = ws.e_full.sum(axis=0)
    return denom_marg, denom_pairs, denom_full


def _kl_from_denoms(denom_marg, denom_pairs, denom_full, k: int) -> float:
    # per-mixture diagonal constants and the 1/m weights cancel between the
    # joint and the factorization, so only the shifted column sums remain
    per_site = np.log(denom_full) + (k - 1) * np.log(denom_marg)
    for d in denom_pairs:
        per_site = per_site - np.log(d)
    return float(per_site.mean())


def _compute(ctx: KdeContext, lam: float, want_grad: bool):
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    ws = _workspace(ctx.m, ctx.k)
    _fill_kernel_matrices(ctx, ws)
    denom_marg, denom_pairs, denom_full = _fill_mixtures(ctx, ws)
    k, m = ctx.k, ctx.m

    x1 = ctx.points[:, 0]
    mean_gap = x1.mean() - ctx.latents.mean()
    breakdown = LossBreakdown(
        kl=_kl_from_denoms(denom_marg, denom_pairs, denom_full, k),
        penalty=float(mean_gap**2),
        lam=float(lam),
    )
    if not want_grad:
        return breakdown, None

    h_star = ctx.bandwidths.h_star
    g = ws.ds
    g /= h_star * h_star  # raw differences are not needed past this point

    def contrib(e, denom):
        np.multiply(e, g, out=ws.prod)
        return ws.prod.sum(axis=0) / denom - ws.prod @ (1.0 / denom)

    d_kl = contrib(ws.e_full, denom_full) + (k - 1) * contrib(ws.eb, denom_marg)
    for e, denom in zip(ws.e_pairs, denom_pairs):
        d_kl = d_kl - contrib(e, denom)
    grad = d_kl / m + (2.0 * lam / m) * -mean_gap
    return breakdown, grad


def kl_hat(ctx: KdeContext) -> float:
    """Plug-in KL divergence between the full joint and its factorization.

    Average over the observation's own m evaluation sites of
    log p_full - [sum_j log pair_j - (k - 1) log marginal]; the 1/m mixture
    normalizations and all kernel constants cancel across the two sides.
    """
    breakdown, _ = _compute(ctx, 0.0, want_grad=False)
    return breakdown.kl


def normalization_penalty(points_x1, latents) -> float:
    """Squared difference of means anchoring latents to the first measurement."""
    points_x1 = np.asarray(points_x1, dtype=np.float64)
    latents = np.asarray(latents, dtype=np.float64)
    if points_x1.shape != latents.shape:
        raise ValueError("points_x1 and latents must have equal length")
    return float((points_x1.mean() - latents.mean()) ** 2)


def total_loss(ctx: KdeContext, lam: float) -> LossBreakdown:
    """KL plus lambda-weighted mean-anchoring penalty on the x1 column."""
    breakdown, _ = _compute(ctx, lam, want_grad=False)
    return breakdown


def total_loss_and_grad(ctx: KdeContext, lam: float) -> tuple[LossBreakdown, np.ndarray]:
    """Loss breakdown and latent gradient in one pass over the mixtures."""
    breakdown, grad = _compute(ctx, lam, want_grad=True)
    return breakdown, grad


def loss_grad_latents(ctx: KdeContext, lam: float) -> np.ndarray:
    """Analytic gradient of the total loss with respect to each latent.

    Bandwidths are frozen at their context values; matches central finite
    differences taken with the bandwidths held fixed.
    """
    _, grad = _compute(ctx, lam, want_grad=True)
    return grad
