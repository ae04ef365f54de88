"""Softened softmax, the scaled KL / CE distillation losses, and their derivatives.

Single-sample functions accept a logit vector of shape ``(m,)`` and return a
float; given a batch ``(n, m)`` they return one value per sample. ``alpha``
may be an array that broadcasts against the batch axes (e.g. shape
``(g, 1, 1)`` to sweep g scales at once). Natural logarithms throughout.

Notation used in comments: ``u = alpha * z / T`` are the scaled logits, and
``wmean(alpha) = sum_k softmax(u)_k z_k`` is the probability-weighted mean
logit, which is increasing in ``alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import EntropyController, Mode, PathParams


def _as_logits(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim < 1 or z.shape[-1] < 2:
        raise ValueError(f"logits must have shape (..., m) with m >= 2, got {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("non-finite logits")
    return z


def _check_scales(temperature, alpha):
    if not np.all(np.asarray(temperature) > 0):
        raise ValueError(f"temperature must be positive, got {temperature}")
    if not np.all(np.asarray(alpha) > 0):
        raise ValueError(f"alpha must be positive, got {alpha}")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _log_softmax(u: np.ndarray) -> np.ndarray:
    u = u - u.max(axis=-1, keepdims=True)
    return u - np.log(np.exp(u).sum(axis=-1, keepdims=True))


def _softmax(u: np.ndarray) -> np.ndarray:
    e = np.exp(u - u.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def is_degenerate(z) -> np.ndarray | bool:
    """True where all logits of a sample are equal; the entropy theory excludes these."""
    z = _as_logits(z)
    return _out(np.ptp(z, axis=-1) == 0)


def soften(z, temperature: float = 1.0, alpha: float = 1.0) -> np.ndarray:
    """softmax(alpha * z / temperature) along the last axis."""
    z = _as_logits(z)
    _check_scales(temperature, alpha)
    return _softmax(alpha * z / temperature)


def log_soften(z, temperature: float = 1.0, alpha: float = 1.0) -> np.ndarray:
    z = _as_logits(z)
    _check_scales(temperature, alpha)
    return _log_softmax(alpha * z / temperature)


def output_entropy(z, temperature: float = 1.0, alpha: float = 1.0):
    """Shannon entropy (nats) of the softened distribution; lies in [0, ln m]."""
    logp = log_soften(z, temperature, alpha)
    return _out(-(np.exp(logp) * logp).sum(axis=-1))


def weighted_mean(z, temperature: float = 1.0, alpha: float = 1.0):
    """sum_k p_k z_k under the softened distribution."""
    z = _as_logits(z)
    return _out((soften(z, temperature, alpha) * z).sum(axis=-1))


def weighted_mean_slope(z, temperature: float = 1.0, alpha: float = 1.0):
    """d/dalpha of :func:`weighted_mean`: the softened variance of z divided by T.

    Equals (1/2T) sum_ij (z_i - z_j)^2 p_i p_j, which is positive for
    non-degenerate logits.
    """
    z = _as_logits(z)
    p = soften(z, temperature, alpha)
    mu = (p * z).sum(axis=-1, keepdims=True)
    return _out((p * (z - mu) ** 2).sum(axis=-1) / temperature)


def _labels(labels, z: np.ndarray) -> np.ndarray:
    k = np.asarray(labels)
    if not np.issubdtype(k.dtype, np.integer):
        if not np.all(k == np.round(k)):
            raise ValueError("labels must be integers")
        k = k.astype(np.int64)
    expected = z.shape[:-1]
    if k.shape != expected:
        raise ValueError(f"labels have shape {k.shape}, expected {expected}")
    m = z.shape[-1]
    if np.any(k < 0) or np.any(k >= m):
        raise ValueError(f"label out of range [0, {m})")
    return k


def _pick(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    k = np.broadcast_to(k, a.shape[:-1])
    return np.take_along_axis(a, k[..., None], axis=-1)[..., 0]


def cross_entropy_loss(z_s, label, alpha: float = 1.0):
    """-log softmax(alpha * z_s)[label]; never temperature-softened."""
    z = _as_logits(z_s)
    k = _labels(label, z)
    return _out(-_pick(log_soften(z, 1.0, alpha), k))


def kl_loss(z_s, z_t, temperature: float, alpha: float = 1.0):
    """T^2 * KL(p_t || p_s) with p_t = soften(z_t, T) and p_s = soften(z_s, T, alpha).

    ``alpha`` scales the student only.
    """
    return _out(_kl_terms(z_s, z_t, temperature, alpha, 1.0)[0])


def grad_alpha_kl_true(z_s, z_t, temperature: float, alpha: float = 1.0):
    """Exact d kl_loss / d alpha = T * (wmean(alpha) - sum_j p_t,j z_s,j)."""
    return _out(_kl_terms(z_s, z_t, temperature, alpha, 1.0)[2])


def grad_alpha_kl_paper(z_s, z_t, temperature: float, alpha: float = 1.0):
    """T * sum_j p_t,j^2 (wmean(alpha) - z_s,j).

    This carries an extra teacher-probability factor relative to the exact
    derivative. It has the same sign structure (increasing in alpha, same
    limit signs) and is kept for landscape analysis only; training uses
    :func:`grad_alpha_kl_true`.
    """
    zs, zt = _pair(z_s, z_t)
    _check_scales(temperature, alpha)
    ps = _softmax(alpha * zs / temperature)
    pt2 = _softmax(zt / temperature) ** 2
    # sum_j pt2_j (sum_k ps_k zs_k - zs_j) == sum_j pt2_j sum_k ps_k (zs_k - zs_j)
    wm = (ps * zs).sum(axis=-1, keepdims=True)
    return _out(temperature * (pt2 * (wm - zs)).sum(axis=-1))


def grad_alpha_ce(z_s, label, alpha: float = 1.0):
    """d cross_entropy_loss / d alpha = wmean(alpha) - z_k (at T = 1)."""
    z = _as_logits(z_s)
    k = _labels(label, z)
    _check_scales(1.0, alpha)
    p = _softmax(alpha * z)
    # sum_i p_i (z_i - z_k) keeps the sign exact when p saturates on class k
    return _out((p * (z - _pick(z, k)[..., None])).sum(axis=-1))


def _pair(z_s, z_t):
    zs, zt = _as_logits(z_s), _as_logits(z_t)
    if zs.shape != zt.shape:
        raise ValueError(f"student logits {zs.shape} and teacher logits {zt.shape} differ in shape")
    return zs, zt


def _kl_terms(z_s, z_t, temperature, alpha_s, alpha_t):
    """Per-sample KL-path loss and its partials.

    Returns ``(loss, d/dz_s, d/dalpha_s, d/dalpha_t, d/dT)`` for
    L = T^2 sum_j p_t log(p_t / p_s), p_s = softmax(alpha_s z_s / T),
    p_t = softmax(alpha_t z_t / T).
    """
    zs, zt = _pair(z_s, z_t)
    _check_scales(temperature, alpha_s)
    _check_scales(temperature, alpha_t)
    T = temperature
    us, ut = alpha_s * zs / T, alpha_t * zt / T
    log_ps, log_pt = _log_softmax(us), _log_softmax(ut)
    ps, pt = np.exp(log_ps), np.exp(log_pt)
    gap = log_pt - log_ps
    kl = (pt * gap).sum(axis=-1)
    kl = np.maximum(kl, 0.0)
    loss = T * T * kl

    diff = ps - pt
    d_z = alpha_s * T * diff
    d_alpha_s = T * (diff * zs).sum(axis=-1)
    # teacher side: dKL/du_t,i = p_t,i (gap_i - KL)
    w_t = pt * (gap - kl[..., None])
    d_alpha_t = T * (w_t * zt).sum(axis=-1)
    d_T = 2.0 * T * kl - T * ((diff * us).sum(axis=-1) + (w_t * ut).sum(axis=-1))
    return loss, d_z, d_alpha_s, d_alpha_t, d_T


def _ce_terms(z_s, labels, alpha):
    """Per-sample CE loss with ``(d/dz, d/dalpha)``."""
    z = _as_logits(z_s)
    k = _labels(labels, z)
    _check_scales(1.0, alpha)
    logp = _log_softmax(alpha * z)
    p = np.exp(logp)
    loss = -_pick(logp, k)
    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, k[..., None], 1.0, axis=-1)
    d_z = alpha * (p - onehot)
    d_alpha = (p * (z - _pick(z, k)[..., None])).sum(axis=-1)
    return loss, d_z, d_alpha


@dataclass(frozen=True)
class LossBreakdown:
    """Batch-mean losses. ``total = scale * (beta * loss_kl + loss_ce)``.

    ``scale`` is 1 except in COMPENSATED mode, where it is 1 / alpha^2.
    """

    loss_kl: float
    loss_ce: float
    total: float
    beta: float
    scale: float = 1.0


def distill_objective(
    z_s,
    z_t,
    labels,
    temperature: float,
    beta: float,
    controller: EntropyController | None = None,
    epoch_fraction: float = 0.0,
) -> tuple[LossBreakdown, np.ndarray, dict[str, float], PathParams]:
    """Batch-mean ``beta * KL + CE`` under the controller's per-path scales.

    Returns the loss breakdown, d total / d z_s (already divided by the batch
    size), d total / d each learnable controller field, and the path scales used.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    zs, zt = _pair(z_s, z_t)
    if zs.ndim == 1:
        zs, zt = zs[None], zt[None]
        labels = np.atleast_1d(labels)
    if controller is None:
        controller = EntropyController(Mode.NONE)
    path = controller.path_params(epoch_fraction)
    t_kl = temperature if path.temperature is None else path.temperature
    n = zs.shape[0]

    kl, dz_kl, da_kl, da_t, d_t = _kl_terms(zs, zt, t_kl, path.alpha_kl, path.alpha_teacher)
    ce, dz_ce, da_ce = _ce_terms(zs, labels, path.alpha_ce)
    loss_kl, loss_ce = float(kl.mean()), float(ce.mean())
    raw = beta * loss_kl + loss_ce

    g_alpha_kl = beta * float(da_kl.mean())
    g_alpha_ce = float(da_ce.mean())
    mode = controller.mode
    grads: dict[str, float] = {}
    if mode in (Mode.SHARED, Mode.COMPENSATED):
        grads["alpha"] = g_alpha_kl + g_alpha_ce
    elif mode is Mode.KL_ONLY:
        grads["alpha"] = g_alpha_kl
    elif mode is Mode.CE_ONLY:
        grads["alpha"] = g_alpha_ce
    elif mode is Mode.FULL:
        grads["alpha_kl"] = g_alpha_kl
        grads["alpha_ce"] = g_alpha_ce
    elif mode is Mode.TEACHER:
        grads["alpha"] = beta * float(da_t.mean())
    elif mode is Mode.LEARN_T:
        grads["t_learn"] = beta * float(d_t.mean())

    scale = 1.0
    if mode is Mode.COMPENSATED:
        a = controller.alpha
        scale = 1.0 / (a * a)
        # product rule through the 1/alpha^2 factor
        grads["alpha"] = scale * grads["alpha"] - 2.0 * raw / (a * a * a)

    d_z = scale * (beta * dz_kl + dz_ce) / n
    breakdown = LossBreakdown(loss_kl, loss_ce, scale * raw, beta, scale)
    return breakdown, d_z, grads, path


def total_loss(z_s, z_t, labels, temperature, beta, controller=None, epoch_fraction=0.0) -> LossBreakdown:
    return distill_objective(z_s, z_t, labels, temperature, beta, controller, epoch_fraction)[0]


def grad_logits(z_s, z_t, labels, temperature, beta, controller=None, epoch_fraction=0.0):
    """``(d total / d z_s, d total / d controller fields)`` for the batch-mean objective."""
    _, d_z, grads, _ = distill_objective(z_s, z_t, labels, temperature, beta, controller, epoch_fraction)
    return d_z, grads


def ce_objective(z, labels) -> tuple[float, np.ndarray]:
    """Batch-mean plain cross-entropy and its gradient in the logits."""
    z = np.atleast_2d(_as_logits(z))
    loss, d_z, _ = _ce_terms(z, np.atleast_1d(labels), 1.0)
    return float(loss.mean()), d_z / z.shape[0]


def alpha_sweep(z_s, z_t, labels, temperature: float, alphas) -> np.ndarray:
    """Per-sample losses and alpha-derivatives at many alphas in one pass.

    Returns an array of shape ``(5, len(alphas), n)`` holding, in order,
    kl_loss, cross_entropy_loss, grad_alpha_kl_true, grad_alpha_kl_paper
    and grad_alpha_ce; the same values as calling those functions alpha by
    alpha, up to rounding.

    With s(c) = sum_j exp(c (z_j - z_max)) every quantity is a closed form
    in log s and two exp-weighted sums, so each (alpha, sample, class)
    triple costs one exp.
    """
    zs, zt = _pair(z_s, z_t)
    zs, zt = np.atleast_2d(zs), np.atleast_2d(zt)
    k = _labels(np.atleast_1d(labels), zs)
    a = np.asarray(alphas, dtype=np.float64)[:, None]
    T = temperature
    _check_scales(T, a)

    log_pt = _log_softmax(zt / T)
    pt = np.exp(log_pt)
    neg_h_t = (pt * log_pt).sum(axis=-1)
    teacher_mean = (pt * zs).sum(axis=-1)
    pt2_sum, pt2_mean = (pt * pt).sum(axis=-1), (pt * pt * zs).sum(axis=-1)
    zk = _pick(zs, k)
    z_max = zs.max(axis=-1)
    below = zs - z_max[:, None]
    from_k = zs - zk[:, None]

    # class-major copies so each per-class slice is contiguous
    cols = [np.ascontiguousarray(x.T) for x in (below, zs, from_k)]

    def moments(c):
        shape = (a.shape[0], zs.shape[0])
        s, s_z, s_k = np.zeros(shape), np.zeros(shape), np.zeros(shape)
        e, tmp = np.empty(shape), np.empty(shape)
        for b_j, z_j, k_j in zip(*cols):
            np.multiply(c, b_j, out=e)
            np.exp(e, out=e)
            s += e
            s_z += np.multiply(e, z_j, out=tmp)
            s_k += np.multiply(e, k_j, out=tmp)
        return s, s_z, s_k

    out = np.empty((5, a.shape[0], zs.shape[0]))
    c = a / T
    s, s_z, s_k = moments(c)
    wm = s_z / s
    # sum_j p_t,j log p_s,j = c (teacher_mean - z_max) - log s
    out[0] = T * T * np.maximum(neg_h_t - c * (teacher_mean - z_max) + np.log(s), 0.0)
    out[2] = T * (wm - teacher_mean)
    out[3] = T * (wm * pt2_sum - pt2_mean)
    if T != 1.0:
        s, s_z, s_k = moments(a)
    out[1] = a * (z_max - zk) + np.log(s)
    out[4] = s_k / s
    return out
