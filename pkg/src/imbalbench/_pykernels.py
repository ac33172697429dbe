"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
The two must agree to within a few ULPs; see ``tests/test_kernels.py``.
"""

import numpy as np

EPS = 1e-12


def softmax_rows(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_grad(logits, labels, class_coef, gamma):
    """Per-sample loss and d(loss)/d(logits) for a batch.

    loss_i = coef[t_i] * (1 - p_t)**gamma * -log(max(p_t, EPS))

    CE, WCE and CB are all ``gamma == 0`` with different per-class
    coefficients; focal loss is unit coefficients with ``gamma > 0``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    class_coef = np.asarray(class_coef, dtype=np.float64)
    p = softmax_rows(logits)
    rows = np.arange(p.shape[0])
    pt = p[rows, labels]
    nll = -np.log(np.maximum(pt, EPS))
    coef = class_coef[labels]

    if gamma == 0.0:
        losses = coef * nll
        scale = coef
    else:
        q = 1.0 - pt
        mod = q ** gamma
        losses = coef * (mod * nll)
        # d/dz_j = [q^g + g * p_t * q^(g-1) * log p_t] (p_j - t_j)
        with np.errstate(divide="ignore", invalid="ignore"):
            extra = gamma * pt * q ** (gamma - 1.0) * (-nll)
        scale = np.where(q > 0.0, coef * (mod - extra), 0.0)

    grad = p.copy()
    grad[rows, labels] -= 1.0
    grad *= scale[:, None]
    return losses, grad


def rotate_nearest(raster, cos_t, sin_t, fill):
    """Rotate an (H, W, K) raster counter-clockwise about its center.

    Nearest-neighbour lookup of the inverse-rotated source pixel; anything
    that maps outside the grid is set to ``fill``.
    """
    raster = np.asarray(raster, dtype=np.float64)
    h, w = raster.shape[:2]
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    x = jj - cx
    y = cy - ii
    sx = x * cos_t + y * sin_t
    sy = y * cos_t - x * sin_t
    src_j = np.floor(sx + cx + 0.5).astype(np.int64)
    src_i = np.floor(cy - sy + 0.5).astype(np.int64)
    inside = (src_i >= 0) & (src_i < h) & (src_j >= 0) & (src_j < w)
    out = np.full_like(raster, fill)
    out[inside] = raster[src_i[inside], src_j[inside]]
    return out


def confusion_counts(preds, labels, n_classes):
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    flat = np.bincount(labels * n_classes + preds,
                       minlength=n_classes * n_classes)
    return flat.reshape(n_classes, n_classes).astype(np.int64)


def paired_cosine(x, y):
    """Row-wise cosine of two (N, D) arrays, NaN where a norm is zero."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dots = np.einsum("ij,ij->i", x, y)
    nx = np.sqrt(np.einsum("ij,ij->i", x, x))
    ny = np.sqrt(np.einsum("ij,ij->i", y, y))
    denom = nx * ny
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(denom > 0.0, dots / denom, np.nan)
    return np.clip(cos, -1.0, 1.0)
