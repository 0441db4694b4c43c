"""Otsu thresholding on 8-bit histograms."""

from __future__ import annotations

import numpy as np

from hwseg.errors import DomainError


def histogram(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise DomainError(f"expected uint8 image, got {img.dtype}")
    return np.bincount(img.ravel(), minlength=256).astype(np.int64)


def otsu_threshold(img: np.ndarray) -> int:
    """Threshold ``t`` maximizing between-class variance; ink is ``pixel < t``.

    All 256 candidates are scored. Near-ties in the float scan are settled
    with exact integer arithmetic, and the smallest maximizer wins.
    """
    hist = histogram(img)
    if np.count_nonzero(hist) < 2:
        raise DomainError("degenerate histogram: image has a single intensity")
    levels = np.arange(256, dtype=np.int64)
    # class 0 holds levels < t, so prefix sums are shifted by one
    n0 = np.concatenate([[0], np.cumsum(hist)[:-1]])
    s0 = np.concatenate([[0], np.cumsum(hist * levels)[:-1]])
    n = int(hist.sum())
    s = int((hist * levels).sum())
    n1 = n - n0
    s1 = s - s0
    valid = (n0 > 0) & (n1 > 0)
    n0f, n1f = n0.astype(float), n1.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(valid, (s0 * n1f - s1 * n0f) ** 2 / (n0f * n1f), -1.0)
    best = score.max()
    near = np.flatnonzero(score >= best * (1 - 1e-9))

    def exact(t):
        a, b, c, d = int(n0[t]), int(n1[t]), int(s0[t]), int(s1[t])
        return (c * b - d * a) ** 2, a * b

    winner = int(near[0])
    wnum, wden = exact(winner)
    for t in near[1:]:
        num, den = exact(int(t))
        if num * wden > wnum * den:
            winner, wnum, wden = int(t), num, den
    return winner


def between_class_variance(img: np.ndarray, t: int) -> float:
    """Direct ``w0 * w1 * (mu0 - mu1)**2`` for one candidate threshold."""
    px = np.asarray(img, dtype=np.float64).ravel()
    lo = px[px < t]
    hi = px[px >= t]
    if lo.size == 0 or hi.size == 0:
        return 0.0
    w0 = lo.size / px.size
    w1 = hi.size / px.size
    return w0 * w1 * (lo.mean() - hi.mean()) ** 2
