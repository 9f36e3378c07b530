"""Spectrogram-level data augmentation: mixup and spectrum masking."""

from __future__ import annotations

import numpy as np

from respkit.errors import ContractError
from respkit.features import Spectrogram

LABEL_CLASSES = 4

# Defaults give roughly 10% occlusion per axis on a log-Mel input.
DEFAULT_MIXUP_ALPHA = 0.4
DEFAULT_TIME_MASKS = 1
DEFAULT_TIME_WIDTH = 100
DEFAULT_FREQ_MASKS = 1
DEFAULT_FREQ_WIDTH = 16


def check_soft_label(y: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (LABEL_CLASSES,):
        raise ContractError(f"soft label must have {LABEL_CLASSES} entries")
    if np.any(y < -tol) or np.any(y > 1 + tol) or abs(y.sum() - 1.0) > tol:
        raise ContractError("soft label entries must lie on the probability simplex")
    return y


def one_hot(label: int) -> np.ndarray:
    y = np.zeros(LABEL_CLASSES)
    y[int(label)] = 1.0
    return y


def mixup_pair(
    x1: Spectrogram,
    y1: np.ndarray,
    x2: Spectrogram,
    y2: np.ndarray,
    lam: float,
) -> tuple[Spectrogram, np.ndarray]:
    """Convex combination of two examples and their soft labels."""
    if x1.kind is not x2.kind:
        raise ContractError("mixup inputs must share the spectrogram kind")
    if not (0.0 <= lam <= 1.0):
        raise ContractError(f"lam must be in [0, 1], got {lam}")
    y1 = check_soft_label(y1)
    y2 = check_soft_label(y2)
    values = lam * x1.values.astype(np.float64) + (1.0 - lam) * x2.values
    return Spectrogram(values, x1.kind), lam * y1 + (1.0 - lam) * y2


def sample_mixup_lam(rng: np.random.Generator, alpha: float = DEFAULT_MIXUP_ALPHA):
    return float(rng.beta(alpha, alpha))


def _apply_masks(values, time_masks, time_width, freq_masks, freq_width, rng):
    """In-place band masking of one 2-D array with its mean value."""
    n_freq, n_time = values.shape
    if time_width < 0 or freq_width < 0:
        raise ContractError("mask widths must be nonnegative")
    if time_width >= n_time or freq_width >= n_freq:
        raise ContractError("mask width must be smaller than the axis length")
    fill = float(values.mean())
    for _ in range(time_masks):
        if time_width > 0:
            t0 = int(rng.integers(0, n_time - time_width + 1))
            values[:, t0 : t0 + time_width] = fill
    for _ in range(freq_masks):
        if freq_width > 0:
            f0 = int(rng.integers(0, n_freq - freq_width + 1))
            values[f0 : f0 + freq_width, :] = fill


def spec_augment(
    x: Spectrogram,
    time_masks: int = DEFAULT_TIME_MASKS,
    time_width: int = DEFAULT_TIME_WIDTH,
    freq_masks: int = DEFAULT_FREQ_MASKS,
    freq_width: int = DEFAULT_FREQ_WIDTH,
    rng_seed: int = 0,
) -> Spectrogram:
    """Mask random time-frame and frequency-bin bands with the mean value.

    The fill is the spectrogram's own mean rather than zero: zero is a
    large log-domain energy, not silence. Deterministic given rng_seed.
    """
    out = x.values.astype(np.float32).copy()
    _apply_masks(
        out, time_masks, time_width, freq_masks, freq_width,
        np.random.default_rng(rng_seed),
    )
    return Spectrogram(out, x.kind)


def default_mask_widths(n_freq: int, n_time: int) -> tuple[int, int]:
    """~10% occlusion per axis, scaled to the spectrogram shape."""
    return max(1, round(0.125 * n_freq)), max(1, round(0.10 * n_time))


def batch_augmenter(
    mixup_alpha: float = DEFAULT_MIXUP_ALPHA,
    time_masks: int = DEFAULT_TIME_MASKS,
    time_width: int | None = None,
    freq_masks: int = DEFAULT_FREQ_MASKS,
    freq_width: int | None = None,
):
    """Batch-level augmentation callable for the training loop.

    Applies mixup against a random in-batch permutation (one Beta(a, a)
    draw per pair), then spectrum masking per sample. All randomness comes
    from the rng the caller passes in, so runs are reproducible.
    """

    def apply(x: np.ndarray, y: np.ndarray, rng: np.random.Generator):
        n = len(x)
        out_x = np.asarray(x, dtype=np.float32).copy()
        out_y = np.asarray(y, dtype=np.float64).copy()
        if mixup_alpha > 0 and n > 1:
            perm = rng.permutation(n)
            lams = rng.beta(mixup_alpha, mixup_alpha, size=n)
            lx = lams[:, None, None]
            out_x = lx * out_x + (1.0 - lx) * out_x[perm]
            out_y = lams[:, None] * out_y + (1.0 - lams[:, None]) * out_y[perm]
        fw, tw = freq_width, time_width
        if fw is None or tw is None:
            dfw, dtw = default_mask_widths(*out_x.shape[1:])
            fw = dfw if fw is None else fw
            tw = dtw if tw is None else tw
        for i in range(n):
            _apply_masks(out_x[i], time_masks, tw, freq_masks, fw, rng)
        return out_x, out_y

    return apply
