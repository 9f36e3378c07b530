"""Spectrogram front ends.

Two extractors over 10-second clips at the 32 kHz pipeline rate:

* log-Mel spectrograms of 128 mel bins x 1000 frames (window 1024,
  hop 320, mel range 50 Hz - 14 kHz), and
* Morlet wavelet scalograms of 124 log-spaced bands x 154 frames
  (50 Hz - Nyquist, magnitudes mean-pooled over equal time windows).

Both are log-compressed with a 1e-10 floor so silence stays finite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from respkit.dataio import CYCLE_SECONDS, PIPELINE_RATE, AudioClip
from respkit.errors import ContractError

LOG_FLOOR = 1e-10

LOGMEL_BINS = 128
LOGMEL_FRAMES = 1000
LOGMEL_WINDOW = 1024
LOGMEL_HOP = 320
LOGMEL_FMIN = 50.0
LOGMEL_FMAX = 14000.0

WAVELET_BINS = 124
WAVELET_FRAMES = 154
WAVELET_FMIN = 50.0
MORLET_W0 = 6.0  # quality factor of the mother wavelet


class SpectrogramKind(Enum):
    LOGMEL = "logmel"
    WAVELET = "wavelet"


_EXPECTED_SHAPE = {
    SpectrogramKind.LOGMEL: (LOGMEL_BINS, LOGMEL_FRAMES),
    SpectrogramKind.WAVELET: (WAVELET_BINS, WAVELET_FRAMES),
}


@dataclass
class Spectrogram:
    """2-D [freq_bins x time_frames] array with a kind tag.

    Row 0 is the lowest frequency band for both kinds.
    """

    values: np.ndarray
    kind: SpectrogramKind

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        expected = _EXPECTED_SHAPE[self.kind]
        if self.values.shape != expected:
            raise ContractError(
                f"{self.kind.value} spectrogram must be {expected}, "
                f"got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ContractError("spectrogram contains non-finite values")

    @property
    def freq_bins(self) -> int:
        return self.values.shape[0]

    @property
    def time_frames(self) -> int:
        return self.values.shape[1]


def _check_clip(clip: AudioClip) -> np.ndarray:
    if clip.sample_rate != PIPELINE_RATE:
        raise ContractError(
            f"clip must be at the {PIPELINE_RATE} Hz pipeline rate, "
            f"got {clip.sample_rate}"
        )
    n_expected = int(round(CYCLE_SECONDS * PIPELINE_RATE))
    if len(clip.samples) != n_expected:
        raise ContractError(
            f"clip must be exactly {CYCLE_SECONDS:.0f} s "
            f"({n_expected} samples), got {len(clip.samples)}"
        )
    return np.asarray(clip.samples, dtype=np.float64)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = LOGMEL_BINS,
    n_fft: int = LOGMEL_WINDOW,
    sample_rate: int = PIPELINE_RATE,
    fmin: float = LOGMEL_FMIN,
    fmax: float = LOGMEL_FMAX,
) -> np.ndarray:
    """Triangular mel filters, (n_mels, n_fft//2 + 1)."""
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    fft_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    fb = np.zeros((n_mels, len(fft_freqs)))
    for i in range(n_mels):
        lo, ctr, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (fft_freqs - lo) / (ctr - lo)
        down = (hi - fft_freqs) / (hi - ctr)
        fb[i] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def logmel(clip: AudioClip) -> Spectrogram:
    """Log-compressed mel filterbank energies, 128 x 1000."""
    x = _check_clip(clip)
    half = LOGMEL_WINDOW // 2
    padded = np.pad(x, half, mode="reflect")
    n_frames = 1 + (len(padded) - LOGMEL_WINDOW) // LOGMEL_HOP
    window = np.hanning(LOGMEL_WINDOW)
    starts = np.arange(n_frames) * LOGMEL_HOP
    frames = np.lib.stride_tricks.sliding_window_view(padded, LOGMEL_WINDOW)[starts]
    spectra = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2
    mel = mel_filterbank() @ spectra.T
    if mel.shape[1] >= LOGMEL_FRAMES:
        mel = mel[:, :LOGMEL_FRAMES]
    else:
        pad = np.repeat(mel[:, -1:], LOGMEL_FRAMES - mel.shape[1], axis=1)
        mel = np.concatenate([mel, pad], axis=1)
    return Spectrogram(np.log(mel + LOG_FLOOR), SpectrogramKind.LOGMEL)


def wavelet_center_frequencies(
    n_bins: int = WAVELET_BINS,
    fmin: float = WAVELET_FMIN,
    fmax: float = PIPELINE_RATE / 2,
) -> np.ndarray:
    """Log-spaced band centers, ascending."""
    return np.geomspace(fmin, fmax, n_bins)


def wavelet_scalogram(clip: AudioClip) -> Spectrogram:
    """Log-compressed Morlet scalogram, 124 bands x 154 frames.

    The continuous wavelet transform is evaluated in the frequency domain;
    per band, the analytic output is decimated by spectrum folding (its
    magnitude envelope is smooth, so decimated samples represent the
    frame) and magnitudes are mean-pooled into 154 equal frames.
    """
    x = _check_clip(clip)
    oversample = 16
    m = WAVELET_FRAMES * oversample
    n_fft = -(-len(x) // m) * m  # multiple of m so folding aligns with frames
    spectrum = np.fft.rfft(x, n_fft)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / PIPELINE_RATE)
    out = np.empty((WAVELET_BINS, WAVELET_FRAMES), dtype=np.float64)
    for i, fc in enumerate(wavelet_center_frequencies()):
        sigma = fc / MORLET_W0
        lo = np.searchsorted(freqs, fc - 5.0 * sigma)
        hi = np.searchsorted(freqs, fc + 5.0 * sigma)
        idx = np.arange(lo, hi)
        gain = np.exp(-0.5 * ((freqs[idx] - fc) / sigma) ** 2)
        band = spectrum[idx] * gain
        fold = np.arange(lo, hi) % m
        q = np.bincount(fold, weights=band.real, minlength=m) + 1j * np.bincount(
            fold, weights=band.imag, minlength=m
        )
        envelope = np.abs(np.fft.ifft(q)) * (2.0 * m / n_fft)
        out[i] = envelope.reshape(WAVELET_FRAMES, oversample).mean(axis=1)
    return Spectrogram(np.log(out + LOG_FLOOR), SpectrogramKind.WAVELET)


# -- feature cache ----------------------------------------------------------

CACHE_FORMAT_VERSION = 1


def save_spectrogram(path: str | Path, spec: Spectrogram, meta: dict) -> None:
    """Write one cycle's feature file (.npz: version, values, kind, metadata)."""
    np.savez_compressed(
        str(path),
        version=np.int64(CACHE_FORMAT_VERSION),
        values=spec.values,
        kind=np.str_(spec.kind.value),
        meta=np.str_(json.dumps(meta, sort_keys=True)),
    )


def load_spectrogram(path: str | Path) -> tuple[Spectrogram, dict]:
    with np.load(str(path)) as z:
        version = int(z["version"])
        if version != CACHE_FORMAT_VERSION:
            raise ContractError(
                f"feature cache {path}: version {version} unsupported"
            )
        spec = Spectrogram(z["values"], SpectrogramKind(str(z["kind"])))
        meta = json.loads(str(z["meta"]))
    return spec, meta
