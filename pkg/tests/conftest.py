import numpy as np
import pytest
from scipy.io import wavfile

from respkit.dataio import PIPELINE_RATE, AudioClip
from respkit.features import SpectrogramKind


def make_clip(seed=0, seconds=10.0, rate=PIPELINE_RATE):
    rng = np.random.default_rng(seed)
    n = int(round(seconds * rate))
    return AudioClip(0.1 * rng.standard_normal(n).astype(np.float32), rate)


def blob_spectrogram(cls, rng, shape=(124, 154)):
    """Synthetic class-separable spectrogram: one Gaussian bump per class."""
    h, w = shape
    x = rng.standard_normal(shape) * 0.1
    centers = [(h // 6, w // 5), (3 * h // 4, 4 * w // 5),
               (h // 6, 4 * w // 5), (3 * h // 4, w // 5)]
    r0, c0 = centers[cls]
    rr, cc = np.mgrid[0:h, 0:w]
    x += 3.0 * np.exp(-(((rr - r0) / (h / 15)) ** 2 + ((cc - c0) / (w / 15)) ** 2))
    return x.astype(np.float32)


@pytest.fixture(scope="session")
def mini_dataset(tmp_path_factory):
    """Six short recordings from four patients, ICBHI-style layout."""
    root = tmp_path_factory.mktemp("mini_icbhi")
    data = root / "data"
    data.mkdir()
    rng = np.random.default_rng(7)
    recordings = {
        "101_1b1_Al_sc_Meditron": "train",
        "101_1b2_Pr_sc_Meditron": "train",
        "102_1b1_Ar_sc_Litt3200": "train",
        "103_2b2_Ar_mc_AKGC417L": "test",
        "103_2b3_Tc_mc_AKGC417L": "test",
        "104_1b1_Ll_sc_Litt3200": "test",
    }
    flags = [(0, 0), (1, 0), (0, 1), (1, 1)]
    n_cycles = 0
    for i, stem in enumerate(recordings):
        sr = 4000
        audio = (rng.standard_normal(sr * 6) * 2000).astype(np.int16)
        wavfile.write(data / f"{stem}.wav", sr, audio)
        lines = []
        for j in range(2):
            onset, offset = 3.0 * j, 3.0 * j + 2.5
            c, w = flags[(i + j) % 4]
            lines.append(f"{onset:.2f}\t{offset:.2f}\t{c}\t{w}")
            n_cycles += 1
        (data / f"{stem}.txt").write_text("\n".join(lines) + "\n")
    split = root / "split.txt"
    split.write_text(
        "\n".join(f"{stem}\t{side}" for stem, side in recordings.items()) + "\n"
    )
    return {
        "root": root,
        "data_dir": data,
        "split_file": split,
        "n_cycles": n_cycles,
        "recordings": recordings,
    }
