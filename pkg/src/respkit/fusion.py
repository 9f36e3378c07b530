"""Fusion of framework outputs.

Early/middle fusion concatenate embeddings and retrain an MLP head (see
the training module); late fusion multiplies per-class probabilities
across frameworks (scaled by 1/S) and takes the argmax.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from respkit.errors import ContractError

PREDICTION_COLUMNS = ("cycle_id", "p_normal", "p_crackle", "p_wheeze", "p_both")


def concat_embeddings(e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
    """Concatenate two embedding vectors, e1 leading."""
    e1 = np.asarray(e1, dtype=np.float64).ravel()
    e2 = np.asarray(e2, dtype=np.float64).ravel()
    if not (np.all(np.isfinite(e1)) and np.all(np.isfinite(e2))):
        raise ContractError("embeddings must be finite")
    return np.concatenate([e1, e2])


def prod_fusion(prob_sets: list[np.ndarray]) -> np.ndarray:
    """Per-class product of S probability vectors, scaled by 1/S.

    The result is deliberately not renormalized; decisions depend only on
    the argmax.
    """
    if len(prob_sets) == 0:
        raise ContractError("prod_fusion needs at least one probability vector")
    vecs = [np.asarray(p, dtype=np.float64) for p in prob_sets]
    n = vecs[0].shape
    if any(v.shape != n or v.ndim != 1 for v in vecs):
        raise ContractError("all probability vectors must be 1-D of equal length")
    fused = np.ones_like(vecs[0])
    for v in vecs:
        fused = fused * v
    return fused / len(vecs)


def predict_label(fused: np.ndarray) -> int:
    """Index of the maximum entry; ties go to the lowest index."""
    fused = np.asarray(fused, dtype=np.float64)
    if fused.size == 0 or not np.all(np.isfinite(fused)):
        raise ContractError("fused vector must be nonempty and finite")
    return int(np.argmax(fused))


# -- prediction files -------------------------------------------------------


def write_predictions(path: str | Path, probs_by_cycle: dict[str, np.ndarray]) -> None:
    """Write a per-cycle probability CSV (cycle_id, p_normal..p_both)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(PREDICTION_COLUMNS)
        for cycle_id in sorted(probs_by_cycle):
            p = np.asarray(probs_by_cycle[cycle_id], dtype=np.float64)
            writer.writerow([cycle_id] + [f"{v:.10g}" for v in p])


def read_predictions(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != PREDICTION_COLUMNS:
            raise ContractError(f"unexpected prediction header in {path}: {header}")
        return {
            row[0]: np.array([float(v) for v in row[1:]]) for row in reader if row
        }


def fuse_prediction_files(paths: list[str | Path]) -> dict[str, np.ndarray]:
    """PROD-fuse two or more prediction CSVs over identical cycle-id sets."""
    if len(paths) < 2:
        raise ContractError("late fusion needs at least two prediction files")
    sets = [read_predictions(p) for p in paths]
    ids = set(sets[0])
    for p, s in zip(paths[1:], sets[1:]):
        if set(s) != ids:
            raise ContractError(f"cycle-id set of {p} does not match the first file")
    return {cid: prod_fusion([s[cid] for s in sets]) for cid in ids}
