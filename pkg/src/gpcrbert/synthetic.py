"""Small synthetic receptor-like corpora for smoke tests and the overfit check.

Every record carries one E/DRY, one CWxP and one NPxxY motif, placed inside
the default localisation windows.  The variable motif residues are fixed per
receptor class, and each class also has a short signature block, so the
masked residues are predictable from context.  Background residues never
include C, D, E, N, so no spurious motif occurrences arise.
"""

from __future__ import annotations

import numpy as np

from .corpus import ProteinRecord

BACKGROUND = "LAGVSIKRTPQFYMHW"
_X_CHOICES = "LAGVSIKTQFM"


def synthetic_motif_corpus(n_records: int = 16, length: int = 48, n_classes: int = 4, seed: int = 0) -> list[ProteinRecord]:
    if length < 24:
        raise ValueError("length must be >= 24 to hold three motifs")
    rng = np.random.default_rng(seed)
    classes = []
    for c in range(n_classes):
        classes.append({
            "name": f"syn{c}",
            "npxxy": "".join(rng.choice(list(_X_CHOICES), 2)),
            "cwxp": str(rng.choice(list(_X_CHOICES))),
            "e_or_d": "ED"[c % 2],
            "signature": "".join(rng.choice(list(BACKGROUND), 4)),
        })
    dry_at = int(0.375 * length)
    cwxp_at = int(0.68 * length)
    npxxy_at = int(0.84 * length)
    sig_at = 2
    records = []
    for i in range(n_records):
        spec = classes[i % n_classes]
        seq = list(rng.choice(list(BACKGROUND), length))
        seq[sig_at : sig_at + 4] = spec["signature"]
        seq[dry_at : dry_at + 3] = spec["e_or_d"] + "RY"
        seq[cwxp_at : cwxp_at + 4] = "CW" + spec["cwxp"] + "P"
        seq[npxxy_at : npxxy_at + 5] = "NP" + spec["npxxy"] + "Y"
        records.append(ProteinRecord(f"syn{i:03d}", spec["name"], "".join(seq)))
    return records


def gaussian_clusters(n: int = 60, dim: int = 32, n_clusters: int = 3, spread: float = 1.0,
                      separation: float = 8.0, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian blobs with centres drawn at ``separation`` scale; labels cycle 0..k-1."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, separation / np.sqrt(2.0), size=(n_clusters, dim))
    labels = np.arange(n) % n_clusters
    return centres[labels] + rng.normal(0.0, spread, size=(n, dim)), labels


def separable_toy(n_per_class: int = 10, n_noise: int = 12, n_classes: int = 3,
                  seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """One-hot style features where one indicator coordinate fixes the label.

    The remaining ``n_noise`` binary coordinates are random, so the set is
    linearly separable only through the indicators.
    """
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(n_classes), n_per_class)
    X = np.zeros((y.size, n_classes + n_noise))
    X[np.arange(y.size), y] = 1.0
    X[:, n_classes:] = rng.integers(0, 2, size=(y.size, n_noise))
    return X, y
