"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .errors import DomainError


def as_1d_float(x, name: str = "array") -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise DomainError(f"{name} must be nonempty")
    if np.any(~np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def as_2d_float(x, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise DomainError(f"{name} must be a nonempty 2d array")
    if np.any(~np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def encode_groups(labels, known=None):
    """Map group labels to contiguous codes by first appearance.

    With ``known`` given, labels must come from that list; unseen labels
    raise.  Returns ``(codes, uniques)``.
    """
    labels = np.asarray(labels).ravel()
    if known is not None:
        uniques = list(known)
        lookup = {lab: i for i, lab in enumerate(uniques)}
        try:
            codes = np.asarray([lookup[lab] for lab in labels.tolist()])
        except KeyError as exc:
            raise DomainError(f"unknown group label {exc.args[0]!r}") from None
        return codes, uniques
    uniques = []
    lookup = {}
    codes = np.empty(labels.size, dtype=int)
    for i, lab in enumerate(labels.tolist()):
        if lab not in lookup:
            lookup[lab] = len(uniques)
            uniques.append(lab)
        codes[i] = lookup[lab]
    return codes, uniques
