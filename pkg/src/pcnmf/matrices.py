"""Masked measurement matrices and nonnegative factor pairs.

The measurement matrix holds received powers for N_R sensors over T time
slots together with a binary availability mask. Missing entries are stored
as 0 internally so they can never leak into downstream arithmetic; every
operation multiplies by the mask before the data is used. Factor pairs hold
the nonnegative (gains, activations) state of a factorization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class ShapeMismatchError(ValueError):
    """Raised when matrix dimensions are incompatible."""


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class MaskedMatrix:
    """Measurement matrix S with binary availability mask W.

    values : (n_rows, n_cols) received powers, linear scale. Entries at
        mask == 0 are normalized to 0 on construction, whatever the caller
        passed, so missing placeholders cannot influence any computation.
    mask : (n_rows, n_cols) with entries exactly 0.0 or 1.0.

    Instances are immutable value types (arrays are write-protected) and
    safe to share read-only across threads.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = _as_matrix(self.values, "values")
        mask = _as_matrix(self.mask, "mask")
        if values.shape != mask.shape:
            raise ShapeMismatchError(
                f"values shape {values.shape} != mask shape {mask.shape}"
            )
        if not np.isin(mask, (0.0, 1.0)).all():
            raise ValueError("mask entries must be exactly 0 or 1")
        observed = mask == 1.0
        seen = values[observed]
        if not np.isfinite(seen).all():
            raise ValueError("observed entries must be finite")
        if (seen < 0).any():
            raise ValueError("observed entries must be nonnegative")
        # Zero out missing entries: the stored placeholder is never read.
        values[~observed] = 0.0
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def observed_count(self) -> int:
        return int(self.mask.sum())

    def window(self, start: int, stop: int) -> "MaskedMatrix":
        """Column slice [start, stop) as a new MaskedMatrix."""
        return MaskedMatrix(self.values[:, start:stop], self.mask[:, start:stop])


@dataclass(frozen=True)
class FactorPair:
    """Nonnegative factorization state: gains (N_R x K) and activations (K x T)."""

    gains: np.ndarray
    activations: np.ndarray

    def __post_init__(self):
        gains = _as_matrix(self.gains, "gains")
        activations = _as_matrix(self.activations, "activations")
        if gains.shape[1] != activations.shape[0]:
            raise ShapeMismatchError(
                f"gains has {gains.shape[1]} columns but activations has "
                f"{activations.shape[0]} rows"
            )
        for name, arr in (("gains", gains), ("activations", activations)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} entries must be finite")
            if (arr < 0).any():
                raise ValueError(f"{name} entries must be nonnegative")
        object.__setattr__(self, "gains", _frozen(gains))
        object.__setattr__(self, "activations", _frozen(activations))

    @property
    def rank(self) -> int:
        return self.gains.shape[1]


@dataclass(frozen=True)
class ReweightMatrix:
    """Per-transition quadratic penalty weights, K x (T+1), units 1/power^2.

    Column 0 and column T are identically zero so the first and last time
    slots see no phantom neighbor.
    """

    weights: np.ndarray

    def __post_init__(self):
        weights = _as_matrix(self.weights, "weights")
        if weights.shape[1] < 2:
            raise ShapeMismatchError("weights needs at least 2 columns (T >= 1)")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise ValueError("weights must be finite and nonnegative")
        if weights[:, 0].any() or weights[:, -1].any():
            raise ValueError("boundary weight columns must be zero")
        object.__setattr__(self, "weights", _frozen(weights))

    @property
    def n_slots(self) -> int:
        return self.weights.shape[1] - 1


def reconstruct(pair: FactorPair) -> np.ndarray:
    """Dense reconstruction gains @ activations (elementwise >= 0)."""
    return pair.gains @ pair.activations


def masked_product_residual(s: MaskedMatrix, pair: FactorPair) -> np.ndarray:
    """W * (S - gains @ activations); exactly zero wherever mask == 0."""
    if s.shape != (pair.gains.shape[0], pair.activations.shape[1]):
        raise ShapeMismatchError(
            f"measurements {s.shape} incompatible with factor product "
            f"{(pair.gains.shape[0], pair.activations.shape[1])}"
        )
    return s.mask * (s.values - pair.gains @ pair.activations)


def _fmt(x: float) -> str:
    # repr() of a Python float is the shortest round-trip decimal.
    return repr(float(x))


def save_masked_csv(s: MaskedMatrix, path) -> None:
    """Write a MaskedMatrix as long-format CSV with header r,t,value,observed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "t", "value", "observed"])
        n_rows, n_cols = s.shape
        for r in range(n_rows):
            for t in range(n_cols):
                writer.writerow([r, t, _fmt(s.values[r, t]), int(s.mask[r, t])])


def load_masked_csv(path) -> MaskedMatrix:
    """Read a MaskedMatrix written by save_masked_csv."""
    rows: list[tuple[int, int, float, float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["r", "t", "value", "observed"]:
            raise ValueError(f"unexpected header {header!r}")
        for rec in reader:
            rows.append((int(rec[0]), int(rec[1]), float(rec[2]), float(rec[3])))
    if not rows:
        raise ValueError("empty masked-matrix file")
    n_rows = max(r for r, _, _, _ in rows) + 1
    n_cols = max(t for _, t, _, _ in rows) + 1
    values = np.zeros((n_rows, n_cols))
    mask = np.zeros((n_rows, n_cols))
    for r, t, v, w in rows:
        values[r, t] = v
        mask[r, t] = w
    return MaskedMatrix(values, mask)


def save_dense_csv(matrix: np.ndarray, path) -> None:
    """Write a dense matrix as plain CSV (no header), shortest round-trip floats."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected 2-D matrix, got shape {arr.shape}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in arr:
            writer.writerow([_fmt(v) for v in row])


def load_dense_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        data = [[float(v) for v in rec] for rec in csv.reader(fh) if rec]
    if not data:
        raise ValueError("empty dense-matrix file")
    return np.array(data, dtype=np.float64)
