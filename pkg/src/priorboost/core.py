"""Core data model: datasets, splitting, losses, and error metrics.

A labeled example pairs a prior model's multi-target prediction (the feature
vector) with the observed multi-target outcome (the target vector). Feature
column j and target column j describe the same physical quantity, so the
j-th feature is itself a prediction of the j-th target. Everything downstream
(boosting, selection, explanation) builds on the types defined here.

All real values are 64-bit floats; arrays are made read-only on construction
so datasets can be shared freely across concurrent work.
"""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "Dataset",
    "TargetSlice",
    "SplitSpec",
    "Loss",
    "split",
    "split_indices",
    "loss_value",
    "negative_gradient",
    "mae",
    "average_mae",
    "pairwise_correlations",
    "dataset_fingerprint",
    "save_dataset_csv",
    "load_dataset_csv",
]


def _as_matrix(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass
class Dataset:
    """m examples of n prior predictions paired with n observed targets.

    `examples[i, j]` is the prior model's prediction of `targets[i, j]`; the
    two matrices always have identical shape.
    """

    examples: np.ndarray
    targets: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    target_names: list[str] = field(default_factory=list)
    units: str | None = None

    def __post_init__(self):
        self.examples = _as_matrix(self.examples, "examples")
        self.targets = _as_matrix(self.targets, "targets")
        if self.examples.shape != self.targets.shape:
            raise ValueError(
                "examples and targets must have identical shape, got "
                f"{self.examples.shape} vs {self.targets.shape}"
            )
        n = self.n
        if not self.feature_names:
            self.feature_names = [f"X{j + 1}" for j in range(n)]
        if not self.target_names:
            self.target_names = [f"Y{j + 1}" for j in range(n)]
        if len(self.feature_names) != n or len(self.target_names) != n:
            raise ValueError("feature_names and target_names must have length n")

    @property
    def m(self) -> int:
        return self.examples.shape[0]

    @property
    def n(self) -> int:
        return self.examples.shape[1]

    def target_slice(self, target_index: int) -> "TargetSlice":
        """Single-target view: all features plus the target_index-th target column."""
        if not 0 <= target_index < self.n:
            raise ValueError(f"target_index {target_index} out of range [0, {self.n})")
        return TargetSlice(self.examples, self.targets[:, target_index], target_index)

    def subset(self, rows) -> "Dataset":
        return Dataset(
            self.examples[rows],
            self.targets[rows],
            list(self.feature_names),
            list(self.target_names),
            self.units,
        )


@dataclass
class TargetSlice:
    """One single-target regression subtask: full feature matrix, one target column."""

    examples: np.ndarray
    target: np.ndarray
    target_index: int

    def __post_init__(self):
        self.examples = _as_matrix(self.examples, "examples")
        self.target = _as_vector(self.target, "target")
        if self.examples.shape[0] != self.target.shape[0]:
            raise ValueError("examples and target row counts differ")
        if not 0 <= self.target_index < self.examples.shape[1]:
            raise ValueError(
                f"target_index {self.target_index} out of range "
                f"[0, {self.examples.shape[1]})"
            )

    @property
    def m(self) -> int:
        return self.examples.shape[0]

    @property
    def n(self) -> int:
        return self.examples.shape[1]

    @property
    def prior(self) -> np.ndarray:
        """The prior prediction of this target: feature column target_index."""
        return self.examples[:, self.target_index]

    def subset(self, rows) -> "TargetSlice":
        return TargetSlice(self.examples[rows], self.target[rows], self.target_index)


@dataclass(frozen=True)
class SplitSpec:
    """Train/test split policy: fraction, seed, and shuffle flag."""

    train_fraction: float = 0.70
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def split_indices(m: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of the train/test partition for an m-row dataset.

    The train size is train_fraction * m rounded to the nearest integer
    (half rounds up). Deterministic for a fixed seed; with shuffle=False the
    first rows go to train in their original order.
    """
    m_train = int(math.floor(spec.train_fraction * m + 0.5))
    m_test = m - m_train
    if m_train < 2 or m_test < 1:
        raise ValueError(
            f"degenerate split: m={m}, train_fraction={spec.train_fraction} "
            f"gives m_train={m_train}, m_test={m_test}"
        )
    if spec.shuffle:
        order = np.random.default_rng(spec.seed).permutation(m)
    else:
        order = np.arange(m)
    return order[:m_train], order[m_train:]


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition a dataset into disjoint train and test datasets."""
    train_rows, test_rows = split_indices(dataset.m, spec)
    return dataset.subset(train_rows), dataset.subset(test_rows)


class Loss(Enum):
    """Per-target loss kind. Absolute is the default throughout."""

    ABSOLUTE = "absolute"
    SQUARED = "squared"


def _check_finite(y, p):
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(p))):
        raise ValueError("loss inputs must be finite")
    return y, p


def loss_value(loss: Loss, y, p):
    """Pointwise loss. Scalars in, float out; arrays in, array out."""
    y, p = _check_finite(y, p)
    d = y - p
    out = np.abs(d) if loss is Loss.ABSOLUTE else d * d
    return float(out) if out.ndim == 0 else out


def negative_gradient(loss: Loss, y, p):
    """Pseudo-residual: negative derivative of the loss in the prediction.

    Absolute loss gives sign(y - p) with sign(0) = 0; squared loss gives
    y - p (the conventional factor-2 is absorbed by the line search).
    """
    y, p = _check_finite(y, p)
    d = y - p
    out = np.sign(d) if loss is Loss.ABSOLUTE else d
    return float(out) if out.ndim == 0 else out


def mae(y, p) -> float:
    """Mean absolute error between two equal-length vectors."""
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape or y.ndim != 1 or y.size < 1:
        raise ValueError(f"mae needs equal-length vectors, got {y.shape} vs {p.shape}")
    return float(np.mean(np.abs(y - p)))


def average_mae(Y, P) -> float:
    """Mean over target columns of the per-column mean absolute error."""
    Y = np.asarray(Y, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    if Y.shape != P.shape or Y.ndim != 2:
        raise ValueError(f"average_mae needs equal-shape matrices, got {Y.shape} vs {P.shape}")
    return float(np.mean([mae(Y[:, j], P[:, j]) for j in range(Y.shape[1])]))


def pairwise_correlations(dataset: Dataset) -> np.ndarray:
    """Pearson correlations over the 2n columns [features..., targets...].

    Symmetric with unit diagonal, entries clipped to [-1, 1]. Zero-variance
    columns get 0 off-diagonal correlations and a warning rather than NaN.
    """
    if dataset.m < 2:
        raise ValueError("pairwise_correlations needs at least 2 rows")
    data = np.hstack([dataset.examples, dataset.targets])
    centered = data - data.mean(axis=0)
    scale = np.sqrt(np.sum(centered * centered, axis=0))
    zero_var = scale == 0.0
    if np.any(zero_var):
        names = list(dataset.feature_names) + list(dataset.target_names)
        flagged = [names[i] for i in np.nonzero(zero_var)[0]]
        warnings.warn(
            f"zero-variance columns {flagged}: correlations reported as 0",
            stacklevel=2,
        )
    normed = centered / np.where(zero_var, 1.0, scale)
    corr = normed.T @ normed
    corr = 0.5 * (corr + corr.T)
    corr[zero_var, :] = 0.0
    corr[:, zero_var] = 0.0
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


def dataset_fingerprint(dataset: Dataset) -> str:
    """SHA-256 over shape and raw matrix bytes; identifies the exact rows."""
    h = hashlib.sha256()
    h.update(repr(dataset.examples.shape).encode())
    h.update(np.ascontiguousarray(dataset.examples).tobytes())
    h.update(np.ascontiguousarray(dataset.targets).tobytes())
    return h.hexdigest()


def save_dataset_csv(dataset: Dataset, path) -> None:
    """Write the CSV interchange format: header X1..Xn,Y1..Yn, one row per example."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + list(dataset.target_names))
        for i in range(dataset.m):
            row = [repr(float(v)) for v in dataset.examples[i]]
            row += [repr(float(v)) for v in dataset.targets[i]]
            writer.writerow(row)


def load_dataset_csv(path, units: str | None = None) -> Dataset:
    """Load the CSV interchange format written by save_dataset_csv.

    The header must hold 2n names: n feature columns then n target columns.
    Ragged rows and non-numeric or non-finite cells are rejected with the
    offending row and column named.
    """
    path = Path(path)
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        width = len(header)
        if width < 2 or width % 2 != 0:
            raise ValueError(f"{path}: header must hold 2n column names, got {width}")
        n = width // 2
        rows: list[list[float]] = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != width:
                raise ValueError(
                    f"{path}: row {lineno}: expected {width} cells, got {len(cells)}"
                )
            parsed = []
            for col, cell in enumerate(cells):
                try:
                    value = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: row {lineno}, column {header[col]!r}: "
                        f"non-numeric cell {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise ValueError(
                        f"{path}: row {lineno}, column {header[col]!r}: "
                        f"non-finite cell {cell!r}"
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows, dtype=np.float64)
    return Dataset(
        data[:, :n], data[:, n:], header[:n], header[n:], units=units
    )
