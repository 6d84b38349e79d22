"""Core value types, CSV persistence, and deterministic bootstrap sampling.

A :class:`Dataset` is an immutable matrix of k measurement columns with an
optional hidden ground-truth column. Observations for loss evaluation are
multisets of row indices sampled with replacement (:func:`bootstrap_observations`);
they reference the backing dataset instead of copying rows, so one dataset
can serve thousands of observations.

All randomness flows through numpy's PCG64 bit generator seeded from a
64-bit integer; per-batch sub-streams are spawned from the master seed so
batches could be generated in parallel without changing the result. The
generator choice is pinned in the headers of generated dataset files.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_TAG = "geen-dataset v1"
RNG_TAG = "pcg64"

_HEADER_RE = re.compile(r"^x1(,x\d+)*(,xstar)?$")


class SchemaError(ValueError):
    """Raised when a dataset file violates the CSV schema."""


def _frozen_array(values) -> np.ndarray:
    """A read-only float64 C array; reuses inputs that are already frozen."""
    arr = np.asarray(values)
    if arr.dtype == np.float64 and arr.flags.c_contiguous and not arr.flags.writeable:
        return arr
    arr = np.array(arr, dtype=np.float64, order="C")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable n_pts x k measurement matrix with optional truth column.

    Requires k >= 3: identification needs at least three informative
    measurements. All entries must be finite.
    """

    features: np.ndarray
    truth: np.ndarray | None = None

    def __post_init__(self):
        feats = _frozen_array(self.features)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        if feats.shape[1] < 3:
            raise SchemaError(f"need at least 3 measurement columns, got {feats.shape[1]}")
        if not np.all(np.isfinite(feats)):
            bad = np.argwhere(~np.isfinite(feats))[0]
            raise SchemaError(f"non-finite value at row {bad[0] + 1}, column x{bad[1] + 1}")
        object.__setattr__(self, "features", feats)
        if self.truth is not None:
            truth = _frozen_array(self.truth)
            if truth.shape != (feats.shape[0],):
                raise ValueError(
                    f"truth length {truth.shape} does not match {feats.shape[0]} rows"
                )
            if not np.all(np.isfinite(truth)):
                bad_row = int(np.flatnonzero(~np.isfinite(truth))[0])
                raise SchemaError(f"non-finite value at row {bad_row + 1}, column xstar")
            object.__setattr__(self, "truth", truth)

    @property
    def k(self) -> int:
        return self.features.shape[1]

    @property
    def n_pts(self) -> int:
        return self.features.shape[0]

    def without_truth(self) -> "Dataset":
        """Truth-stripped view sharing the feature matrix (truth isolation)."""
        if self.truth is None:
            return self
        return Dataset(self.features)


@dataclass(frozen=True)
class ObservationBatch:
    """An m-point multiset of row indices into a dataset (with replacement)."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64, order="C")
        if idx.ndim != 1 or idx.size < 2:
            raise ValueError("an observation needs at least 2 point indices")
        if np.any(idx < 0):
            raise ValueError("negative row index")
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)

    @property
    def m(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class ObservationSet:
    """A list of equally sized observation batches."""

    batches: tuple[ObservationBatch, ...]

    def __post_init__(self):
        batches = tuple(self.batches)
        if not batches:
            raise ValueError("empty observation set")
        m = batches[0].m
        if any(b.m != m for b in batches):
            raise ValueError("all batches must share one m")
        object.__setattr__(self, "batches", batches)

    @property
    def m(self) -> int:
        return self.batches[0].m

    @property
    def count(self) -> int:
        return len(self.batches)


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return int(seed)


def bootstrap_observations(
    dataset: Dataset, m: int, count: int, seed: int | np.random.SeedSequence
) -> ObservationSet:
    """Draw `count` observations of m row indices, i.i.d. uniform with replacement.

    Pure function of (n_pts, m, count, seed): batch i draws from the i-th
    child stream of SeedSequence(seed), so the result does not depend on
    evaluation order. A pre-built SeedSequence is accepted for internal
    stream composition.
    """
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if dataset.n_pts == 0:
        raise ValueError("cannot bootstrap from an empty dataset")
    if isinstance(seed, np.random.SeedSequence):
        root = seed
    else:
        root = np.random.SeedSequence(check_seed(seed))
    streams = root.spawn(count)
    batches = tuple(
        ObservationBatch(np.random.Generator(np.random.PCG64(s)).integers(0, dataset.n_pts, size=m))
        for s in streams
    )
    return ObservationSet(batches)


def _format_value(v: float) -> str:
    # repr of a Python float is the shortest decimal that round-trips binary64
    return repr(float(v))


def save_dataset(
    dataset: Dataset,
    path: str | Path,
    *,
    seed: int | None = None,
    experiment: str | None = None,
) -> None:
    """Write a dataset as CSV with exact (shortest round-trip) decimals.

    Generated files carry `#`-prefixed metadata lines pinning the format
    version, the RNG algorithm, and when available the seed and experiment.
    """
    path = Path(path)
    cols = [f"x{j + 1}" for j in range(dataset.k)]
    if dataset.truth is not None:
        cols.append("xstar")
    lines = [f"# {FORMAT_TAG}", f"# rng={RNG_TAG}"]
    if seed is not None:
        lines.append(f"# seed={check_seed(seed)}")
    if experiment is not None:
        lines.append(f"# experiment={experiment}")
    lines.append(",".join(cols))
    for i in range(dataset.n_pts):
        row = [_format_value(v) for v in dataset.features[i]]
        if dataset.truth is not None:
            row.append(_format_value(dataset.truth[i]))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset_header(path: str | Path) -> dict[str, str]:
    """Metadata from the leading comment lines of a dataset file."""
    meta: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
            elif body:
                meta["format"] = body
    return meta


def load_dataset(path: str | Path) -> Dataset:
    """Load a CSV dataset, inferring k from the header.

    The header must read `x1,...,xK[,xstar]`; the truth column is populated
    iff `xstar` is present. Leading `#` comment lines are skipped. Malformed
    rows and non-finite values raise :class:`SchemaError` naming the row and
    column.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    body = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise SchemaError(f"{path}: no header row")
    header = body[0].strip()
    if not _HEADER_RE.match(header):
        raise SchemaError(f"{path}: malformed header {header!r}")
    cols = header.split(",")
    has_truth = cols[-1] == "xstar"
    k = len(cols) - (1 if has_truth else 0)
    expected = [f"x{j + 1}" for j in range(k)] + (["xstar"] if has_truth else [])
    if cols != expected:
        raise SchemaError(f"{path}: header columns must be x1..x{k}[,xstar], got {header!r}")
    if k < 3:
        raise SchemaError(f"{path}: need at least 3 measurement columns, got {k}")

    n = len(body) - 1
    feats = np.empty((n, k))
    truth = np.empty(n) if has_truth else None
    for i, line in enumerate(body[1:]):
        parts = line.split(",")
        if len(parts) != len(cols):
            raise SchemaError(f"{path}: row {i + 1} has {len(parts)} fields, expected {len(cols)}")
        try:
            values = [float(p) for p in parts]
        except ValueError:
            bad = next(j for j, p in enumerate(parts) if not _is_float(p))
            raise SchemaError(f"{path}: row {i + 1}, column {cols[bad]}: bad value {parts[bad]!r}")
        for j, v in enumerate(values):
            if not np.isfinite(v):
                raise SchemaError(f"{path}: row {i + 1}, column {cols[j]}: non-finite value")
        feats[i] = values[:k]
        if has_truth:
            truth[i] = values[k]
    return Dataset(feats, truth)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
