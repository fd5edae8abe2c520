"""Synthetic data generation and gridded-CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import CsvParseError, EmptyDatasetError, InvalidInputError
from .kernels import Dataset

DEFAULT_MISSING_SENTINEL = "NaN"

_NOISE_STD = 0.1  # target noise is N(0, 0.01)


def generate_synthetic(n: int, d: int, seed: int, targets: bool = True) -> Dataset:
    """n i.i.d. uniform points on [0,1]^d from a seeded generator.

    Targets, when requested, are a smooth field (sum of 3 seeded
    Gaussian bumps) plus N(0, 0.01) noise.  The same seed always yields
    byte-identical data.
    """
    if n < 1 or d < 1:
        raise InvalidInputError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    points = rng.random((n, d))
    if not targets:
        return Dataset(points)
    centers = rng.random((3, d))
    amps = rng.uniform(0.5, 1.5, size=3) * rng.choice([-1.0, 1.0], size=3)
    width = 0.4 * np.sqrt(d)
    y = np.zeros(n)
    for c, a in zip(centers, amps):
        sq = ((points - c) ** 2).sum(axis=1)
        y += a * np.exp(-sq / (2.0 * width ** 2))
    y += rng.normal(0.0, _NOISE_STD, size=n)
    return Dataset(points, y)


@dataclass
class CsvSchema:
    """Header-based column mapping for dataset CSVs.

    ``feature_columns`` empty means: every column except the target.
    ``target_column`` None means: no targets (points only).
    """

    feature_columns: List[str] = field(default_factory=list)
    target_column: Optional[str] = None
    missing_sentinel: str = DEFAULT_MISSING_SENTINEL
    scale_features: bool = True


@dataclass
class IngestResult:
    dataset: Dataset
    dropped: int
    #: rows whose features are complete but whose target is missing
    #: (kriging prediction locations); None unless requested
    holdout: Optional[Dataset] = None
    feature_names: List[str] = field(default_factory=list)


def _parse_cell(raw: str, sentinel: str, line_number: int):
    cell = raw.strip()
    if cell == "" or cell == sentinel:
        return None
    try:
        value = float(cell)
    except ValueError:
        raise CsvParseError(f"cannot parse value {raw!r}", line_number) from None
    if not np.isfinite(value):
        return None
    return value


def ingest_csv(path, schema: CsvSchema = None,
               collect_missing_targets: bool = False) -> IngestResult:
    """Read a header CSV into a Dataset.

    Rows with a missing feature or target are dropped and counted;
    with ``collect_missing_targets`` the feature-complete,
    target-missing rows are returned separately as prediction
    locations.  Features are min-max scaled to [0,1] per column unless
    the schema turns scaling off (holdout rows share the training
    scaling).
    """
    schema = schema or CsvSchema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if schema.feature_columns:
            feature_names = list(schema.feature_columns)
        else:
            feature_names = [h for h in header if h != schema.target_column]
        try:
            feat_idx = [header.index(name) for name in feature_names]
        except ValueError as exc:
            raise InvalidInputError(f"{path}: {exc}") from None
        tgt_idx = None
        if schema.target_column is not None:
            if schema.target_column not in header:
                raise InvalidInputError(
                    f"{path}: no column named {schema.target_column!r}")
            tgt_idx = header.index(schema.target_column)

        rows, ys, holdout_rows = [], [], []
        dropped = 0
        for line_number, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if max(feat_idx + ([tgt_idx] if tgt_idx is not None else [])) >= len(raw):
                raise CsvParseError(f"row has {len(raw)} fields, "
                                    f"expected {len(header)}", line_number)
            feats = [_parse_cell(raw[i], schema.missing_sentinel, line_number)
                     for i in feat_idx]
            if any(v is None for v in feats):
                dropped += 1
                continue
            if tgt_idx is None:
                rows.append(feats)
                continue
            y = _parse_cell(raw[tgt_idx], schema.missing_sentinel, line_number)
            if y is None:
                if collect_missing_targets:
                    holdout_rows.append(feats)
                else:
                    dropped += 1
                continue
            rows.append(feats)
            ys.append(y)

    if not rows:
        raise EmptyDatasetError(f"{path}: no usable rows")
    points = np.asarray(rows, dtype=float)
    holdout_pts = (np.asarray(holdout_rows, dtype=float)
                   if holdout_rows else None)
    if schema.scale_features:
        pool = points if holdout_pts is None else np.vstack([points, holdout_pts])
        lo = pool.min(axis=0)
        span = pool.max(axis=0) - lo
        span[span == 0] = 1.0
        points = (points - lo) / span
        if holdout_pts is not None:
            holdout_pts = (holdout_pts - lo) / span
    dataset = Dataset(points, np.asarray(ys) if tgt_idx is not None else None)
    holdout = Dataset(holdout_pts) if holdout_pts is not None else None
    return IngestResult(dataset=dataset, dropped=dropped, holdout=holdout,
                        feature_names=feature_names)


def write_dataset_csv(path, data: Dataset, feature_names: List[str] = None,
                      target_name: str = "y",
                      missing_sentinel: str = DEFAULT_MISSING_SENTINEL,
                      target_mask: np.ndarray = None):
    """Write a Dataset as a header CSV (full float precision, so a
    scale-free round trip is exact).

    ``target_mask``, when given, marks rows whose target is written as
    the missing sentinel instead of its value.
    """
    names = feature_names or [f"x{i}" for i in range(data.d)]
    if len(names) != data.d:
        raise InvalidInputError("feature name count does not match dimension")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(names) + ([target_name] if data.targets is not None else [])
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.points[i]]
            if data.targets is not None:
                if target_mask is not None and target_mask[i]:
                    row.append(missing_sentinel)
                else:
                    row.append(repr(float(data.targets[i])))
            writer.writerow(row)
