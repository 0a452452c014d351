"""Input and output file formats.

Three CSV inputs (UTF-8, header row required):

* ``binomial-counts``: ``id,n,x`` with optional ``p0`` (null success
  probability, default 0.5).
* ``fisher-2x2-counts``: ``id,x11,x12,x21,x22``; the statistic is ``x11``.
* ``pvalue-support-bundle``: long format ``id,point,cdf_value,observed``,
  one row per support point, ``observed=1`` on the row of the realised
  p-value.  An optional ``alt_mass`` column gives the sampling masses of a
  false null (used by ``verify``); tests without it are true nulls.  A row
  with ``observed=1`` and an empty ``cdf_value`` gives an observed p-value
  that is not a support point (accepted with a warning).
"""

from __future__ import annotations

import csv
import json
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cdf_model import StepCDF, TestFamily
from .exact_tests import BinomialTestSpec, FisherTestSpec, family_from_observations
from .verify import GroundTruth

__all__ = [
    "DataError",
    "Dataset",
    "INPUT_KINDS",
    "read_dataset",
    "read_binomial_counts",
    "read_fisher_counts",
    "read_bundle",
    "write_bundle",
    "fmt",
    "write_table",
]

INPUT_KINDS = ("binomial-counts", "fisher-2x2-counts", "pvalue-support-bundle")


class DataError(ValueError):
    """Malformed input data."""


@dataclass(frozen=True, eq=False)
class Dataset:
    ids: list[str]
    pvalues: np.ndarray
    family: TestFamily
    truth: GroundTruth | None = None


def fmt(x) -> str:
    """Full-precision decimal text that parses back to the same double."""
    return format(float(x), ".17g")


def _rows(path: Path, required: Sequence[str]) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows


def _int(row, key, line):
    try:
        return int(row[key])
    except (TypeError, ValueError):
        raise DataError(f"line {line}: {key}={row.get(key)!r} is not an integer") from None


def _float(row, key, line):
    try:
        return float(row[key])
    except (TypeError, ValueError):
        raise DataError(f"line {line}: {key}={row.get(key)!r} is not a number") from None


def _family(obs, ids) -> Dataset:
    try:
        pvals, family = family_from_observations(obs)
    except (ValueError, TypeError) as exc:
        raise DataError(str(exc)) from exc
    return Dataset(ids, pvals, family)


def read_binomial_counts(path, sided: str = "two-sided") -> Dataset:
    rows = _rows(Path(path), ["id", "n", "x"])
    obs, ids = [], []
    for line, row in enumerate(rows, start=2):
        p0 = _float(row, "p0", line) if row.get("p0") not in (None, "") else 0.5
        try:
            spec = BinomialTestSpec(_int(row, "n", line), sided, p0)
        except ValueError as exc:
            raise DataError(f"line {line}: {exc}") from None
        obs.append((spec, _int(row, "x", line)))
        ids.append(row["id"])
    return _family(obs, ids)


def read_fisher_counts(path, sided: str = "two-sided") -> Dataset:
    rows = _rows(Path(path), ["id", "x11", "x12", "x21", "x22"])
    obs, ids = [], []
    for line, row in enumerate(rows, start=2):
        cells = [_int(row, c, line) for c in ("x11", "x12", "x21", "x22")]
        try:
            spec = FisherTestSpec.from_table(*cells, sided=sided)
        except ValueError as exc:
            raise DataError(f"line {line}: {exc}") from None
        obs.append((spec, cells[0]))
        ids.append(row["id"])
    return _family(obs, ids)


def read_bundle(path) -> Dataset:
    rows = _rows(Path(path), ["id", "point", "cdf_value", "observed"])
    groups: "OrderedDict[str, list]" = OrderedDict()
    for line, row in enumerate(rows, start=2):
        groups.setdefault(row["id"], []).append((line, row))
    ids, pvals, cdfs, alts, nulls = [], [], [], {}, []
    for idx, (tid, items) in enumerate(groups.items()):
        pts, vals, alt, observed = [], [], [], []
        for line, row in items:
            obs_flag = (row["observed"] or "0").strip()
            if obs_flag not in ("0", "1"):
                raise DataError(f"line {line}: observed must be 0 or 1")
            point = _float(row, "point", line)
            if not 0.0 <= point <= 1.0:
                raise DataError(f"line {line}: point {point} outside [0, 1]")
            if row["cdf_value"] in (None, ""):
                if obs_flag != "1":
                    raise DataError(f"line {line}: empty cdf_value on a support row")
                observed.append((point, False))
                continue
            val = _float(row, "cdf_value", line)
            if not 0.0 <= val <= 1.0:
                raise DataError(f"line {line}: cdf value {val} outside [0, 1]")
            pts.append(point)
            vals.append(val)
            alt.append(_float(row, "alt_mass", line) if row.get("alt_mass") not in (None, "") else None)
            if obs_flag == "1":
                observed.append((point, True))
        if pts and pts[0] != 0.0:
            pts.insert(0, 0.0)
            vals.insert(0, 0.0)
            alt.insert(0, 0.0 if any(a is not None for a in alt) else None)
        if not pts or pts[-1] != 1.0:
            pts.append(1.0)
            vals.append(1.0)
            alt.append(0.0 if any(a is not None for a in alt) else None)
        try:
            cdf = StepCDF(pts, vals)
        except ValueError as exc:
            raise DataError(f"test {tid!r}: {exc}") from None
        if len(observed) != 1:
            raise DataError(f"test {tid!r}: expected exactly one observed row, found {len(observed)}")
        p, in_support = observed[0]
        if not in_support:
            warnings.warn(f"test {tid!r}: observed p-value {p} is not in its declared support", stacklevel=2)
        if any(a is not None for a in alt):
            if any(a is None for a in alt):
                raise DataError(f"test {tid!r}: alt_mass must be given on every row or none")
            try:
                alts[idx] = np.asarray(alt, dtype=float)
                GroundTruth(frozenset(), {idx: alts[idx]})
            except ValueError as exc:
                raise DataError(f"test {tid!r}: {exc}") from None
        else:
            nulls.append(idx)
        ids.append(tid)
        pvals.append(p)
        cdfs.append(cdf)
    truth = GroundTruth(frozenset(nulls), alts)
    return Dataset(ids, np.asarray(pvals), TestFamily(cdfs), truth)


def write_bundle(path, ids: Sequence[str], pvalues, family: TestFamily, truth: GroundTruth | None = None) -> None:
    """Write a ``pvalue-support-bundle`` that re-reads to the same family."""
    if not family.is_discrete:
        raise ValueError("only step c.d.f.s can be written to a bundle")
    with_alt = truth is not None and bool(truth.alternatives)
    header = ["id", "point", "cdf_value", "observed"] + (["alt_mass"] if with_alt else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, (tid, p, f) in enumerate(zip(ids, pvalues, family.members)):
            alt = truth.alternatives.get(i) if with_alt else None
            hit = np.flatnonzero(f.support == p)
            for j, (a, v) in enumerate(zip(f.support, f.values)):
                row = [tid, fmt(a), fmt(v), "1" if hit.size and j == hit[0] else "0"]
                if with_alt:
                    row.append(fmt(alt[j]) if alt is not None else "")
                w.writerow(row)
            if not hit.size:
                row = [tid, fmt(p), "", "1"] + ([""] if with_alt else [])
                w.writerow(row)


def read_dataset(path, kind: str, sided: str = "two-sided") -> Dataset:
    if kind == "binomial-counts":
        return read_binomial_counts(path, sided)
    if kind == "fisher-2x2-counts":
        return read_fisher_counts(path, sided)
    if kind == "pvalue-support-bundle":
        return read_bundle(path)
    raise ValueError(f"unknown input kind {kind!r}")


def write_table(rows: Iterable[dict], path, format: str = "csv") -> None:
    """Write dict rows as CSV or JSON to ``path`` (``"-"`` for stdout)."""
    import sys

    rows = list(rows)
    fh = sys.stdout if str(path) == "-" else open(path, "w", newline="", encoding="utf-8")
    try:
        if format == "json":
            json.dump(rows, fh, indent=2, default=_json_default)
            fh.write("\n")
        else:
            if not rows:
                return
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: fmt(v) if isinstance(v, float) else v for k, v in row.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
