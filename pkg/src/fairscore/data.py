"""Tabular dataset container and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np


class SchemaError(ValueError):
    """Input table does not match the declared column bindings."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus protected attribute, label, scores and weights.

    ``protected`` holds integer codes into ``groups``; it, ``label``,
    ``base_scores`` and ``weights`` are optional. ``events[i, l, j]`` holds
    ``Pr(E_lj | x_i)`` for general linear constraints.
    """

    features: np.ndarray
    protected: Optional[np.ndarray] = None
    label: Optional[np.ndarray] = None
    base_scores: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    events: Optional[np.ndarray] = None
    groups: tuple = (0, 1)
    feature_names: tuple = ()
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        object.__setattr__(self, "features", x)
        n = x.shape[0]
        for name, dtype in (("protected", int), ("label", int),
                            ("base_scores", float), ("weights", float)):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=dtype).reshape(-1)
            if v.shape[0] != n:
                raise SchemaError(f"{name} has {v.shape[0]} rows, features have {n}")
            object.__setattr__(self, name, v)
        if self.events is not None:
            ev = np.asarray(self.events, dtype=float)
            if ev.ndim != 3 or ev.shape[0] != n:
                raise SchemaError("events must be an (n, L, J) array of event posteriors")
            object.__setattr__(self, "events", ev)
        if self.protected is not None and self.protected.size:
            if self.protected.min() < 0 or self.protected.max() >= len(self.groups):
                raise SchemaError("protected codes outside the declared group alphabet")
        if self.label is not None and not np.isin(self.label, (0, 1)).all():
            raise SchemaError("label must be binary 0/1")
        if self.base_scores is not None:
            s = self.base_scores
            if not np.all(np.isfinite(s)) or s.min(initial=0.0) < 0 or s.max(initial=0.0) > 1:
                raise SchemaError("base scores must lie in [0, 1]")
        if self.weights is not None and self.weights.min(initial=0.0) < 0:
            raise SchemaError("weights must be non-negative")
        if not self.feature_names:
            object.__setattr__(self, "feature_names",
                               tuple(f"x{j}" for j in range(x.shape[1])))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def without(self, *names) -> "Dataset":
        return replace(self, **{k: None for k in names})


def _parse_group(value: str):
    try:
        return int(value)
    except ValueError:
        return value


def read_csv_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        rows = [row for row in reader if row]
    for k, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {k + 2} has {len(row)} fields, header has {len(header)}")
    return header, rows


def load_dataset(
    path,
    feature_cols: Sequence[str] = (),
    protected_col: Optional[str] = None,
    label_col: Optional[str] = None,
    score_col: Optional[str] = None,
    weight_col: Optional[str] = None,
    groups: Optional[Sequence] = None,
    require: Sequence[str] = (),
) -> Dataset:
    """Read a headed CSV into a :class:`Dataset` using the column bindings.

    Columns named in ``require`` must be bound and present; other bound
    columns are read when present and skipped otherwise. Group values are
    mapped onto ``groups`` (inferred and sorted when not given).
    """
    header, rows = read_csv_table(path)
    index = {name: j for j, name in enumerate(header)}
    bound = {"protected": protected_col, "label": label_col,
             "score": score_col, "weight": weight_col}
    for role in require:
        name = bound.get(role)
        if name is None:
            raise SchemaError(f"no column bound for required role '{role}'")
        if name not in index:
            raise SchemaError(f"{path}: missing {role} column '{name}'")
    missing = [c for c in feature_cols if c not in index]
    if missing:
        raise SchemaError(f"{path}: missing feature column(s) {', '.join(missing)}")

    def column(name, conv):
        j = index[name]
        try:
            return [conv(row[j]) for row in rows]
        except ValueError as exc:
            raise SchemaError(f"{path}: bad value in column '{name}': {exc}") from None

    if feature_cols:
        x = np.array([column(c, float) for c in feature_cols], dtype=float).T
    else:
        x = np.zeros((len(rows), 0))
    x = x.reshape(len(rows), len(feature_cols))
    if not np.all(np.isfinite(x)):
        raise SchemaError(f"{path}: non-finite feature values")

    protected = None
    if protected_col is not None and protected_col in index:
        raw = column(protected_col, _parse_group)
        if groups is None:
            groups = sorted(set(raw), key=lambda g: (isinstance(g, str), g))
        groups = tuple(groups)
        lookup = {g: k for k, g in enumerate(groups)}
        lookup.update({str(g): k for k, g in enumerate(groups)})
        try:
            protected = np.array([lookup[g] for g in raw], dtype=int)
        except KeyError as exc:
            raise SchemaError(f"{path}: group {exc.args[0]!r} not in alphabet {groups}") from None
    groups = tuple(groups) if groups is not None else (0, 1)

    label = None
    if label_col is not None and label_col in index:
        label = np.array(column(label_col, lambda s: int(float(s))), dtype=int)
        if not np.isin(label, (0, 1)).all():
            raise SchemaError(f"{path}: label column '{label_col}' is not binary")
    scores = None
    if score_col is not None and score_col in index:
        scores = np.array(column(score_col, float))
    weights = None
    if weight_col is not None and weight_col in index:
        weights = np.array(column(weight_col, float))

    return Dataset(
        features=x,
        protected=protected,
        label=label,
        base_scores=scores,
        weights=weights,
        groups=groups,
        feature_names=tuple(feature_cols),
        extra={"header": header, "rows": rows, "path": str(path)},
    )


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def fmt(x) -> str:
    """Shortest round-trip text for a float (exact on re-parse)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))
