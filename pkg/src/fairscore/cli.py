"""Command-line front end.

Subcommands: synth, fit, transform, preprocess, evaluate, pipeline.
Exit codes: 0 success, 2 input/schema error, 3 solver non-convergence
(the model is still written), 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import metrics, pipeline, synth
from .constraints import DEFAULT_DELTA, GENERAL, GEO, KINDS, MSP, ConstraintSpec
from .data import Dataset, SchemaError, fmt, load_dataset, read_csv_table, write_csv
from .dual_solver import AdmmConfig

EXIT_OK, EXIT_SCHEMA, EXIT_NONCONVERGED, EXIT_INVARIANT = 0, 2, 3, 4

log = logging.getLogger("fairscore")


class InvariantViolation(RuntimeError):
    pass


class NotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Columns:
    features: tuple = ()
    protected: Optional[str] = "group"
    label: Optional[str] = "label"
    score: Optional[str] = None

    def to_dict(self) -> dict:
        return {"features": list(self.features), "protected": self.protected,
                "label": self.label, "score": self.score}


@dataclass(frozen=True)
class RunConfig:
    constraint: str = MSP
    epsilon: float = 0.05
    mode: str = pipeline.POST
    columns: Columns = field(default_factory=Columns)
    delta: float = DEFAULT_DELTA
    l2_reg: float = 1e-3
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    solver: str = "admm"
    infer_protected: bool = False
    general_spec: Optional[dict] = None
    seed: int = 0

    def __post_init__(self):
        if self.constraint not in KINDS:
            raise ValueError(f"unknown constraint {self.constraint!r}")
        if self.constraint != GENERAL and not self.epsilon > 0:
            raise ValueError("--epsilon must be positive")
        if self.constraint == GENERAL and self.general_spec is None:
            raise ValueError("--constraint general needs --general-spec")


# -- report text ---------------------------------------------------------------

def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def report_text(report: dict) -> str:
    """Key-sorted JSON so diffs between runs are line-stable."""
    return json.dumps(_plain(report), indent=2, sort_keys=True) + "\n"


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)


# -- data binding ----------------------------------------------------------------

def _feature_list(value: Optional[str]) -> tuple:
    if value is None:
        return ()
    return tuple(c.strip() for c in value.split(",") if c.strip())


def _default_features(path, columns: Columns, extra_exclude=()) -> tuple:
    header, _ = read_csv_table(path)
    skip = {columns.protected, columns.label, columns.score, *extra_exclude}
    skip |= {"original_score", "mu", "transformed_score", "binary_prediction"}
    return tuple(h for h in header if h not in skip)


def _event_columns(general_spec: Optional[dict]) -> list:
    if not general_spec:
        return []
    return [c for row in general_spec["event_cols"] for c in row]


def read_data(path, columns: Columns, require: Sequence[str] = (), groups=None,
              general_spec: Optional[dict] = None) -> Dataset:
    data = load_dataset(path, columns.features, columns.protected, columns.label,
                        columns.score, groups=groups, require=require)
    if general_spec:
        header, rows = data.extra["header"], data.extra["rows"]
        index = {h: j for j, h in enumerate(header)}
        names = general_spec["event_cols"]
        missing = [c for c in _event_columns(general_spec) if c not in index]
        if missing:
            raise SchemaError(f"{path}: missing event column(s) {', '.join(missing)}")
        try:
            events = np.array([[[float(r[index[c]]) for c in line] for line in names] for r in rows])
        except ValueError as exc:
            raise SchemaError(f"{path}: bad event posterior value: {exc}") from None
        data = replace(data, events=events.reshape(len(rows), len(names), -1))
    return data


def _spec(cfg: RunConfig) -> ConstraintSpec:
    if cfg.constraint == GENERAL:
        g = cfg.general_spec
        spec = ConstraintSpec(GENERAL, float(g.get("epsilon", 0.0)), b=g["b"], c=g["c"])
        if g.get("marginals") is not None:
            spec = replace(spec, marginals=np.asarray(g["marginals"], dtype=float))
        return spec
    return ConstraintSpec(cfg.constraint, cfg.epsilon)


# -- model files ---------------------------------------------------------------

def save_model(path, model: pipeline.FstModel, columns: Columns, general_spec=None) -> None:
    d = model.to_dict()
    d["columns"] = columns.to_dict()
    if general_spec:
        d["event_cols"] = general_spec["event_cols"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(d, indent=2) + "\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        model = pipeline.FstModel.from_dict(d)
    except (OSError, ValueError, KeyError) as exc:
        raise SchemaError(f"{path}: cannot read model: {exc}") from None
    c = d.get("columns", {})
    columns = Columns(tuple(c.get("features", ())), c.get("protected"), c.get("label"), c.get("score"))
    general = {"event_cols": d["event_cols"]} if "event_cols" in d else None
    return model, columns, general


def _override(columns: Columns, args) -> Columns:
    kw = {}
    if getattr(args, "protected_col", None) is not None:
        kw["protected"] = args.protected_col
    if getattr(args, "label_col", None) is not None:
        kw["label"] = args.label_col
    if getattr(args, "score_col", None) is not None:
        kw["score"] = args.score_col
    return replace(columns, **kw)


# -- invariants -----------------------------------------------------------------

def check_model(model: pipeline.FstModel) -> None:
    if not np.all(np.isfinite(model.lam)):
        raise InvariantViolation("non-finite dual variables")
    if model.spec.kind != GENERAL:
        bound = np.log(2.0) / model.spec.epsilon
        if np.abs(model.lam).sum() > bound + 1e-6:
            raise InvariantViolation(f"||lambda||_1 exceeds log(2)/epsilon = {bound:.6g}")


def check_scores(scores) -> None:
    s = np.asarray(scores)
    if not np.all(np.isfinite(s)) or s.min(initial=0.0) < 0 or s.max(initial=0.0) > 1:
        raise InvariantViolation("transformed scores outside [0, 1]")


# -- core operations -----------------------------------------------------------

def fit_model(cfg: RunConfig, train_path, batch_path=None):
    cols = cfg.columns
    if not cols.features:
        cols = replace(cols, features=_default_features(train_path, cols, _event_columns(cfg.general_spec)))
    train = read_data(train_path, cols, require=("protected", "label"), general_spec=cfg.general_spec)
    model = pipeline.fit(train, _spec(cfg), cfg.admm, cfg.mode, infer_protected=cfg.infer_protected,
                         l2_reg=cfg.l2_reg, delta=cfg.delta, solver=cfg.solver)
    if cfg.mode == pipeline.BATCH:
        if batch_path is None:
            raise SchemaError("--mode batch needs --batch-data")
        req = () if cfg.infer_protected else ("protected",)
        test = read_data(batch_path, replace(cols, label=None), require=req, groups=train.groups)
        model = pipeline.fit_batch(model, test, cfg.admm, cfg.solver)
    check_model(model)
    return model, cols, train


def transform_rows(model, columns: Columns, data: Dataset):
    """Header and rows of the transformed table, plus the raw arrays."""
    r, mu, rp = pipeline.transform_details(model, data)
    check_scores(rp)
    header = list(data.extra["header"]) + ["original_score", "mu", "transformed_score"]
    if model.threshold is not None:
        header.append("binary_prediction")
    rows = []
    for k, row in enumerate(data.extra["rows"]):
        out = list(row) + [fmt(r[k]), fmt(mu[k]), fmt(rp[k])]
        if model.threshold is not None:
            out.append(str(int(rp[k] > model.threshold)))
        rows.append(out)
    return header, rows, (r, mu, rp)


def _read_for_model(path, model, columns: Columns, general, require=()):
    req = list(require)
    if model.group_model is None:
        req.append("protected")
    if model.score_model is None:
        req.append("score")
    return read_data(path, columns, require=req, groups=model.groups, general_spec=general)


def evaluate_arrays(scores, labels, groups, threshold, original=None, group_names=None) -> dict:
    rep = metrics.evaluate(scores, labels, groups, threshold=threshold, original_scores=original,
                           group_names=group_names).to_dict()
    if original is not None:
        orig = metrics.evaluate(original, labels, groups, threshold=threshold,
                                group_names=group_names).to_dict()
        rep["original"] = {k: orig[k] for k in ("brier", "auc", "accuracy", "msp_gap",
                                                "geo_gap", "sp_gap", "eo_gap")}
    return rep


def _fit_summary(model: pipeline.FstModel) -> dict:
    s = dict(model.solution or {})
    return {"constraint": model.spec.kind, "epsilon": model.spec.epsilon, "mode": model.mode,
            "lambda": model.lam.tolist(), "threshold": model.threshold, **s}


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    rates = tuple(float(v) for v in args.base_rates.split(","))
    cfg = synth.SynthConfig(n=args.n, group_fraction=args.group_fraction, base_rates=rates,
                            signal=args.signal, proxy=args.proxy, seed=args.seed,
                            test_fraction=args.test_fraction)
    train, test = synth.split(synth.generate_rows(cfg), cfg.test_fraction)
    synth.write_rows(args.out, train, args.with_score)
    written = {"train": {"path": os.path.basename(args.out), "n": int(train.shape[0])}}
    if test.size:
        test_path = args.test_out or _sibling(args.out, "test")
        synth.write_rows(test_path, test, args.with_score)
        written["test"] = {"path": os.path.basename(test_path), "n": int(test.shape[0])}
    sys.stdout.write(report_text(written))
    return EXIT_OK


def _sibling(path, tag):
    root, ext = os.path.splitext(path)
    return f"{root}_{tag}{ext or '.csv'}"


def cmd_fit(args) -> int:
    cfg = run_config(args)
    model, cols, _ = fit_model(cfg, args.data, args.batch_data)
    save_model(args.out, model, cols, cfg.general_spec)
    sys.stdout.write(report_text(_fit_summary(model)))
    if not model.solution.get("converged", True):
        raise NotConverged("ADMM did not converge; model written with converged=false")
    return EXIT_OK


def cmd_transform(args) -> int:
    model, cols, general = load_model(args.model)
    cols = _override(cols, args)
    data = _read_for_model(args.data, model, cols, general)
    header, rows, _ = transform_rows(model, cols, data)
    write_csv(args.out, header, rows)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    model, cols, general = load_model(args.model)
    cols = _override(cols, args)
    data = _read_for_model(args.data, model, cols, general)
    wd = pipeline.preprocess(model, data)
    header = list(cols.features) + ["y_prime", "weight"]
    rows = [[fmt(v) for v in x] + [str(int(y)), fmt(w)]
            for x, y, w in zip(wd.features, wd.y_prime, wd.weight)]
    write_csv(args.out, header, rows)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.model:
        model, cols, general = load_model(args.model)
        cols = _override(cols, args)
        data = _read_for_model(args.data, model, cols, general, require=("label", "protected"))
        r, _, rp = pipeline.transform_details(model, data)
        check_scores(rp)
        threshold = args.threshold if args.threshold is not None else (
            model.threshold if model.threshold is not None else 0.5)
        rep = evaluate_arrays(rp, data.label, data.protected, threshold, r, data.groups)
    else:
        cols = Columns((), args.protected_col or "group", args.label_col or "label",
                       args.score_col or "transformed_score")
        data = read_data(args.data, cols, require=("protected", "label", "score"))
        header, rows = data.extra["header"], data.extra["rows"]
        original = None
        if "original_score" in header and cols.score != "original_score":
            j = header.index("original_score")
            original = np.array([float(row[j]) for row in rows])
        threshold = 0.5 if args.threshold is None else args.threshold
        rep = evaluate_arrays(data.base_scores, data.label, data.protected, threshold,
                              original, data.groups)
    _emit(report_text(rep), args.out)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = run_config(args)
    os.makedirs(args.out, exist_ok=True)
    model, cols, train = fit_model(cfg, args.data, args.test if cfg.mode == pipeline.BATCH else None)
    save_model(os.path.join(args.out, "model.json"), model, cols, cfg.general_spec)
    threshold = model.threshold if model.threshold is not None else 0.5
    report = {"fit": _fit_summary(model)}
    splits = [("train", args.data)] + ([("test", args.test)] if args.test else [])
    for name, path in splits:
        data = train if name == "train" else _read_for_model(path, model, cols, cfg.general_spec,
                                                             require=("label", "protected"))
        header, rows, (r, _, rp) = transform_rows(model, cols, data)
        write_csv(os.path.join(args.out, f"{name}_scores.csv"), header, rows)
        report[name] = evaluate_arrays(rp, data.label, data.protected, threshold, r, data.groups)
    _emit(report_text(report), os.path.join(args.out, "report.json"))
    if not model.solution.get("converged", True):
        raise NotConverged("ADMM did not converge")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def run_config(args) -> RunConfig:
    general = None
    if args.general_spec:
        try:
            with open(args.general_spec, encoding="utf-8") as fh:
                general = json.load(fh)
        except (OSError, ValueError) as exc:
            raise SchemaError(f"cannot read general spec: {exc}") from None
        for key in ("b", "c", "event_cols"):
            if key not in general:
                raise SchemaError(f"general spec lacks '{key}'")
    admm = AdmmConfig(rho=args.rho, max_iter=args.max_iter)
    cols = Columns(_feature_list(args.features), args.protected_col or "group",
                   args.label_col or "label", args.score_col)
    return RunConfig(constraint=args.constraint, epsilon=args.epsilon, mode=args.mode, columns=cols,
                     delta=args.delta, l2_reg=args.l2, admm=admm, solver=args.solver,
                     infer_protected=args.infer_protected, general_spec=general, seed=args.seed)


def _columns_args(p, score_default=None):
    p.add_argument("--protected-col", default=None, help="protected attribute column (default: group)")
    p.add_argument("--label-col", default=None, help="label column (default: label)")
    p.add_argument("--score-col", default=score_default, help="base score column")


def _fit_args(p):
    p.add_argument("data", help="training CSV")
    p.add_argument("--constraint", choices=KINDS, default=MSP)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--mode", choices=pipeline.MODES, default=pipeline.POST)
    _columns_args(p)
    p.add_argument("--features", default=None,
                   help="comma-separated feature columns (default: all unbound columns)")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="probability floor")
    p.add_argument("--l2", type=float, default=1e-3, help="ridge penalty of the internal models")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--solver", choices=pipeline.SOLVERS, default="admm")
    p.add_argument("--infer-protected", action="store_true",
                   help="fit a group model so transform does not need the protected column")
    p.add_argument("--general-spec", default=None,
                   help="JSON with b, c, event_cols and optional marginals/epsilon")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairscore", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a seeded two-group fixture")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--group-fraction", type=float, default=0.5)
    p.add_argument("--base-rates", default="0.7,0.3")
    p.add_argument("--signal", type=float, default=1.5)
    p.add_argument("--proxy", type=float, default=1.0)
    p.add_argument("--test-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-score", action="store_true", help="add the Bayes-posterior score column")
    p.add_argument("--out", required=True, help="train CSV path")
    p.add_argument("--test-out", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a model and write it as JSON")
    _fit_args(p)
    p.add_argument("--batch-data", default=None, help="unlabeled rows for --mode batch")
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transform", help="append transformed scores to a CSV")
    p.add_argument("model")
    p.add_argument("data")
    _columns_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("preprocess", help="emit the weighted dataset of a pre-processing model")
    p.add_argument("model")
    p.add_argument("data")
    _columns_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("evaluate", help="metrics report for a scored CSV or a model + data")
    p.add_argument("data")
    p.add_argument("--model", default=None)
    _columns_args(p)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", default=None, help="also write the report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="fit, transform and evaluate in one pass")
    _fit_args(p)
    p.add_argument("--test", default=None, help="held-out CSV (also the batch rows in batch mode)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NotConverged as exc:
        sys.stderr.write(f"fairscore: {exc}\n")
        return EXIT_NONCONVERGED
    except InvariantViolation as exc:
        sys.stderr.write(f"fairscore: invariant violated: {exc}\n")
        return EXIT_INVARIANT
    except (SchemaError, ValueError, OSError) as exc:
        sys.stderr.write(f"fairscore: {exc}\n")
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
