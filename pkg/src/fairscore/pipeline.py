"""Fit, transform, pre-process and binarize: the FairScoreTransformer workflow.

1. estimate the original score and the group/label probabilities,
2. solve the dual for lambda (``fit``),
3. transform scores in closed form (``transform``),
4. emit a weighted dataset for pre-processing (``preprocess``),
5. pick an accuracy-maximizing threshold (``select_threshold``).

``fit_batch`` re-solves the dual on unlabeled test rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import estimators
from .constraints import (
    DEFAULT_DELTA,
    GENERAL,
    GEO,
    MSP,
    ConstraintFeatures,
    ConstraintSpec,
    ProbabilityEstimates,
    build_features_general,
    build_features_geo,
    build_features_msp,
    estimate_marginals,
    estimate_marginals_unlabeled,
)
from .core_transform import transform_score
from .data import Dataset
from .dual_solver import AdmmConfig, DualSolution, solve_dual_admm, solve_dual_admm_alt

POST, PRE, BATCH = "post", "pre", "batch"
MODES = (POST, PRE, BATCH)
SOLVERS = ("admm", "admm_alt")

MODEL_FORMAT = "fairscore-model"
MODEL_VERSION = 1


class ModeError(ValueError):
    """Operation not valid for the mode the model was fitted in."""


@dataclass(frozen=True)
class FstModel:
    spec: ConstraintSpec
    est: ProbabilityEstimates
    lam: np.ndarray
    mode: str = POST
    groups: tuple = (0, 1)
    score_model: Optional[estimators.LogisticModel] = None
    group_model: Optional[estimators.MultinomialModel] = None
    threshold: Optional[float] = None
    solution: Optional[dict] = None
    feature_names: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.threshold is not None and not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))

    @property
    def infers_protected(self) -> bool:
        return self.group_model is not None

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        spec = {"kind": self.spec.kind, "epsilon": float(self.spec.epsilon)}
        if self.spec.kind == GENERAL:
            spec["b"] = self.spec.b.tolist()
            spec["c"] = self.spec.c.tolist()
            spec["marginals"] = np.asarray(self.spec.marginals).tolist()
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "mode": self.mode,
            "constraint": spec,
            "groups": list(self.groups),
            "feature_names": list(self.feature_names),
            "estimates": {
                "delta": self.est.delta,
                "p_A": self.est.p_A.tolist(),
                "p_Y": self.est.p_Y.tolist(),
                "p_A_given_Y": self.est.p_A_given_Y.tolist(),
            },
            "lambda": self.lam.tolist(),
            "threshold": self.threshold,
            "score_model": None if self.score_model is None else self.score_model.to_dict(),
            "group_model": None if self.group_model is None else self.group_model.to_dict(),
            "solution": self.solution,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FstModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a fairscore model file")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        c = d["constraint"]
        if c["kind"] == GENERAL:
            spec = ConstraintSpec(GENERAL, c["epsilon"], b=c["b"], c=c["c"])
            spec = replace(spec, marginals=np.array(c["marginals"], dtype=float))
        else:
            spec = ConstraintSpec(c["kind"], c["epsilon"])
        e = d["estimates"]
        est = ProbabilityEstimates(np.array(e["p_A"]), np.array(e["p_Y"]),
                                   np.array(e["p_A_given_Y"]), float(e["delta"]))
        sm = d.get("score_model")
        gm = d.get("group_model")
        return cls(
            spec=spec,
            est=est,
            lam=np.array(d["lambda"], dtype=float),
            mode=d["mode"],
            groups=tuple(d["groups"]),
            score_model=None if sm is None else estimators.LogisticModel.from_dict(sm),
            group_model=None if gm is None else estimators.MultinomialModel.from_dict(gm),
            threshold=d.get("threshold"),
            solution=d.get("solution"),
            feature_names=tuple(d.get("feature_names", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "FstModel":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class WeightedDataset:
    """Two rows per source row: label 0 with weight ``1 - r'``, then label 1 with ``r'``."""

    features: np.ndarray
    y_prime: np.ndarray
    weight: np.ndarray
    source: np.ndarray


# -- helpers ------------------------------------------------------------------

def original_scores(model: FstModel, data: Dataset) -> np.ndarray:
    """Base scores when the dataset has them, else the fitted score model."""
    if data.base_scores is not None:
        return np.asarray(data.base_scores, dtype=float)
    if model.score_model is None:
        raise ValueError("dataset has no base scores and the model has no score model")
    return estimators.predict_proba(model.score_model, data.features)


def _group_input(data: Dataset, kind: str, group_model):
    """Observed group codes, or inferred posteriors when a group model is present."""
    if group_model is not None:
        x = data.features
        if kind == GEO:
            # p(a | x, y) evaluated at both labels, shape (n, K, 2)
            return np.stack([
                estimators.predict_multinomial(group_model, np.hstack([x, np.full((data.n, 1), y)]))
                for y in (0, 1)], axis=2)
        return estimators.predict_multinomial(group_model, x)
    if data.protected is None:
        raise ValueError("protected attribute missing and no group model was fitted")
    return data.protected


def constraint_features(spec: ConstraintSpec, est: ProbabilityEstimates, data: Dataset,
                        scores, group_model=None) -> ConstraintFeatures:
    if spec.kind == MSP:
        return build_features_msp(_group_input(data, MSP, group_model), est)
    if spec.kind == GEO:
        return build_features_geo(scores, _group_input(data, GEO, group_model), est)
    if data.events is None:
        raise ValueError("general constraints need per-sample event posteriors (Dataset.events)")
    return build_features_general(replace(spec, posteriors=data.events))


def _solve(features, scores, spec, est, config, solver) -> DualSolution:
    if solver == "admm_alt":
        return solve_dual_admm_alt(features, scores, spec.epsilon, est, config)
    if solver != "admm":
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    return solve_dual_admm(features, scores, spec.epsilon, config)


def _summary(sol: DualSolution, spec: ConstraintSpec, n: int) -> dict:
    out = {"objective": sol.objective, "iterations": sol.iterations,
           "converged": sol.converged, "primal_residual": sol.primal_residual,
           "dual_residual": sol.dual_residual, "lambda_l1": float(np.abs(sol.lam).sum()),
           "n": n}
    if spec.kind != GENERAL:
        out["lambda_l1_bound"] = float(np.log(2.0) / spec.epsilon)
    return out


# -- the five steps -----------------------------------------------------------

def fit(train: Dataset, spec: ConstraintSpec, config: AdmmConfig = AdmmConfig(),
        mode: str = POST, *, infer_protected: bool = False, l2_reg: float = 1e-3,
        delta: float = DEFAULT_DELTA, solver: str = "admm", binarize: bool = True) -> FstModel:
    """Estimate probabilities, solve the dual and (optionally) pick a threshold.

    Base scores on the dataset take precedence over fitting the internal
    logistic score model. With ``infer_protected`` a softmax model for
    ``p(a | x)`` (MSP) or ``p(a | x, y)`` (GEO) is fitted and used in place
    of the observed attribute, at fit and at transform time.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if train.label is None:
        raise ValueError("training data needs labels")
    if train.protected is None:
        raise ValueError("training data needs the protected attribute")
    counts = np.bincount(train.protected, minlength=train.n_groups)
    if np.any(counts == 0):
        empty = [train.groups[k] for k in np.flatnonzero(counts == 0)]
        raise ValueError(f"empty protected group(s) in training data: {empty}")

    score_model = None
    if train.base_scores is None:
        if train.features.shape[1] == 0:
            raise ValueError("no base scores and no features to fit a score model")
        score_model = estimators.fit_logistic(train.features, train.label, train.weights, l2_reg)
        scores = estimators.predict_proba(score_model, train.features)
    else:
        scores = np.asarray(train.base_scores, dtype=float)

    est = estimate_marginals(train, delta)

    group_model = None
    if infer_protected:
        if spec.kind == GENERAL:
            raise ValueError("protected-attribute inference applies to MSP/GEO presets only")
        x = train.features
        if spec.kind == GEO:
            x = np.hstack([x, train.label[:, None].astype(float)])
        group_model = estimators.fit_multinomial(x, train.protected, train.n_groups,
                                                 train.weights, l2_reg)

    if spec.kind == GENERAL and spec.marginals is None:
        if train.events is None:
            raise ValueError("general constraints need per-sample event posteriors")
        spec = replace(spec, marginals=train.events.mean(axis=0))

    features = constraint_features(spec, est, train, scores, group_model)
    sol = _solve(features, scores, spec, est, config, solver)

    threshold = None
    if binarize:
        transformed = transform_score(features.matrix @ sol.lam, scores)
        threshold = select_threshold(transformed, train.label)

    return FstModel(spec=spec, est=est, lam=sol.lam, mode=mode, groups=tuple(train.groups),
                    score_model=score_model, group_model=group_model, threshold=threshold,
                    solution=_summary(sol, spec, train.n),
                    feature_names=tuple(train.feature_names))


def transform_details(model: FstModel, data: Dataset):
    """``(original score, mu, transformed score)`` per row."""
    scores = original_scores(model, data)
    features = constraint_features(model.spec, model.est, data, scores, model.group_model)
    if features.d != model.lam.shape[0]:
        raise ValueError("lambda dimension does not match the constraint features")
    mu = features.matrix @ model.lam
    out = np.clip(transform_score(mu, scores), 0.0, 1.0)
    return scores, mu, out


def transform(model: FstModel, data: Dataset) -> np.ndarray:
    return transform_details(model, data)[2]


def preprocess(model: FstModel, train: Dataset) -> WeightedDataset:
    """Weighted dataset for a downstream modeler: rows ``(x_i, 0, 1-r'_i)``, ``(x_i, 1, r'_i)``."""
    if model.mode != PRE:
        raise ModeError("preprocess needs a model fitted in pre-processing mode")
    return weighted_dataset(train.features, transform(model, train))


def weighted_dataset(features, r_prime) -> WeightedDataset:
    """Interleave ``(x_i, 0, 1 - r'_i)`` and ``(x_i, 1, r'_i)`` for every row."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    r = np.asarray(r_prime, dtype=float).reshape(-1)
    if r.shape[0] != x.shape[0]:
        raise ValueError("features and r_prime differ in length")
    if not np.all((r >= 0) & (r <= 1)):
        raise ValueError("r_prime must lie in [0, 1]")
    # fl(1 - r) + r rounds to exactly 1 for every r in [0, 1]
    w = np.column_stack([1.0 - r, r]).reshape(-1)
    n = r.shape[0]
    return WeightedDataset(
        features=np.repeat(x, 2, axis=0),
        y_prime=np.tile([0, 1], n),
        weight=w,
        source=np.repeat(np.arange(n), 2),
    )


def select_threshold(scores, labels) -> float:
    """Smallest threshold t maximizing the accuracy of ``1(score > t)``.

    Candidates are 0, 1 and the midpoints between consecutive distinct scores.
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(int)
    if s.size == 0 or s.shape != y.shape:
        raise ValueError("need equally long, non-empty scores and labels")
    u = np.unique(s)
    cands = np.unique(np.concatenate([[0.0, 1.0], (u[:-1] + u[1:]) / 2]))
    # predicted positive iff s > t; count positives/negatives above each t
    pos_sorted = np.sort(s[y == 1])
    neg_sorted = np.sort(s[y == 0])
    tp = pos_sorted.size - np.searchsorted(pos_sorted, cands, side="right")
    fp = neg_sorted.size - np.searchsorted(neg_sorted, cands, side="right")
    correct = tp + (neg_sorted.size - fp)
    return float(cands[int(np.argmax(correct))])


def fit_batch(model: FstModel, test: Dataset, config: AdmmConfig = AdmmConfig(),
              solver: str = "admm", reestimate: bool = True) -> FstModel:
    """Re-solve lambda on unlabeled test rows, keeping the score and group models.

    With ``reestimate`` the group and label marginals are re-estimated on the
    test rows without labels, using the score as ``p(y | x)``; otherwise the
    training estimates are reused, which misstates the constraint when the
    group proportions shift between training and test.
    """
    if model.spec.kind == GENERAL:
        raise ValueError("batch refitting applies to MSP/GEO presets only")
    scores = original_scores(model, test)
    est = model.est
    if reestimate:
        groups = _group_input(test, model.spec.kind, model.group_model)
        est = estimate_marginals_unlabeled(groups, scores, est.n_groups, est.delta)
    features = constraint_features(model.spec, est, test, scores, model.group_model)
    sol = _solve(features, scores, model.spec, est, config, solver)
    return replace(model, est=est, lam=sol.lam, mode=BATCH,
                   solution=_summary(sol, model.spec, test.n))
