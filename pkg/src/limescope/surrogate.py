"""Locally weighted ridge surrogate and the explanation it produces.

The fit minimizes sum_i w_i (y_i - b0 - x_i . beta)^2 + lambda * |beta|^2
with the intercept left unpenalized. It is solved by normal equations on
weighted-centered data:

    A beta = b,   A = Xc' W Xc + lambda I,   b = Xc' W yc
    b0 = ybar - xbar . beta

where Xc, yc are X, y minus their weighted means. With lambda = 0 a
singular system falls back to the minimum-norm least-squares solution and
is flagged. Every fit reports the normal-equation residual in the max norm;
the contract is residual < 1e-8.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .dataset import ClassLabel
from .errors import ContractError, UndefinedMetricError
from .fileio import read_json, write_json
from .overlay import rank_segments
from .perturb import PerturbationBatch
from .validation import check_sample_weights

RESIDUAL_CONTRACT = 1e-8


@dataclass(frozen=True)
class RidgeConfig:
    """Penalty strength and how many segments an explanation keeps."""

    ridge_lambda: float = 1.0
    top_k: int = 5

    def __post_init__(self):
        if self.ridge_lambda < 0:
            raise ContractError(f"ridge_lambda must be >= 0, got {self.ridge_lambda}")
        if self.top_k < 1:
            raise ContractError(f"top_k must be >= 1, got {self.top_k}")


@dataclass(frozen=True)
class RidgeFit:
    """Solution of one weighted ridge problem plus solve diagnostics."""

    coef: np.ndarray
    intercept: float
    normal_residual: float
    singular: bool


def fit_weighted_ridge(X, y, sample_weight, ridge_lambda: float) -> RidgeFit:
    """Solve the weighted ridge normal equations; intercept unpenalized.

    Requires n >= 2 rows and at least one positive weight. With
    ridge_lambda = 0 on a singular design the minimum-norm solution is
    returned with singular=True.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ContractError(f"X must be 2-d, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise ContractError(f"need >= 2 samples, got {n}")
    if y.shape != (n,):
        raise ContractError(f"y must have shape ({n},), got {y.shape}")
    if ridge_lambda < 0:
        raise ContractError(f"ridge_lambda must be >= 0, got {ridge_lambda}")
    w = check_sample_weights(sample_weight, n)

    w_sum = float(w.sum())
    x_bar = (w @ X) / w_sum
    y_bar = float(w @ y) / w_sum
    Xc = X - x_bar
    yc = y - y_bar
    A = Xc.T @ (w[:, None] * Xc) + ridge_lambda * np.eye(d)
    b = Xc.T @ (w * yc)

    singular = False
    if ridge_lambda > 0:
        coef = np.linalg.solve(A, b)
    else:
        coef, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
        singular = rank < d

    intercept = y_bar - float(x_bar @ coef)
    residual_beta = float(np.max(np.abs(A @ coef - b))) if d else 0.0
    residual_intercept = abs(float(w @ (y - intercept - X @ coef)))
    return RidgeFit(
        coef=coef,
        intercept=intercept,
        normal_residual=max(residual_beta, residual_intercept),
        singular=singular,
    )


def weighted_r2(X, y, sample_weight, coef, intercept: float) -> float:
    """Weighted coefficient of determination 1 - SS_res / SS_tot.

    Undefined (raises UndefinedMetricError) when the weighted variance of y
    is zero.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    coef = np.asarray(coef, dtype=np.float64)
    w = check_sample_weights(sample_weight, y.size)
    y_hat = intercept + X @ coef
    y_bar = float(w @ y) / float(w.sum())
    ss_tot = float(w @ (y - y_bar) ** 2)
    if ss_tot == 0.0:
        raise UndefinedMetricError("weighted variance of y is zero; r2 undefined")
    ss_res = float(w @ (y - y_hat) ** 2)
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class Provenance:
    """Everything needed to reproduce an explanation."""

    seed: int
    n_samples: int
    kernel_width: float
    ridge_lambda: float
    top_k: int
    model_id: str
    n_segments: int

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_samples": self.n_samples,
            "kernel_width": self.kernel_width,
            "ridge_lambda": self.ridge_lambda,
            "top_k": self.top_k,
            "model_id": self.model_id,
            "n_segments": self.n_segments,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Provenance":
        return cls(
            seed=int(obj["seed"]),
            n_samples=int(obj["n_samples"]),
            kernel_width=float(obj["kernel_width"]),
            ridge_lambda=float(obj["ridge_lambda"]),
            top_k=int(obj["top_k"]),
            model_id=str(obj["model_id"]),
            n_segments=int(obj["n_segments"]),
        )


@dataclass(frozen=True, eq=False)
class Explanation:
    """Per-segment contributions to one prediction.

    `selected` holds at most top_k segment ids ordered by |weight|
    descending; it is empty and `degenerate` is True when the model gave
    constant predictions over the whole batch (r2 is undefined then).
    """

    target_class: ClassLabel
    weights: np.ndarray
    intercept: float
    r2: float | None
    selected: tuple[int, ...]
    provenance: Provenance
    degenerate: bool = False
    singular: bool = False
    normal_residual: float = 0.0

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64).copy()
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        if self.r2 is not None and self.r2 > 1.0 + 1e-12:
            raise ContractError(f"r2 must be <= 1, got {self.r2}")
        ids = list(self.selected)
        if len(set(ids)) != len(ids) or any(not 0 <= s < weights.size for s in ids):
            raise ContractError(f"selected ids must be distinct and in [0, {weights.size})")
        mags = [abs(float(weights[s])) for s in ids]
        if any(a < b for a, b in zip(mags, mags[1:])):
            raise ContractError("selected ids must be ordered by non-increasing |weight|")

    def to_json_dict(self) -> dict:
        return {
            "target_class": {"value": self.target_class.value, "name": self.target_class.name},
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "r2": self.r2,
            "selected": list(self.selected),
            "degenerate": self.degenerate,
            "singular": self.singular,
            "normal_residual": self.normal_residual,
            "provenance": self.provenance.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Explanation":
        return cls(
            target_class=ClassLabel(int(obj["target_class"]["value"]), str(obj["target_class"]["name"])),
            weights=np.asarray(obj["weights"], dtype=np.float64),
            intercept=float(obj["intercept"]),
            r2=None if obj["r2"] is None else float(obj["r2"]),
            selected=tuple(int(s) for s in obj["selected"]),
            provenance=Provenance.from_json_dict(obj["provenance"]),
            degenerate=bool(obj["degenerate"]),
            singular=bool(obj["singular"]),
            normal_residual=float(obj["normal_residual"]),
        )

    def save(self, path) -> None:
        write_json(path, self.to_json_dict())

    @classmethod
    def load(cls, path) -> "Explanation":
        return cls.from_json_dict(read_json(path))

    def render_text(self) -> str:
        """Human-readable top-K table with signed weights."""
        lines = [
            f"explanation for class {self.target_class.value} ({self.target_class.name})",
            f"  samples={self.provenance.n_samples} seed={self.provenance.seed} "
            f"sigma={self.provenance.kernel_width} lambda={self.provenance.ridge_lambda}",
        ]
        if self.degenerate:
            lines.append("  DEGENERATE: constant model output, no segment ranking")
            return "\n".join(lines) + "\n"
        lines.append(f"  r2={self.r2:.4f} intercept={self.intercept:+.4f}")
        lines.append("  rank  segment   weight")
        for rank, seg in enumerate(self.selected, start=1):
            lines.append(f"  {rank:>4}  {seg:>7}  {self.weights[seg]:+.5f}")
        return "\n".join(lines) + "\n"


def explain(
    batch: PerturbationBatch,
    target_class: ClassLabel | None = None,
    config: RidgeConfig = RidgeConfig(),
) -> Explanation:
    """Fit the weighted surrogate on a completed batch.

    When target_class is omitted, the model's predicted class on the
    original image (row 0, ties toward the lower label) is explained.
    Constant model output yields a flagged degenerate explanation instead of
    an error so batch pipelines keep going.
    """
    if not batch.complete:
        raise ContractError("batch predictions are not filled; run build_batch with a model first")
    if target_class is None:
        idx = int(np.argmax(batch.predictions[0]))
        target_class = ClassLabel(idx, batch.class_names[idx])
    if not 0 <= target_class.value < len(batch.class_names):
        raise ContractError(
            f"target class {target_class.value} out of range for {len(batch.class_names)} classes"
        )

    provenance = Provenance(
        seed=batch.seed,
        n_samples=batch.n_samples,
        kernel_width=batch.kernel_width,
        ridge_lambda=config.ridge_lambda,
        top_k=config.top_k,
        model_id=batch.model_id,
        n_segments=batch.n_segments,
    )
    y = batch.predictions[:, target_class.value]
    active = y[batch.weights > 0]
    if float(np.ptp(active)) == 0.0:
        return Explanation(
            target_class=target_class,
            weights=np.zeros(batch.n_segments),
            intercept=float(active[0]),
            r2=None,
            selected=(),
            provenance=provenance,
            degenerate=True,
        )

    fit = fit_weighted_ridge(batch.masks, y, batch.weights, config.ridge_lambda)
    r2 = weighted_r2(batch.masks, y, batch.weights, fit.coef, fit.intercept)
    selected = tuple(rank_segments(fit.coef, config.top_k))
    return Explanation(
        target_class=target_class,
        weights=fit.coef,
        intercept=fit.intercept,
        r2=r2,
        selected=selected,
        provenance=provenance,
        degenerate=False,
        singular=fit.singular,
        normal_residual=fit.normal_residual,
    )


class WeightedRidge(BaseEstimator):
    """Sklearn-style estimator around fit_weighted_ridge.

    fit(X, y, sample_weight) exposes coef_, intercept_, normal_residual_
    and singular_; score() is the weighted r2.
    """

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def fit(self, X, y, sample_weight=None):
        X = np.asarray(X, dtype=np.float64)
        if sample_weight is None:
            sample_weight = np.ones(X.shape[0])
        result = fit_weighted_ridge(X, y, sample_weight, self.alpha)
        self.coef_ = result.coef
        self.intercept_ = result.intercept
        self.normal_residual_ = result.normal_residual
        self.singular_ = result.singular
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        return self.intercept_ + X @ self.coef_

    def score(self, X, y, sample_weight=None):
        X = np.asarray(X, dtype=np.float64)
        if sample_weight is None:
            sample_weight = np.ones(X.shape[0])
        return weighted_r2(X, y, sample_weight, self.coef_, self.intercept_)
