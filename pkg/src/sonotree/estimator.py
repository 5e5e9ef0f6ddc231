"""scikit-learn compatible front end for the gated fusion classifier."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .fusion import (
    DEFAULT_CLASSES,
    DEFAULT_D,
    DEFAULT_DT,
    DEFAULT_RANK,
    FusionBatch,
    FusionConfig,
    forward,
    init_params,
    predict as fusion_predict,
    train as fusion_train,
)
from .numerics import ContractViolation, MinMaxScaler, Rng


def _check_inputs(x: dict, require_numeric: bool) -> None:
    required = ["coarse", "mid", "fine", "text"]
    missing = [k for k in required if k not in x]
    if missing:
        raise ContractViolation(f"input dict missing keys: {missing}")
    if require_numeric and "numeric" not in x:
        raise ContractViolation("use_numeric=True requires a 'numeric' array")
    lengths = {k: np.asarray(v).shape[0] for k, v in x.items()}
    if len(set(lengths.values())) > 1:
        raise ContractViolation(f"input arrays disagree on length: {lengths}")


class GatedFusionClassifier(BaseEstimator, ClassifierMixin):
    """fit/predict over multimodal inputs.

    ``X`` is a dict of arrays: "coarse"/"mid"/"fine" (n, 400), "text"
    (n, 768), and optionally "numeric" (n, 8 raw, one-hot sex + 6 continuous
    columns; the continuous part is min-max scaled on the training data).
    """

    def __init__(self, levels=("c", "m", "f"), use_numeric=True, use_rag=True,
                 use_lora=True, gate_mode="hard", rank=DEFAULT_RANK,
                 d=DEFAULT_D, dt=DEFAULT_DT, lr=1e-3, batch_size=32,
                 epochs=100, seed=0):
        self.levels = levels
        self.use_numeric = use_numeric
        self.use_rag = use_rag
        self.use_lora = use_lora
        self.gate_mode = gate_mode
        self.rank = rank
        self.d = d
        self.dt = dt
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def _config(self) -> FusionConfig:
        return FusionConfig(levels=tuple(self.levels),
                            use_numeric=self.use_numeric,
                            use_rag=self.use_rag, use_lora=self.use_lora,
                            gate_mode=self.gate_mode)

    def _batch(self, x: dict, y=None) -> FusionBatch:
        _check_inputs(x, self.use_numeric)
        visual = {"c": np.asarray(x["coarse"], dtype=np.float64),
                  "m": np.asarray(x["mid"], dtype=np.float64),
                  "f": np.asarray(x["fine"], dtype=np.float64)}
        numeric = None
        if self.use_numeric:
            raw = np.asarray(x["numeric"], dtype=np.float64)
            numeric = np.concatenate(
                [raw[:, :2], self.scaler_.transform(raw[:, 2:])], axis=1)
        labels = None if y is None else np.asarray(y, dtype=int)
        return FusionBatch(visual=visual,
                           text=np.asarray(x["text"], dtype=np.float64),
                           numeric_raw=numeric, labels=labels)

    def fit(self, x: dict, y):
        _check_inputs(x, self.use_numeric)
        y = np.asarray(y, dtype=int)
        self.classes_ = np.unique(y)
        self.scaler_ = MinMaxScaler()
        if self.use_numeric:
            self.scaler_.fit(np.asarray(x["numeric"], dtype=np.float64)[:, 2:])
        rng = Rng(self.seed)
        params = init_params(rng, d=self.d, dt=self.dt, rank=self.rank,
                             classes=max(DEFAULT_CLASSES, self.classes_.size),
                             numeric=self.use_numeric)
        batch = self._batch(x, y)
        self.params_, self.history_ = fusion_train(
            batch, params, self._config(), rng=rng.derive(1), lr=self.lr,
            batch_size=self.batch_size, epochs=self.epochs)
        return self

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise ContractViolation("classifier is not fitted")

    def predict(self, x: dict) -> np.ndarray:
        self._require_fitted()
        labels, _, _ = fusion_predict(self._batch(x), self.params_, self._config())
        return labels

    def predict_proba(self, x: dict) -> np.ndarray:
        self._require_fitted()
        _, probs, _ = fusion_predict(self._batch(x), self.params_, self._config())
        return probs

    def gate_decisions(self, x: dict):
        """Which visual level the router picked per sample (interpretability)."""
        self._require_fitted()
        _, _, gate = fusion_predict(self._batch(x), self.params_, self._config())
        return gate

    def score(self, x: dict, y) -> float:
        return float(np.mean(self.predict(x) == np.asarray(y, dtype=int)))

    def loss(self, x: dict, y) -> float:
        self._require_fitted()
        trace = forward(self._batch(x, y), self.params_, self._config())
        return trace.loss / len(y)
