"""scikit-learn style estimators wrapping the hybrid models.

The estimators own preprocessing: ``fit`` standardizes features, clips and
standardizes regression targets (or encodes class labels) using the
training data only, and ``predict`` returns values in the original units.

>>> from vqcbench.estimators import VQCRegressor
>>> est = VQCRegressor(architecture="fc_vqc", epochs=50, random_state=0)
>>> est.fit(X_train, y_train, eval_set=(X_val, y_val)).predict(X_test)  # doctest: +SKIP
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .archs import HybridModel, ModelConfig
from .autodiff import softmax
from .datapipe import CLIP_PERCENT, TabularPreprocessor
from .exceptions import ConfigurationError
from .loop import fit_full_batch
from .noisesim import check_probability
from .seeding import make_rng


class _VQCBase(BaseEstimator):
    _task = "regression"

    def __init__(
        self,
        architecture: str = "fc_vqc",
        depth: int = 3,
        heads: int = 1,
        connectivity: str = "type4",
        layernorm=None,
        attention: bool = True,
        stages: int = 4,
        ffn_stages=None,
        final_depth=None,
        readout_skip: bool = False,
        hidden_sizes=None,
        mlp_target: int = 720,
        epochs: int = 2000,
        learning_rate: float = 0.005,
        clip_norm: float = 1.0,
        noise: float = 0.0,
        clip_percent: float = CLIP_PERCENT,
        random_state: int = 0,
    ):
        self.architecture = architecture
        self.depth = depth
        self.heads = heads
        self.connectivity = connectivity
        self.layernorm = layernorm
        self.attention = attention
        self.stages = stages
        self.ffn_stages = ffn_stages
        self.final_depth = final_depth
        self.readout_skip = readout_skip
        self.hidden_sizes = hidden_sizes
        self.mlp_target = mlp_target
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.noise = noise
        self.clip_percent = clip_percent
        self.random_state = random_state

    def _model_config(self, n_features: int, n_classes: int) -> ModelConfig:
        return ModelConfig(
            architecture=self.architecture, n_features=n_features, task=self._task,
            n_classes=n_classes, depth=self.depth, heads=self.heads,
            connectivity=self.connectivity, layernorm=self.layernorm,
            attention=self.attention, stages=self.stages, ffn_stages=self.ffn_stages,
            final_depth=self.final_depth, readout_skip=self.readout_skip,
            hidden_sizes=None if self.hidden_sizes is None else tuple(self.hidden_sizes),
            mlp_target=self.mlp_target,
        )

    def fit(self, X, y, eval_set=None, objective=None):
        """Train on ``(X, y)``; ``eval_set=(X_val, y_val)`` drives checkpoint selection."""
        X, y = check_X_y(X, y, dtype=float, y_numeric=self._task == "regression")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        check_probability(self.noise)
        pre = TabularPreprocessor(task=self._task, clip_percent=self.clip_percent).fit(X, y)
        n_classes = len(pre.classes_) if self._task == "classification" else 1
        if self._task == "classification" and n_classes < 2:
            raise ConfigurationError("training labels hold a single class")
        model = HybridModel(self._model_config(pre.n_features_out, n_classes))
        params = model.init_params(make_rng(self.random_state, "init"))
        Xt, yt = pre.transform(X), pre.transform_target(y)
        Xv = yv = None
        if eval_set is not None:
            Xv_raw, yv_raw = check_X_y(*eval_set, dtype=float, y_numeric=self._task == "regression")
            Xv, yv = pre.transform(Xv_raw), pre.transform_target(yv_raw)
        if objective is not None:
            objective = objective(model, Xt, yt)
        result = fit_full_batch(
            model, params, Xt, yt, Xv, yv, epochs=self.epochs, learning_rate=self.learning_rate,
            clip_norm=self.clip_norm, p_d=self.noise, objective=objective,
        )
        self.preprocessor_ = pre
        self.model_ = model
        self.params_ = result.best_params
        self.fit_result_ = result
        self.n_features_in_ = X.shape[1]
        if self._task == "classification":
            self.classes_ = pre.classes_
        return self

    def _raw_output(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        Xt = self.preprocessor_.transform(X)
        return self.model_.forward(self.params_, Xt, p_d=self.noise).value

    @property
    def param_breakdown_(self):
        check_is_fitted(self, "model_")
        return self.model_.count_params()


class VQCRegressor(RegressorMixin, _VQCBase):
    """Regressor; ``predict`` returns targets in original units."""

    _task = "regression"

    def predict(self, X) -> np.ndarray:
        raw = self._raw_output(X)
        return self.preprocessor_.inverse_transform_target(raw)


class VQCClassifier(ClassifierMixin, _VQCBase):
    """Multi-class classifier over the labels seen during ``fit``."""

    _task = "classification"

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self._raw_output(X), axis=1)

    def predict(self, X) -> np.ndarray:
        raw = self._raw_output(X)
        return self.preprocessor_.inverse_transform_target(np.argmax(raw, axis=1))
