"""scikit-learn style wrappers around the pipeline pieces.

Feature extractors are stateless transformers; the classifiers follow the
fit / predict / predict_proba convention (get_params/set_params come from
BaseEstimator), so they compose with sklearn pipelines and model
selection utilities.

Classifier inputs are stacked spectrogram arrays: (n, 124, 154) wavelet
for the inception and backbone networks, (n, 128, 1000) log-Mel for the
embedding-based classifier. Targets may be integer labels in 0..3 or
soft-label rows of shape (n, 4).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from respkit.augment import batch_augmenter, one_hot
from respkit.dataio import AudioClip
from respkit.errors import ContractError
from respkit.features import logmel, wavelet_scalogram
from respkit.models import (
    build_backbone,
    build_inception_net,
    resolve_provider,
)
from respkit.train import (
    TrainConfig,
    embed_in_batches,
    predict_in_batches,
    train_mlp_on_embeddings,
    train_model,
)


def _as_soft_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 1:
        return np.stack([one_hot(int(v)) for v in y])
    if y.ndim == 2 and y.shape[1] == 4:
        return y.astype(np.float64)
    raise ContractError("y must be integer labels or (n, 4) soft labels")


def _clips(X) -> list[AudioClip]:
    return [x if isinstance(x, AudioClip) else AudioClip(x, 32000) for x in X]


class LogMelExtractor(TransformerMixin, BaseEstimator):
    """10-second clips -> (n, 128, 1000) log-Mel arrays."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return np.stack([logmel(c).values for c in _clips(X)])


class WaveletScalogramExtractor(TransformerMixin, BaseEstimator):
    """10-second clips -> (n, 124, 154) scalogram arrays."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return np.stack([wavelet_scalogram(c).values for c in _clips(X)])


class _TorchClassifier(ClassifierMixin, BaseEstimator):
    classes_ = np.arange(4)

    def _check_fitted(self):
        if getattr(self, "net_", None) is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lambda_reg=self.lambda_reg,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


class InceptionClassifier(_TorchClassifier):
    """One of the six Inc-0x networks over wavelet scalograms."""

    def __init__(
        self,
        spec_name="Inc-03",
        epochs=100,
        batch_size=100,
        lambda_reg=0.0001,
        learning_rate=1e-4,
        seed=0,
        augment=True,
        mixup_alpha=0.4,
    ):
        self.spec_name = spec_name
        self.epochs = epochs
        self.batch_size = batch_size
        self.lambda_reg = lambda_reg
        self.learning_rate = learning_rate
        self.seed = seed
        self.augment = augment
        self.mixup_alpha = mixup_alpha

    def _build(self):
        return build_inception_net(self.spec_name)

    def fit(self, X, y):
        import torch

        X = np.asarray(X, dtype=np.float32)
        labels = _as_soft_labels(y)
        if len(X) != len(labels):
            raise ContractError("X and y length mismatch")
        torch.manual_seed(self.seed)  # init is part of the seeded run
        augmenters = (
            batch_augmenter(mixup_alpha=self.mixup_alpha) if self.augment else None
        )
        self.net_, self.history_ = train_model(
            self._build(),
            list(zip(X, labels)),
            self._train_config(),
            augmenters=augmenters,
        )
        return self

    def predict_proba(self, X):
        self._check_fitted()
        return predict_in_batches(self.net_, np.asarray(X, dtype=np.float32))

    def embed(self, X, tap_point="GMP"):
        """Embedding tap used by the early/middle fusion strategies."""
        self._check_fitted()
        return self.net_.embedding(np.asarray(X, dtype=np.float32), tap_point)


class BackboneClassifier(InceptionClassifier):
    """One of the eight benchmark backbones over wavelet scalograms."""

    def __init__(self, name="ResNet50", **kwargs):
        super().__init__(**kwargs)
        self.name = name

    def _build(self):
        return build_backbone(self.name)

    def embed(self, X, tap_point="GMP"):
        raise ContractError("benchmark backbones expose no embedding taps")


class EmbeddingMLPClassifier(_TorchClassifier):
    """MLP head over provider embeddings of log-Mel spectrograms."""

    def __init__(
        self,
        provider_id="fixture:2048:0",
        epochs=100,
        batch_size=100,
        lambda_reg=0.0001,
        learning_rate=1e-4,
        seed=0,
    ):
        self.provider_id = provider_id
        self.epochs = epochs
        self.batch_size = batch_size
        self.lambda_reg = lambda_reg
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, X, y):
        provider = resolve_provider(self.provider_id)
        labels = _as_soft_labels(y)
        X = np.asarray(X, dtype=np.float32)
        self.net_, self.history_ = train_mlp_on_embeddings(
            provider, list(zip(X, labels)), self._train_config()
        )
        self.provider_ = provider
        return self

    def predict_proba(self, X):
        self._check_fitted()
        vectors = embed_in_batches(self.provider_, np.asarray(X, dtype=np.float32))
        return predict_in_batches(self.net_, vectors)
