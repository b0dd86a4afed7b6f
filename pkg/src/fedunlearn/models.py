"""Hand-written differentiable models over flat float64 parameter vectors.

Two architectures: multinomial logistic regression and a one-hidden-layer
perceptron (tanh or relu).  Forward and backward passes are explicit numpy;
gradients are exact analytic derivatives of the mean cross-entropy loss.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Architecture"]

_ACTIVATIONS = ("tanh", "relu")
_KINDS = ("logreg", "mlp")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class Architecture:
    """Immutable model description; parameters travel as one flat vector."""

    kind: str
    n_features: int
    n_classes: int
    hidden: int = 0
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown model kind: {self.kind}")
        if self.n_features < 1 or self.n_classes < 2:
            raise ValueError("need at least 1 feature and 2 classes")
        if self.kind == "mlp" and self.hidden < 1:
            raise ValueError("mlp needs a positive hidden width")
        if self.kind == "mlp" and self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation: {self.activation}")

    @property
    def n_params(self) -> int:
        d, c, h = self.n_features, self.n_classes, self.hidden
        if self.kind == "logreg":
            return d * c + c
        return d * h + h + h * c + c

    def init_weights(self, rng) -> np.ndarray:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        d, c, h = self.n_features, self.n_classes, self.hidden
        if self.kind == "logreg":
            w = gen.normal(0.0, 0.1, d * c)
            return np.concatenate([w, np.zeros(c)])
        w1 = gen.normal(0.0, 1.0 / np.sqrt(d), d * h)
        w2 = gen.normal(0.0, 1.0 / np.sqrt(h), h * c)
        return np.concatenate([w1, np.zeros(h), w2, np.zeros(c)])

    def _unpack(self, w: np.ndarray):
        d, c, h = self.n_features, self.n_classes, self.hidden
        if w.shape != (self.n_params,):
            raise ValueError("parameter vector has the wrong length")
        if self.kind == "logreg":
            W = w[: d * c].reshape(d, c)
            b = w[d * c :]
            return W, b
        o = 0
        W1 = w[o : o + d * h].reshape(d, h)
        o += d * h
        b1 = w[o : o + h]
        o += h
        W2 = w[o : o + h * c].reshape(h, c)
        o += h * c
        b2 = w[o:]
        return W1, b1, W2, b2

    def _probs(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        if self.kind == "logreg":
            W, b = self._unpack(w)
            return _softmax(X @ W + b)
        W1, b1, W2, b2 = self._unpack(w)
        z1 = X @ W1 + b1
        a = np.tanh(z1) if self.activation == "tanh" else np.maximum(z1, 0.0)
        return _softmax(a @ W2 + b2)

    def per_example_loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        probs = self._probs(w, X)
        picked = probs[np.arange(X.shape[0]), y]
        return -np.log(np.maximum(picked, 1e-300))

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        return float(self.per_example_loss(w, X, y).mean())

    def predict(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        return self._probs(w, X).argmax(axis=1)

    def loss_and_grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray):
        """Mean cross-entropy and its exact gradient as a flat vector."""
        n = X.shape[0]
        onehot_rows = np.arange(n)
        if self.kind == "logreg":
            W, b = self._unpack(w)
            probs = _softmax(X @ W + b)
            loss = float(-np.log(np.maximum(probs[onehot_rows, y], 1e-300)).mean())
            delta = probs.copy()
            delta[onehot_rows, y] -= 1.0
            delta /= n
            grad = np.concatenate([(X.T @ delta).ravel(), delta.sum(axis=0)])
            return loss, grad

        W1, b1, W2, b2 = self._unpack(w)
        z1 = X @ W1 + b1
        if self.activation == "tanh":
            a = np.tanh(z1)
            act_grad = 1.0 - a * a
        else:
            a = np.maximum(z1, 0.0)
            act_grad = (z1 > 0.0).astype(np.float64)
        probs = _softmax(a @ W2 + b2)
        loss = float(-np.log(np.maximum(probs[onehot_rows, y], 1e-300)).mean())
        delta2 = probs.copy()
        delta2[onehot_rows, y] -= 1.0
        delta2 /= n
        d_w2 = a.T @ delta2
        d_b2 = delta2.sum(axis=0)
        delta1 = (delta2 @ W2.T) * act_grad
        d_w1 = X.T @ delta1
        d_b1 = delta1.sum(axis=0)
        grad = np.concatenate([d_w1.ravel(), d_b1, d_w2.ravel(), d_b2])
        return loss, grad
