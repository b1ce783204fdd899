"""Convex, coordinate-separable losses normalized to be 1-Lipschitz in the action."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = ["LossFn", "make_loss", "LOSS_KINDS"]

LOSS_KINDS = ("squared", "absolute", "pinball")


@dataclass(frozen=True)
class LossFn:
    """``u(y, x) = weight / (n * L_raw) * sum_k l(y_k, x_k)``.

    ``l`` is the raw scalar loss and ``L_raw`` its Lipschitz constant in the
    first argument on ``[0, 1]`` (2 for squared, 1 for absolute,
    ``max(tau, 1 - tau)`` for pinball).  Averaging over coordinates keeps the
    Euclidean Lipschitz constant at most ``weight``.
    """

    kind: str
    tau: float = 0.5
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValidationError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if not 0.0 < self.tau < 1.0:
            raise ValidationError("pinball tau must lie in (0, 1)")
        if not self.weight > 0.0:
            raise ValidationError("loss weight must be positive")

    @property
    def raw_lipschitz(self) -> float:
        if self.kind == "squared":
            return 2.0
        if self.kind == "absolute":
            return 1.0
        return max(self.tau, 1.0 - self.tau)

    @property
    def rescale(self) -> float:
        """Factor applied to the raw loss (e.g. 1/2 for squared)."""
        return self.weight / self.raw_lipschitz

    @property
    def quantile(self) -> float | None:
        """Level of the quantile that minimizes expected loss, ``None`` for squared."""
        if self.kind == "squared":
            return None
        return 0.5 if self.kind == "absolute" else self.tau

    def elementwise(self, y, x) -> np.ndarray:
        """Rescaled per-coordinate loss, without averaging over coordinates."""
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        r = x - y
        if self.kind == "squared":
            raw = r * r
        elif self.kind == "absolute":
            raw = np.abs(r)
        else:
            raw = np.maximum(self.tau * r, (self.tau - 1.0) * r)
        return self.rescale * raw

    def __call__(self, y, x) -> np.ndarray:
        """Loss per row; the last axis holds the ``n`` coordinates."""
        return self.elementwise(y, x).mean(axis=-1)

    def grad(self, y, x) -> np.ndarray:
        """(Sub)gradient of ``__call__`` with respect to ``y``."""
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        n = y.shape[-1]
        r = x - y
        if self.kind == "squared":
            g = -2.0 * r
        elif self.kind == "absolute":
            g = -np.sign(r)
        else:
            g = np.where(r > 0, -self.tau, np.where(r < 0, 1.0 - self.tau, 0.0))
        return self.rescale * g / n

    def scaled(self, c: float) -> "LossFn":
        return LossFn(self.kind, self.tau, self.weight * c)


def make_loss(kind: str, tau: float | None = None, weight: float = 1.0) -> LossFn:
    return LossFn(kind, 0.5 if tau is None else float(tau), float(weight))
