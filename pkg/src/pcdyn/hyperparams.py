"""Feedback-dynamics hyper-parameters and their constrained parameterization.

The dynamics mix four coefficients: memory (mu), feedforward (gamma), feedback
(beta), and an error-correction step size (alpha). The first three are kept on
the simplex mu + gamma + beta = 1 by passing unconstrained auxiliary values
through a logistic and renormalizing by their sum; alpha is an unconstrained
value clamped to be non-negative after each optimizer step.

Two views are provided: plain-float value types (``HyperParams``, ``AuxParams``)
for configuration and reporting, and ``TrainableHyperParams`` holding 0-d
Tensors so the same constraint map can sit inside a differentiable graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import DEFAULT_DTYPE, Tensor, add, div, sigmoid, tensor

__all__ = [
    "HyperParams",
    "AuxParams",
    "HPMask",
    "constrain",
    "init_uniform",
    "apply_mask",
    "TrainableHyperParams",
]

_SUM_TOL = 1e-6


@dataclass(frozen=True)
class HyperParams:
    """Effective coefficients: mu + gamma + beta = 1, all in [0, 1], alpha >= 0."""

    mu: float
    gamma: float
    beta: float
    alpha: float

    def __post_init__(self):
        for name in ("mu", "gamma", "beta"):
            v = getattr(self, name)
            if not (-_SUM_TOL <= v <= 1 + _SUM_TOL):
                raise ValueError(f"HyperParams: {name}={v} outside [0, 1]")
        if abs(self.mu + self.gamma + self.beta - 1.0) > _SUM_TOL:
            raise ValueError(
                f"HyperParams: mu+gamma+beta = {self.mu + self.gamma + self.beta} != 1"
            )
        if self.alpha < 0:
            raise ValueError(f"HyperParams: alpha={self.alpha} is negative")


@dataclass(frozen=True)
class AuxParams:
    """Unconstrained pre-sigmoid coefficients plus the raw alpha value."""

    mu_aux: float
    gamma_aux: float
    beta_aux: float
    alpha_raw: float


@dataclass(frozen=True)
class HPMask:
    """Ablation switches. Masked terms are exactly zero and receive no gradient."""

    zero_beta: bool = False
    zero_alpha: bool = False


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def constrain(aux: AuxParams) -> HyperParams:
    """Map auxiliary values to effective coefficients on the simplex.

    mu = s(mu_aux) / (s(mu_aux) + s(gamma_aux) + s(beta_aux)) and likewise for
    gamma and beta, with s the logistic; alpha = max(alpha_raw, 0).
    """
    smu = _logistic(aux.mu_aux)
    sgamma = _logistic(aux.gamma_aux)
    sbeta = _logistic(aux.beta_aux)
    total = smu + sgamma + sbeta
    return HyperParams(
        mu=smu / total,
        gamma=sgamma / total,
        beta=sbeta / total,
        alpha=max(aux.alpha_raw, 0.0),
    )


def init_uniform(rng: np.random.Generator) -> AuxParams:
    """Draw aux values so each pre-normalization coefficient is uniform on [0, 1].

    Three independent u ~ U(0,1) are pushed through the logit so that
    sigmoid(aux) = u exactly; alpha is drawn uniform [0, 1] directly. Draw
    order is fixed (mu, gamma, beta, alpha) for reproducibility.
    """
    eps = 1e-12
    draws = [float(np.clip(rng.uniform(), eps, 1.0 - eps)) for _ in range(3)]
    alpha = float(rng.uniform())
    mu_aux, gamma_aux, beta_aux = (math.log(u / (1.0 - u)) for u in draws)
    return AuxParams(mu_aux=mu_aux, gamma_aux=gamma_aux, beta_aux=beta_aux, alpha_raw=alpha)


def apply_mask(hp: HyperParams, mask: HPMask) -> HyperParams:
    """Zero out masked terms; when beta is removed, mu and gamma are renormalized.

    If mu + gamma is zero when beta is removed, the weight splits evenly.
    """
    mu, gamma, beta, alpha = hp.mu, hp.gamma, hp.beta, hp.alpha
    if mask.zero_beta:
        rest = mu + gamma
        if rest > 0:
            mu, gamma = mu / rest, gamma / rest
        else:
            mu, gamma = 0.5, 0.5
        beta = 0.0
    if mask.zero_alpha:
        alpha = 0.0
    return HyperParams(mu=mu, gamma=gamma, beta=beta, alpha=alpha)


class TrainableHyperParams:
    """Aux values held as 0-d Tensors so the constraint map is differentiable.

    ``effective`` rebuilds the sigmoid-normalized graph (so it must be called
    inside the tape that will be differentiated); ``project`` applies the
    post-step alpha clamp; ``snapshot`` reads the current effective floats.
    """

    def __init__(self, aux: AuxParams, dtype=DEFAULT_DTYPE):
        self.mu_aux = tensor(np.asarray(aux.mu_aux, dtype=dtype), requires_grad=True)
        self.gamma_aux = tensor(np.asarray(aux.gamma_aux, dtype=dtype), requires_grad=True)
        self.beta_aux = tensor(np.asarray(aux.beta_aux, dtype=dtype), requires_grad=True)
        self.alpha_raw = tensor(np.asarray(max(aux.alpha_raw, 0.0), dtype=dtype), requires_grad=True)
        self.dtype = dtype

    def parameters(self) -> list:
        return [self.mu_aux, self.gamma_aux, self.beta_aux, self.alpha_raw]

    def coefficient_parameters(self) -> list:
        return [self.mu_aux, self.gamma_aux, self.beta_aux]

    def alpha_parameters(self) -> list:
        return [self.alpha_raw]

    def effective(self, mask: HPMask | None = None) -> tuple:
        """(mu, gamma, beta, alpha) as scalar Tensors on the current graph.

        Masked terms come back as constant zero tensors with no history, so
        no gradient reaches their aux values.
        """
        mask = mask or HPMask()
        smu = sigmoid(self.mu_aux)
        sgamma = sigmoid(self.gamma_aux)
        if mask.zero_beta:
            total = add(smu, sgamma)
            beta = tensor(np.asarray(0.0, dtype=self.dtype))
        else:
            sbeta = sigmoid(self.beta_aux)
            total = add(add(smu, sgamma), sbeta)
            beta = div(sbeta, total)
        mu = div(smu, total)
        gamma = div(sgamma, total)
        if mask.zero_alpha:
            alpha = tensor(np.asarray(0.0, dtype=self.dtype))
        else:
            alpha = self.alpha_raw
        return mu, gamma, beta, alpha

    def project(self) -> None:
        """Clamp alpha back into its domain after an optimizer step."""
        self.alpha_raw.data = np.maximum(self.alpha_raw.data, 0.0)

    def snapshot(self, mask: HPMask | None = None) -> HyperParams:
        aux = AuxParams(
            mu_aux=float(self.mu_aux.data),
            gamma_aux=float(self.gamma_aux.data),
            beta_aux=float(self.beta_aux.data),
            alpha_raw=float(self.alpha_raw.data),
        )
        hp = constrain(aux)
        return apply_mask(hp, mask) if mask else hp


def _effective_from_floats(hp: HyperParams, dtype=DEFAULT_DTYPE) -> tuple:
    """Constant (mu, gamma, beta, alpha) Tensors for fixed-coefficient runs."""
    return (
        tensor(np.asarray(hp.mu, dtype=dtype)),
        tensor(np.asarray(hp.gamma, dtype=dtype)),
        tensor(np.asarray(hp.beta, dtype=dtype)),
        tensor(np.asarray(hp.alpha, dtype=dtype)),
    )
