"""One predictive-coding block and its state update.

A PCoder pairs a feed-forward encoder slice F (conv, relu, maxpool) with a
feedback decoder B (bilinear 2x upsample, 3x3 transposed conv) that predicts
the activity of the layer below. Its state m evolves as

    m(t+1) = mu * m(t) + gamma * F(ff_input) + beta * fb_input
             - alpha * scaled_error_gradient

where fb_input is the next-higher PCoder's top-down prediction of this state,
and the error gradient descends the mean squared prediction error of B's
output against the lower layer's previous state (the input image for the
lowest PCoder). The mixing coefficients satisfy mu + gamma + beta = 1.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .hyperparams import HyperParams
from .tensor import Tape, Tensor

__all__ = ["ConvReluPool", "Decoder", "PCoder"]


class ConvReluPool:
    """Feed-forward slice: conv2d (stride 1) then relu, optionally maxpool 2x2."""

    def __init__(self, weight: Tensor, bias: Tensor, padding: int, pool: bool = True):
        self.weight = weight
        self.bias = bias
        self.padding = padding
        self.pool = pool

    def __call__(self, x: Tensor) -> Tensor:
        h = tt.relu(tt.conv2d(x, self.weight, self.bias, stride=1, padding=self.padding))
        return tt.maxpool2x2(h) if self.pool else h

    def parameters(self) -> list:
        return [self.weight, self.bias]


class Decoder:
    """Feedback map: bilinear 2x upsample then 3x3 transposed conv (stride 1)."""

    def __init__(self, weight: Tensor, bias: Tensor, padding: int = 1):
        self.weight = weight
        self.bias = bias
        self.padding = padding

    def __call__(self, m: Tensor) -> Tensor:
        return tt.conv_transpose2d(
            tt.upsample_bilinear2x(m), self.weight, self.bias, stride=1, padding=self.padding
        )

    def adjoint(self, r: Tensor) -> Tensor:
        """Transpose of the linear part: conv2d with the same weight, then
        the upsampling adjoint. Used by the error gradient."""
        return tt.upsample_bilinear2x_adjoint(
            tt.conv2d(r, self.weight, None, stride=1, padding=self.padding)
        )

    def parameters(self) -> list:
        return [self.weight, self.bias]


def _coef(value):
    """Split a mixing coefficient into (tensor_or_none, float value, is_constant)."""
    if isinstance(value, Tensor):
        return value, float(value.data), not value.requires_grad
    return None, float(value), True


def _normalize_hp(hp):
    if isinstance(hp, HyperParams):
        return (hp.mu, hp.gamma, hp.beta, hp.alpha)
    parts = tuple(hp)
    if len(parts) != 4:
        raise ValueError(f"expected 4 mixing coefficients, got {len(parts)}")
    mu, gamma, beta, alpha = (_coef(p)[1] for p in parts)
    if abs(mu + gamma + beta - 1.0) > 1e-5:
        raise ValueError(f"mixing coefficients sum to {mu + gamma + beta}, not 1")
    if min(mu, gamma, beta) < -1e-6 or alpha < 0:
        raise ValueError(f"invalid mixing coefficients ({mu}, {gamma}, {beta}, {alpha})")
    return parts


class PCoder:
    """State, caches, and the four-term update for one predictive-coding block.

    K is the per-sample element count of the prediction target; C is the
    receptive-field size of one state element through the decoder (kernel
    taps times target channels times the squared upsampling factor). The
    error gradient is scaled by sqrt(K^2 / C); with the per-element mean in
    the prediction error this works out to 2 / sqrt(C) per sample,
    independent of batch size.
    """

    def __init__(self, ff: ConvReluPool, fb: Decoder, K: int, C: int):
        if K <= 0 or C <= 0:
            raise ValueError(f"K and C must be positive, got K={K}, C={C}")
        self.ff = ff
        self.fb = fb
        self.K = int(K)
        self.C = int(C)
        self.state: Tensor | None = None
        self.prediction: Tensor | None = None
        self.epsilon: float | None = None

    def parameters(self) -> list:
        return self.ff.parameters() + self.fb.parameters()

    def _invalidate(self) -> None:
        self.prediction = None
        self.epsilon = None

    def forward_init(self, input_below: Tensor) -> Tensor:
        """m(0) = F(input): the feed-forward initialization pass."""
        self._invalidate()
        self.state = self.ff(input_below)
        return self.state

    def predict(self) -> Tensor:
        """B(m(t)), cached until the state changes."""
        if self.state is None:
            raise RuntimeError("predict: state not initialized; call forward_init first")
        if self.prediction is None:
            self.prediction = self.fb(self.state)
        return self.prediction

    def prediction_error(self, target: Tensor) -> Tensor:
        """The mean squared error of the cached prediction against ``target``."""
        eps = tt.mse(self.predict(), target)
        self.epsilon = float(eps.data)
        return eps

    def scaled_error_gradient(self, target: Tensor, detach: bool = False) -> Tensor:
        """sqrt(K^2/C)-scaled gradient of the prediction error in the state.

        Computed analytically as (2 / sqrt(C)) * B_adjoint(prediction - target)
        per sample. With ``detach`` the result enters downstream graphs as a
        constant (a first-order treatment); otherwise gradients flow through
        it exactly.
        """
        pred = self.predict()
        if pred.shape != target.shape:
            raise tt.ShapeError(
                f"scaled_error_gradient: prediction {pred.shape} vs target {target.shape}"
            )
        scale = 2.0 / np.sqrt(self.C)
        if detach:
            # Build on a throwaway tape so nothing records on the caller's.
            with Tape():
                g = tt.mul(scale, self.fb.adjoint(tt.sub(pred, target)))
            return tt.detach(g)
        return tt.mul(scale, self.fb.adjoint(tt.sub(pred, target)))

    def step(self, ff_input: Tensor, fb_input: Tensor | None, hp, error_target: Tensor,
             ff_drive: Tensor | None = None, detach_error_gradient: bool = False) -> Tensor:
        """Advance the state one time-step.

        ff_input is the lower layer's already-updated state (the image for
        the lowest PCoder); fb_input is the higher PCoder's prediction of
        this state, or None at the top (the beta term is dropped without
        renormalizing); error_target is the lower layer's previous state.
        ff_drive, when given, is a precomputed F(ff_input) to reuse.

        Mixing coefficients may be floats or scalar Tensors; constant zero
        coefficients skip their term entirely.
        """
        if self.state is None:
            raise RuntimeError("step: state not initialized; call forward_init first")
        mu, gamma, beta, alpha = _normalize_hp(hp)

        terms = []
        for coef, build in (
            (mu, lambda: self.state),
            (gamma, lambda: ff_drive if ff_drive is not None else self.ff(ff_input)),
            (beta if fb_input is not None else 0.0, lambda: fb_input),
        ):
            ct, cv, const = _coef(coef)
            if const and cv == 0.0:
                continue
            term = build()
            if not (const and cv == 1.0):
                term = tt.mul(ct if ct is not None else cv, term)
            terms.append(term)

        if terms:
            acc = terms[0]
            for term in terms[1:]:
                acc = tt.add(acc, term)
        else:
            # e.g. (mu=0, gamma=0, beta=1) at the topmost PCoder, whose beta
            # term is dropped: the additive part is exactly zero.
            acc = tt.tensor(np.zeros_like(self.state.data))

        at, av, aconst = _coef(alpha)
        if not (aconst and av == 0.0):
            g = self.scaled_error_gradient(error_target, detach=detach_error_gradient)
            acc = tt.sub(acc, tt.mul(at if at is not None else av, g))

        self._invalidate()
        self.state = acc
        return acc
