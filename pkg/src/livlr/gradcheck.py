"""Finite-difference verification of the end-to-end gradients.

The analytic gradient of the mean batch loss is compared against central
differences (f(x+h) - f(x-h)) / 2h taken one parameter scalar at a time.
Relative error uses max(|analytic|, |numeric|, floor) as the denominator
so near-zero entries compare absolutely against the floor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .data import SyntheticTaskSpec, gen_synthetic
from .errors import ConfigError
from .model import Model
from .tensor import backward, mul, no_grad

DEFAULT_H = 1e-5
DEFAULT_TOLERANCE = 1e-4
REL_FLOOR = 1e-3


@dataclass
class TensorReport:
    name: str
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    entries: list[TensorReport]
    tolerance: float
    passed: bool

    def failures(self) -> list[TensorReport]:
        return [e for e in self.entries if not e.passed]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


def check_gradients(
    loss_fn,
    params: dict,
    h: float = DEFAULT_H,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradCheckReport:
    """Compare analytic grads against central differences.

    loss_fn() must rebuild the forward pass from the current parameter
    values and return the loss Tensor. params maps name -> Tensor.
    """
    for name in sorted(params):
        params[name].zero_grad()
    loss = loss_fn()
    backward(loss)
    analytic = {name: params[name].grad.copy() for name in params}

    entries = []
    with no_grad():
        for name in sorted(params):
            p = params[name]
            numeric = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            num_flat = numeric.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                up = float(loss_fn().data)
                flat[j] = orig - h
                down = float(loss_fn().data)
                flat[j] = orig
                num_flat[j] = (up - down) / (2.0 * h)
            err = relative_error(analytic[name], numeric)
            entries.append(TensorReport(name, err, err < tolerance))
    return GradCheckReport(entries, tolerance, all(e.passed for e in entries))


def grad_check(
    config: ModelConfig,
    seed: int = 0,
    batch_size: int = 2,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradCheckReport:
    """Build a model and one random batch, then finite-difference every
    parameter tensor. The probe batch is kept small because the cost is
    2 * (number of parameter scalars) forward passes per sample.

    The probe task plants signal in all four channels so every code path
    carries non-degenerate values.
    """
    config.validate()
    if config.precision != "double":
        raise ConfigError("grad check needs precision=double")
    spec = SyntheticTaskSpec(
        n_samples=batch_size,
        signal_source="question_dependent",
        noise_scale=0.3,
        n_classes=min(4, config.answer_set_size),
    )
    dataset = gen_synthetic(spec, config, seed=seed)
    samples = dataset.samples()
    model = Model(config)

    def loss_fn():
        total = None
        for s in samples:
            loss, _ = model.forward(s)
            total = loss if total is None else total + loss
        return mul(total, 1.0 / len(samples))

    params = {name: model.store[name] for name in model.store.names()}
    return check_gradients(loss_fn, params, tolerance=tolerance)
