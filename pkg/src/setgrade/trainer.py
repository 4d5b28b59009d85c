"""Training loop: graded set batches, absolute-error regression on the
grade, RMSProp updates, best checkpoint by epoch-mean training loss.

Every step rebuilds a fresh tape over the whole batch with a fixed
sequential reduction, so a given seed reproduces the run bitwise.
"""

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import encoder, numcore, sampler
from .errors import ConfigError, TrainError

DECAY_EXEMPT = ("embed_bias", "head_bias")

LOSSES = ("mae", "mse")


@dataclass
class Hyperparams:
    set_size: int = 8
    latent_dim: int = 20
    heads: int = 2
    depth: int = 1
    pooling: str = "sum"
    epochs: int = 20
    batches_per_epoch: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 0.1
    rmsprop_smoothing: float = 0.99
    rmsprop_epsilon: float = 1e-8
    loss: str = "mae"
    max_grade: int = 2
    grade_mix: Optional[dict] = None    # None -> uniform over 0..max_grade
    n_contexts: int = 60
    n_refs: int = 30
    seed: int = 0

    def validate(self):
        for name in ("set_size", "latent_dim", "heads", "depth",
                     "batches_per_epoch", "batch_size", "n_contexts", "n_refs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0 < self.rmsprop_smoothing < 1:
            raise ConfigError(f"rmsprop_smoothing must be in (0, 1), "
                              f"got {self.rmsprop_smoothing}")
        if self.rmsprop_epsilon <= 0:
            raise ConfigError(f"rmsprop_epsilon must be > 0, "
                              f"got {self.rmsprop_epsilon}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if not 0 <= self.max_grade <= self.set_size:
            raise ConfigError(f"max_grade must be in [0, set_size], "
                              f"got {self.max_grade}")
        return self

    def as_dict(self):
        d = dict(self.__dict__)
        if d["grade_mix"] is not None:
            d["grade_mix"] = {str(g): p for g, p in d["grade_mix"].items()}
        return d


@dataclass
class OptimizerState:
    v: dict = field(default_factory=dict)   # running mean of squared gradients

    @classmethod
    def fresh(cls, params):
        return cls(v={name: np.zeros_like(arr)
                      for name, arr in params.tensors().items()})


@dataclass
class TrainResult:
    params: encoder.ModelParams     # best checkpoint
    history: list                   # per-epoch {epoch, mean_loss, wall_ms}
    best_epoch: int                 # 1-based; 0 when no epochs ran
    config: dict


def mae_loss(predictions, grades):
    """Mean absolute error between scalar predictions and integer grades."""
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    grades = np.asarray(grades, dtype=np.float64).ravel()
    if predictions.size == 0:
        raise ConfigError("mae_loss: empty batch")
    if predictions.size != grades.size:
        raise ConfigError(f"mae_loss: {predictions.size} predictions vs "
                          f"{grades.size} grades")
    return float(np.abs(predictions - grades).mean())


def batch_loss_and_grads(params, sets, grades, loss="mae"):
    """One taped pass over a batch: loss value plus per-tensor gradients.

    sets is (B, k, d), grades (B,). The B set scores are concatenated in
    batch order before the mean, fixing the reduction order.
    """
    tape = numcore.Tape()
    leaves = {name: tape.leaf(arr) for name, arr in params.tensors().items()}
    preds = [encoder.forward(tape, leaves, params, np.ascontiguousarray(sets[i]))
             for i in range(sets.shape[0])]
    pred_row = preds[0] if len(preds) == 1 else tape.concat_cols(preds)
    resid = tape.sub(pred_row, grades.reshape(1, -1))
    penal = tape.absolute(resid) if loss == "mae" else tape.square(resid)
    total = tape.mean_all(penal)
    value = float(total.value[0, 0])
    tape.backward(total)
    return value, {name: leaf.grad for name, leaf in leaves.items()}


def rmsprop_step(params, grads, state, hp):
    """One RMSProp update; L2 decay added to the gradient, biases exempt.

    v <- rho * v + (1 - rho) * g'^2 ;  w <- w - lr * g' / (sqrt(v) + eps)
    """
    new_tensors = {}
    for name, w in params.tensors().items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise TrainError(f"non-finite gradient in parameter block {name}")
        if hp.weight_decay and name not in DECAY_EXEMPT:
            g = g + hp.weight_decay * w
        v = state.v[name]
        v *= hp.rmsprop_smoothing
        v += (1.0 - hp.rmsprop_smoothing) * (g * g)
        new_tensors[name] = w - hp.learning_rate * g / (np.sqrt(v)
                                                        + hp.rmsprop_epsilon)
    return params.with_tensors(new_tensors), state


def train(unlabeled, anomalies, hp):
    """Run the full loop and return the best checkpoint plus history."""
    hp.validate()
    unlabeled = np.ascontiguousarray(unlabeled, dtype=np.float64)
    anomalies = np.ascontiguousarray(anomalies, dtype=np.float64)
    if unlabeled.ndim != 2 or anomalies.ndim != 2:
        raise TrainError("training partitions must be 2-D arrays")
    if anomalies.shape[0] < 1:
        raise TrainError("at least one labeled anomaly is required")
    if anomalies.shape[1] != unlabeled.shape[1]:
        raise TrainError(f"partition widths differ: unlabeled "
                         f"{unlabeled.shape[1]}, anomalies {anomalies.shape[1]}")

    params = encoder.init_params(
        hp.seed, input_dim=unlabeled.shape[1], latent_dim=hp.latent_dim,
        heads=hp.heads, depth=hp.depth, pooling=hp.pooling)
    mix = hp.grade_mix if hp.grade_mix is not None \
        else sampler.uniform_grade_mix(hp.max_grade)
    rng = np.random.default_rng([hp.seed, 1])   # distinct stream from init
    state = OptimizerState.fresh(params)

    history = []
    best_params, best_loss, best_epoch = params, np.inf, 0
    for epoch in range(1, hp.epochs + 1):
        started = time.perf_counter()
        losses = np.empty(hp.batches_per_epoch)
        for b in range(hp.batches_per_epoch):
            batch = sampler.sample_batch(unlabeled, anomalies, hp.set_size,
                                         hp.batch_size, mix, rng)
            sets, grades = sampler.stack_batch(batch)
            losses[b], grads = batch_loss_and_grads(params, sets, grades, hp.loss)
            params, state = rmsprop_step(params, grads, state, hp)
        mean_loss = float(losses.mean())
        wall_ms = (time.perf_counter() - started) * 1000.0
        history.append({"epoch": epoch, "mean_loss": mean_loss,
                        "wall_ms": wall_ms})
        if mean_loss < best_loss:   # ties keep the earlier epoch
            best_params, best_loss, best_epoch = params, mean_loss, epoch

    return TrainResult(params=best_params, history=history,
                       best_epoch=best_epoch, config=hp.as_dict())


def write_train_log(result, path):
    """Line-delimited log: one config record, then one record per epoch."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"config": result.config,
                             "best_epoch": result.best_epoch},
                            sort_keys=True) + "\n")
        for rec in result.history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
