"""Backpropagation-through-time training with gradient clipping.

The loss is bit-level binary cross-entropy summed over the masked recall
steps of each sequence, in nats on the tape; learning-curve points report
the windowed mean in bits per sequence.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .model import NtmModel, unroll
from .tasks import instance_rng, sample_training_instance

LOG2 = math.log(2.0)
OUTPUT_CLAMP = 1e-12


class TrainingDiverged(RuntimeError):
    """Raised when a step produces a non-finite loss."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    optimizer: str = "rmsprop"        # "rmsprop" or "sgdm"
    rmsprop_decay: float = 0.95
    rmsprop_epsilon: float = 1e-4
    momentum: float = 0.9             # sgdm only
    clip_threshold: float = 10.0      # global gradient L2 norm
    batch_size: int = 1
    total_instances: int = 10000
    report_every: int = 1000
    seed: int = 0
    checkpoint_every: int = 0         # instances between checkpoints; 0 = off

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.clip_threshold <= 0:
            raise ValueError("clip_threshold must be > 0")
        if self.optimizer not in ("rmsprop", "sgdm"):
            raise ValueError("unknown optimizer %r" % (self.optimizer,))


@dataclass
class CurvePoint:
    instances_seen: int
    avg_loss_bits_per_sequence: float


def sequence_loss(outputs, target, mask):
    """Masked binary cross-entropy, summed over steps and channels (nats).

    ``outputs`` is the [T x C] tensor of probabilities from the unroll;
    outputs are clamped to [1e-12, 1 - 1e-12] so saturated bits cannot
    produce infinities.
    """
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if outputs.data.shape != target.shape:
        raise ad.ShapeError(
            "outputs %r and target %r differ" % (outputs.data.shape, target.shape)
        )
    y = ad.clip(outputs, OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP)
    t = Tensor(target)
    t_inv = Tensor(1.0 - target)
    one = Tensor(np.ones(target.shape))
    weight = Tensor(mask[:, None] * np.ones_like(target))
    ll = ad.add(ad.mul(t, ad.log(y)), ad.mul(t_inv, ad.log(ad.sub(one, y))))
    return ad.mul(Tensor(-1.0), ad.tsum(ad.mul(weight, ll)))


def clip_gradients(grads, threshold):
    """Rescale gradients in place if their global L2 norm exceeds threshold."""
    if threshold <= 0:
        raise ValueError("clip threshold must be > 0")
    grads = list(grads)
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > threshold:
        scale = threshold / total
        for g in grads:
            g *= scale
    return grads


class RmsProp:
    """Running mean-square scaling: ms <- d*ms + (1-d)*g^2; p -= lr*g/sqrt(ms+eps)."""

    def __init__(self, model, learning_rate, decay=0.95, epsilon=1e-4):
        self.learning_rate = learning_rate
        self.decay = decay
        self.epsilon = epsilon
        self.state = {name: np.zeros_like(p.data) for name, p in model.params.items()}

    def step(self, model):
        for name, p in model.params.items():
            g = p.grad if p.grad is not None else 0.0
            ms = self.state[name]
            ms *= self.decay
            ms += (1.0 - self.decay) * g * g
            p.data -= self.learning_rate * g / np.sqrt(ms + self.epsilon)

    def state_arrays(self):
        return {"ms." + name: arr for name, arr in self.state.items()}

    def load_state_arrays(self, arrays):
        for name in self.state:
            self.state[name] = np.array(arrays["ms." + name])


class SgdMomentum:
    """Classic momentum: v <- mu*v - lr*g; p += v."""

    def __init__(self, model, learning_rate, momentum=0.9):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.state = {name: np.zeros_like(p.data) for name, p in model.params.items()}

    def step(self, model):
        for name, p in model.params.items():
            g = p.grad if p.grad is not None else 0.0
            v = self.state[name]
            v *= self.momentum
            v -= self.learning_rate * g
            p.data += v

    def state_arrays(self):
        return {"v." + name: arr for name, arr in self.state.items()}

    def load_state_arrays(self, arrays):
        for name in self.state:
            self.state[name] = np.array(arrays["v." + name])


def make_optimizer(model, cfg):
    if cfg.optimizer == "rmsprop":
        return RmsProp(model, cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon)
    return SgdMomentum(model, cfg.learning_rate, cfg.momentum)


def train_step(model, batch, cfg, optimizer, step_index=0, instance_seed=None):
    """One update on a batch of instances; returns the mean loss in nats.

    Deterministic given (model, batch, optimizer state).  Aborts with
    TrainingDiverged if the loss turns non-finite.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    model.zero_grads()
    with Tape() as tape:
        total = None
        for inst in batch:
            outputs, _ = unroll(model, inst.input)
            li = sequence_loss(outputs, inst.target, inst.mask)
            total = li if total is None else ad.add(total, li)
        loss = ad.mul(Tensor(1.0 / len(batch)), total)
    value = float(loss.data)
    if not math.isfinite(value):
        raise TrainingDiverged(
            "non-finite loss at step %d (instance seed %r)" % (step_index, instance_seed)
        )
    ad.backward(tape, loss)
    clip_gradients(model.grads().values(), cfg.clip_threshold)
    optimizer.step(model)
    return value


def train_loop(cfg, task_cfg, model=None, optimizer=None, start_instance=0,
               curve=None, on_checkpoint=None, log=None):
    """Train on freshly sampled instances; returns (model, learning curve).

    Instance i always comes from the stream keyed by (cfg.seed, i), so a
    run resumed from a checkpoint at the same instance index reproduces
    the uninterrupted trajectory exactly.

    on_checkpoint(model, optimizer, instances_seen), when given, fires
    every cfg.checkpoint_every instances and once at the end.
    """
    if model is None:
        model = NtmModel(task_cfg.input_ch, task_cfg.target_ch, seed=cfg.seed)
    if optimizer is None:
        optimizer = make_optimizer(model, cfg)
    curve = list(curve) if curve else []

    window_nats = []
    seen = start_instance
    next_report = seen - (seen % cfg.report_every) + cfg.report_every
    next_checkpoint = (
        seen - (seen % cfg.checkpoint_every) + cfg.checkpoint_every
        if cfg.checkpoint_every else None
    )
    step_index = 0
    while seen < cfg.total_instances:
        n = min(cfg.batch_size, cfg.total_instances - seen)
        batch = [sample_training_instance(instance_rng(cfg.seed, seen + j), task_cfg)
                 for j in range(n)]
        loss = train_step(model, batch, cfg, optimizer,
                          step_index=step_index, instance_seed=(cfg.seed, seen))
        window_nats.extend([loss] * n)
        seen += n
        step_index += 1
        if seen >= next_report:
            point = CurvePoint(seen, float(np.mean(window_nats)) / LOG2)
            curve.append(point)
            window_nats = []
            next_report += cfg.report_every
            if log:
                print("instances %d  loss %.4f bits/seq" % (seen, point.avg_loss_bits_per_sequence),
                      file=log)
        if next_checkpoint is not None and seen >= next_checkpoint and on_checkpoint:
            on_checkpoint(model, optimizer, seen)
            next_checkpoint += cfg.checkpoint_every
    if on_checkpoint:
        on_checkpoint(model, optimizer, seen)
    return model, curve


def write_curve(path, curve):
    """Learning-curve CSV: instances_seen,loss_bits, one row per point."""
    with open(path, "w") as fh:
        fh.write("instances_seen,loss_bits\n")
        for point in curve:
            fh.write("%d,%.6f\n" % (point.instances_seen, point.avg_loss_bits_per_sequence))
