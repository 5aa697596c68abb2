"""Bit-error statistics over batches of generated test sequences.

A bit error is a masked output bit whose 0.5-thresholded value differs
from the target bit (values exactly at 0.5 round up).  A sequence scores
a "global" error when its bit-error count exceeds one full vector's worth
of data bits, i.e. the head lost track rather than flipping isolated bits.

Evaluation is embarrassingly parallel: instance i always comes from the
stream keyed by (seed, i), and partial tallies merge associatively, so W
workers produce results identical to a single pass.
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import unroll
from .tasks import (CopyConfig, RepeatCopyConfig, SPLIT_TEST, gen_copy,
                    gen_repeat_copy, instance_rng)


@dataclass
class EvalStats:
    n_sequences: int
    n_with_errors: int
    max_bit_error: int
    mean_bit_errors: float
    std_bit_errors: float      # population standard deviation
    n_global_errors: int


@dataclass
class ErrorTally:
    """Associative partial aggregate of per-sequence bit-error counts."""

    n: int = 0
    n_with_errors: int = 0
    total: int = 0
    total_sq: int = 0
    max_errors: int = 0
    n_global: int = 0

    def add(self, errors, global_threshold):
        self.n += 1
        self.total += errors
        self.total_sq += errors * errors
        if errors > 0:
            self.n_with_errors += 1
        if errors > self.max_errors:
            self.max_errors = errors
        if errors > global_threshold:
            self.n_global += 1

    def finalize(self):
        if self.n == 0:
            return EvalStats(0, 0, 0, 0.0, 0.0, 0)
        mean = self.total / self.n
        var = self.total_sq / self.n - mean * mean
        return EvalStats(self.n, self.n_with_errors, self.max_errors,
                         mean, math.sqrt(max(var, 0.0)), self.n_global)


def merge_stats(a, b):
    """Combine two tallies from disjoint instance sets; order-insensitive."""
    return ErrorTally(
        n=a.n + b.n,
        n_with_errors=a.n_with_errors + b.n_with_errors,
        total=a.total + b.total,
        total_sq=a.total_sq + b.total_sq,
        max_errors=max(a.max_errors, b.max_errors),
        n_global=a.n_global + b.n_global,
    )


def tally_counts(counts, global_threshold):
    """Tally a plain list of per-sequence error counts (synthetic or real)."""
    tally = ErrorTally()
    for c in counts:
        tally.add(int(c), global_threshold)
    return tally


def bit_errors(outputs, target, mask):
    """Count thresholded mismatches over the masked steps, all channels."""
    outputs = np.asarray(outputs)
    target = np.asarray(target)
    mask = np.asarray(mask, dtype=bool)
    mismatch = (outputs >= 0.5) != (target >= 0.5)
    return int(mismatch[mask].sum())


def global_errors(per_sequence_errors, bits_per_vector):
    """Count sequences whose errors exceed one fully corrupted vector."""
    if bits_per_vector < 1:
        raise ValueError("bits_per_vector must be >= 1")
    return sum(1 for e in per_sequence_errors if e > bits_per_vector)


def _eval_instance(task_cfg, length, reps, split, rng):
    if isinstance(task_cfg, CopyConfig):
        cfg = CopyConfig(bits=task_cfg.bits, min_len=task_cfg.min_len,
                         max_len=task_cfg.max_len, split=split)
        return gen_copy(rng, length, cfg)
    return gen_repeat_copy(rng, length, reps, task_cfg)


def _eval_range(model, task_cfg, length, reps, split, seed, lo, hi, global_threshold):
    tally = ErrorTally()
    for i in range(lo, hi):
        inst = _eval_instance(task_cfg, length, reps, split, instance_rng(seed, i))
        outputs, _ = unroll(model, inst.input)      # no tape active: forward only
        tally.add(bit_errors(outputs.data, inst.target, inst.mask), global_threshold)
    return tally


def _eval_range_star(args):
    return _eval_range(*args)


def evaluate(model, task_cfg, length, n, seed, reps=1, split=SPLIT_TEST,
             workers=1, global_threshold=None):
    """Bit-error statistics for n sequences of one (length, reps) setting.

    Copy evaluation draws data vectors from the test split by default, so
    no evaluated vector can have been seen in training.  Deterministic per
    seed regardless of worker count.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if global_threshold is None:
        global_threshold = task_cfg.bits
    if workers <= 1 or n < 2 * workers:
        tally = _eval_range(model, task_cfg, length, reps, split, seed, 0, n,
                            global_threshold)
        return tally.finalize()

    import multiprocessing

    bounds = np.linspace(0, n, workers + 1).astype(int)
    jobs = [(model, task_cfg, length, reps, split, seed, int(lo), int(hi),
             global_threshold) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with multiprocessing.Pool(workers) as pool:
        parts = pool.map(_eval_range_star, jobs)
    tally = parts[0]
    for part in parts[1:]:
        tally = merge_stats(tally, part)
    return tally.finalize()


STATS_HEADER = "task,length,reps,n,n_err,max_err,mean,std,n_global"


def stats_row(task, length, reps, stats):
    """One fixed-format CSV row matching STATS_HEADER."""
    return "%s,%d,%d,%d,%d,%d,%.6f,%.6f,%d" % (
        task, length, reps, stats.n_sequences, stats.n_with_errors,
        stats.max_bit_error, stats.mean_bit_errors, stats.std_bit_errors,
        stats.n_global_errors)


def write_stats(path, rows):
    with open(path, "w") as fh:
        fh.write(STATS_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
