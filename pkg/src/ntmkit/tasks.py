"""Copy and repeat-copy task generators.

Instances are deterministic given (seed, instance index): every instance
draws from its own PCG64 stream keyed by both numbers, so generation is
reproducible and safe to parallelize.

The copy task uses a popcount-based train/test partition of the data
vectors: a vector whose bit sum equals half its width belongs to the test
set, every other vector to the training set.  The two sets are disjoint by
construction, so test sequences can never have appeared during training.
"""

from dataclasses import dataclass

import numpy as np

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"
SPLIT_ALL = "all"

_SPLITS = (SPLIT_TRAIN, SPLIT_TEST, SPLIT_ALL)


@dataclass
class TaskInstance:
    """One sequence: input channel matrix, target matrix, recall mask.

    Loss and bit errors are scored only where ``mask`` is True; the input
    is all-zero there and the target is all-zero everywhere else.
    """

    input: np.ndarray    # [T x input_ch] float64
    target: np.ndarray   # [T x target_ch] float64
    mask: np.ndarray     # [T] bool


@dataclass(frozen=True)
class CopyConfig:
    bits: int = 8
    min_len: int = 1
    max_len: int = 20
    split: str = SPLIT_TRAIN

    @property
    def input_ch(self):
        return self.bits + 1          # data channels plus one delimiter

    @property
    def target_ch(self):
        return self.bits


@dataclass(frozen=True)
class RepeatCopyConfig:
    bits: int = 6
    max_len: int = 10
    max_reps: int = 10
    rep_normalizer: float = 10.0      # count channel carries reps / normalizer

    @property
    def input_ch(self):
        return self.bits + 2          # data, delimiter, repeat-count channels

    @property
    def target_ch(self):
        return self.bits + 1          # data channels plus the end marker


def instance_rng(seed, index):
    """Independent reproducible stream for instance ``index`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def vector_split(v):
    """Partition a binary vector: 'test' iff its bit sum is half its width."""
    bits = len(v)
    if bits % 2 != 0:
        raise ValueError("popcount split needs an even number of bits, got %d" % bits)
    return SPLIT_TEST if int(np.sum(v)) == bits // 2 else SPLIT_TRAIN


def split_vectors(bits):
    """Exhaustive (train, test) vector sets for the given width."""
    train, test = [], []
    for code in range(2 ** bits):
        v = np.array([(code >> i) & 1 for i in range(bits)], dtype=np.float64)
        (test if vector_split(v) == SPLIT_TEST else train).append(v)
    return train, test


def random_vector(rng, bits, split):
    """Uniform draw from the given split's vector set, by rejection."""
    if split not in _SPLITS:
        raise ValueError("unknown split %r" % (split,))
    while True:
        v = rng.integers(0, 2, size=bits).astype(np.float64)
        if split == SPLIT_ALL or vector_split(v) == split:
            return v


def gen_copy(rng, length, cfg):
    """Copy instance: L data steps, one delimiter step, L silent recall steps.

    Layout (T = 2L + 1 rows):
      input[t, :bits]   data vector t            for t < L
      input[L, bits]    1.0 (delimiter)
      target[L+1+i]     data vector i            (recall, mask True)
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    vectors = [random_vector(rng, cfg.bits, cfg.split) for _ in range(length)]
    total = 2 * length + 1
    inp = np.zeros((total, cfg.input_ch))
    tgt = np.zeros((total, cfg.target_ch))
    mask = np.zeros(total, dtype=bool)
    for t, v in enumerate(vectors):
        inp[t, :cfg.bits] = v
        tgt[length + 1 + t, :] = v
    inp[length, cfg.bits] = 1.0
    mask[length + 1:] = True
    return TaskInstance(inp, tgt, mask)


def gen_repeat_copy(rng, length, reps, cfg):
    """Repeat-copy instance: emit the sequence ``reps`` times, then an end marker.

    Layout (T = L + 1 + R*L + 1 rows):
      input[t, :bits]      data vector t                  for t < L
      input[L, bits]       1.0 (delimiter)
      input[L, bits+1]     reps / rep_normalizer (count channel)
      target[L+1 .. L+R*L] the data vectors, tiled R times
      target[L+1+R*L, bits] 1.0 (end marker channel)
    """
    if length < 1 or reps < 1:
        raise ValueError("length and reps must be >= 1")
    vectors = [random_vector(rng, cfg.bits, SPLIT_ALL) for _ in range(length)]
    recall = reps * length + 1
    total = length + 1 + recall
    inp = np.zeros((total, cfg.input_ch))
    tgt = np.zeros((total, cfg.target_ch))
    mask = np.zeros(total, dtype=bool)
    for t, v in enumerate(vectors):
        inp[t, :cfg.bits] = v
    inp[length, cfg.bits] = 1.0
    inp[length, cfg.bits + 1] = reps / cfg.rep_normalizer
    for r in range(reps):
        for t, v in enumerate(vectors):
            tgt[length + 1 + r * length + t, :cfg.bits] = v
    tgt[length + 1 + reps * length, cfg.bits] = 1.0
    mask[length + 1:] = True
    return TaskInstance(inp, tgt, mask)


def sample_training_instance(rng, cfg):
    """Draw one training instance with uniform length (and repetitions)."""
    if isinstance(cfg, CopyConfig):
        length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        return gen_copy(rng, length, cfg)
    if isinstance(cfg, RepeatCopyConfig):
        length = int(rng.integers(1, cfg.max_len + 1))
        reps = int(rng.integers(1, cfg.max_reps + 1))
        return gen_repeat_copy(rng, length, reps, cfg)
    raise TypeError("unknown task config %r" % (cfg,))


# ---------------------------------------------------------------------
# instance dump format: "NTMTASK v1 <task> <T_in> <input_ch> <target_ch>"
# header line, then input rows, target rows, and the mask row
# ---------------------------------------------------------------------

def dump_instance(instance, task, fh):
    total, input_ch = instance.input.shape
    target_ch = instance.target.shape[1]
    fh.write("NTMTASK v1 %s %d %d %d\n" % (task, total, input_ch, target_ch))
    for row in instance.input:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    for row in instance.target:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    fh.write(" ".join("1" if m else "0" for m in instance.mask) + "\n")


def load_instance(fh):
    """Parse a dump written by :func:`dump_instance`; returns (task, instance)."""
    header = fh.readline().split()
    if len(header) != 6 or header[0] != "NTMTASK" or header[1] != "v1":
        raise ValueError("not an NTMTASK v1 dump")
    task, total, input_ch, target_ch = header[2], int(header[3]), int(header[4]), int(header[5])

    def read_rows(n, ch):
        rows = np.empty((n, ch))
        for i in range(n):
            vals = fh.readline().split()
            if len(vals) != ch:
                raise ValueError("row %d: expected %d values, got %d" % (i, ch, len(vals)))
            rows[i] = [float(v) for v in vals]
        return rows

    inp = read_rows(total, input_ch)
    tgt = read_rows(total, target_ch)
    mask_vals = fh.readline().split()
    if len(mask_vals) != total:
        raise ValueError("mask row: expected %d values, got %d" % (total, len(mask_vals)))
    mask = np.array([v not in ("0", "0.0") for v in mask_vals], dtype=bool)
    return task, TaskInstance(inp, tgt, mask)
