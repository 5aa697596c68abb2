"""Neural Turing Machine with linear external memory.

Library layout:

- :mod:`ntmkit.autodiff`   tape-based reverse-mode differentiation
- :mod:`ntmkit.model`      the NTM cell and sequence unrolling
- :mod:`ntmkit.tasks`      copy / repeat-copy generators and the bit-sum split
- :mod:`ntmkit.training`   BPTT training loop, optimizers, gradient clipping
- :mod:`ntmkit.evaluation` bit-error statistics over test batches
- :mod:`ntmkit.checkpoint` versioned binary model persistence
- :mod:`ntmkit.render`     P5 graymap heatmaps with CSV twins
- :mod:`ntmkit.cli`        generate / train / eval / render subcommands
"""

from .autodiff import Tape, Tensor, backward, grad_check
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import EvalStats, bit_errors, evaluate, merge_stats
from .model import NtmModel, initial_state, ntm_step, unroll
from .tasks import (CopyConfig, RepeatCopyConfig, TaskInstance, gen_copy,
                    gen_repeat_copy, instance_rng, sample_training_instance,
                    vector_split)
from .training import (CurvePoint, TrainConfig, clip_gradients, sequence_loss,
                       train_loop, train_step)

__version__ = "0.1.0"

__all__ = [
    "Tape", "Tensor", "backward", "grad_check",
    "NtmModel", "initial_state", "ntm_step", "unroll",
    "CopyConfig", "RepeatCopyConfig", "TaskInstance",
    "gen_copy", "gen_repeat_copy", "instance_rng", "sample_training_instance",
    "vector_split",
    "TrainConfig", "CurvePoint", "clip_gradients", "sequence_loss",
    "train_loop", "train_step",
    "EvalStats", "bit_errors", "evaluate", "merge_stats",
    "save_checkpoint", "load_checkpoint",
    "__version__",
]
