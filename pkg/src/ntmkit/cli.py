"""Command-line entry points: generate, train, eval, render.

All subcommands are deterministic given their flags; diagnostics go to
standard error and the exit code is 0 only when the operation completed.
"""

import argparse
import json
import sys

from .checkpoint import load_checkpoint, save_checkpoint
from .evaluation import evaluate, stats_row, write_stats
from .model import NtmModel, unroll
from .render import render_trace
from .tasks import (CopyConfig, RepeatCopyConfig, SPLIT_ALL, SPLIT_TEST,
                    dump_instance, gen_copy, gen_repeat_copy, instance_rng)
from .training import TrainConfig, make_optimizer, train_loop, write_curve

TASKS = ("copy", "repeat")


def _task_config(task, bits=None, **kwargs):
    if task == "copy":
        return CopyConfig(**({"bits": bits} if bits else {}), **kwargs)
    if task == "repeat":
        return RepeatCopyConfig(**({"bits": bits} if bits else {}), **kwargs)
    raise ValueError("unknown task %r" % (task,))


def cmd_generate(args):
    if args.task == "copy":
        cfg = CopyConfig(bits=args.bits or 8, split=args.split)
        inst = gen_copy(instance_rng(args.seed, 0), args.len, cfg)
    else:
        cfg = RepeatCopyConfig(bits=args.bits or 6)
        inst = gen_repeat_copy(instance_rng(args.seed, 0), args.len, args.reps, cfg)
    with open(args.out, "w") as fh:
        dump_instance(inst, args.task, fh)
    return 0


def _load_train_file(path):
    with open(path) as fh:
        raw = json.load(fh)
    for key in raw:
        if key not in ("task", "model", "train"):
            raise ValueError("unknown config section %r" % key)
    return raw.get("task", {}), raw.get("model", {}), raw.get("train", {})


def cmd_train(args):
    task_over, model_over, train_over = _load_train_file(args.config)
    cfg = TrainConfig(**train_over)
    if args.task == "copy":
        task_cfg = CopyConfig(**task_over)
        task_info = {"bits": task_cfg.bits, "min_len": task_cfg.min_len,
                     "max_len": task_cfg.max_len}
    else:
        task_cfg = RepeatCopyConfig(**task_over)
        task_info = {"bits": task_cfg.bits, "max_len": task_cfg.max_len,
                     "max_reps": task_cfg.max_reps,
                     "rep_normalizer": task_cfg.rep_normalizer}

    start = 0
    optimizer = None
    if args.resume:
        model, meta, opt_arrays = load_checkpoint(args.resume)
        state = meta.get("train_state", {})
        start = int(state.get("instances_seen", 0))
        optimizer = make_optimizer(model, cfg)
        if opt_arrays:
            optimizer.load_state_arrays(opt_arrays)
        print("resuming at instance %d" % start, file=sys.stderr)
    else:
        model_kwargs = {"locations": 128, "width": 20, "hidden": 100}
        model_kwargs.update(model_over)
        model = NtmModel(task_cfg.input_ch, task_cfg.target_ch,
                         seed=cfg.seed, **model_kwargs)

    def on_checkpoint(mdl, opt, seen):
        save_checkpoint(mdl, args.out, task=args.task, task_info=task_info,
                        optimizer=opt,
                        train_state={"seed": cfg.seed, "instances_seen": seen})

    model, curve = train_loop(cfg, task_cfg, model=model, optimizer=optimizer,
                              start_instance=start, on_checkpoint=on_checkpoint,
                              log=sys.stderr)
    write_curve(args.curve, curve)
    return 0


def _eval_task_config(meta, task):
    info = meta.get("task_info", {})
    if task == "copy":
        return CopyConfig(bits=int(info.get("bits", 8)))
    return RepeatCopyConfig(bits=int(info.get("bits", 6)),
                            rep_normalizer=float(info.get("rep_normalizer", 10.0)))


def cmd_eval(args):
    model, meta, _ = load_checkpoint(args.model)
    task_cfg = _eval_task_config(meta, args.task)
    split = SPLIT_TEST if args.task == "copy" else SPLIT_ALL
    stats = evaluate(model, task_cfg, args.len, args.count, args.seed,
                     reps=args.reps, split=split, workers=args.workers)
    write_stats(args.stats, [stats_row(args.task, args.len, args.reps, stats)])
    print("evaluated %d sequences: %d with errors, mean %.6f" %
          (stats.n_sequences, stats.n_with_errors, stats.mean_bit_errors),
          file=sys.stderr)
    return 0


def cmd_render(args):
    model, meta, _ = load_checkpoint(args.model)
    task_cfg = _eval_task_config(meta, args.task)
    rng = instance_rng(args.seed, 0)
    if args.task == "copy":
        cfg = CopyConfig(bits=task_cfg.bits, split=SPLIT_TEST)
        inst = gen_copy(rng, args.len, cfg)
    else:
        inst = gen_repeat_copy(rng, args.len, args.reps, task_cfg)
    outputs, trace = unroll(model, inst.input)
    render_trace(inst, outputs.data, trace, args.outdir)
    return 0


def _add_task_flags(sub, reps_default=1):
    sub.add_argument("--task", required=True, choices=TASKS)
    sub.add_argument("--len", type=int, required=True, help="sequence length")
    sub.add_argument("--reps", type=int, default=reps_default,
                     help="repetitions (repeat task)")
    sub.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="ntmkit")
    subs = parser.add_subparsers(dest="command", required=True)

    g = subs.add_parser("generate", help="write one task instance dump")
    _add_task_flags(g)
    g.add_argument("--bits", type=int, default=0, help="data channels (0 = task default)")
    g.add_argument("--split", choices=("train", "test", "all"), default="all")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate)

    t = subs.add_parser("train", help="train a model")
    t.add_argument("--task", required=True, choices=TASKS)
    t.add_argument("--config", required=True, help="JSON with task/model/train sections")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--curve", required=True, help="learning-curve CSV path")
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.set_defaults(fn=cmd_train)

    e = subs.add_parser("eval", help="bit-error statistics on random instances")
    e.add_argument("--model", required=True)
    _add_task_flags(e)
    e.add_argument("--count", type=int, required=True)
    e.add_argument("--stats", required=True, help="stats CSV path")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(fn=cmd_eval)

    r = subs.add_parser("render", help="heatmaps for one evaluated sequence")
    r.add_argument("--model", required=True)
    _add_task_flags(r)
    r.add_argument("--outdir", required=True)
    r.set_defaults(fn=cmd_render)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
