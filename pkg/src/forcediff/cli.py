"""``forcediff`` command line interface."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import EpisodeFailure, ForceDiffError, GradientCheckError, ResourceError
from .pipeline.checkpoint import load_checkpoint, save_checkpoint
from .pipeline.config import CONFIG_ENV, TaskConfig, load_config
from .pipeline.dataset_io import atomic_write, read_dataset, write_dataset
from .pipeline.episode import EPISODE_MODES, run_episode
from .pipeline.evaluate import compare, comparison_report, evaluate
from .pipeline import workflow

log = logging.getLogger("forcediff")


def parse_seeds(text: str) -> list[int] | int:
    """``"1000"`` (base seed), ``"1000-1019"`` (inclusive range) or ``"1,5,9"``."""
    try:
        if "," in text:
            return [int(s) for s in text.split(",") if s.strip()]
        if "-" in text[1:]:
            lo, hi = text[0] + text[1:].split("-", 1)[0], text[1:].split("-", 1)[1]
            return list(range(int(lo), int(hi) + 1))
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed specification '{text}'") from None


def _read(fn, path, *args):
    try:
        return fn(path, *args)
    except OSError as exc:
        raise ResourceError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write(fn, path, *args):
    try:
        fn(path, *args)
    except OSError as exc:
        raise ResourceError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _config(args, task: str | None = None) -> TaskConfig:
    return load_config(args.config, task)


def _load_policy(cfg: TaskConfig, path: str):
    policy, _ = _read(load_checkpoint, path, cfg.model_hash())
    return policy


def cmd_demo_gen(args) -> None:
    cfg = _config(args, args.task)
    demos = workflow.generate_demos(cfg, args.count, args.seed)
    _write(write_dataset, args.out, demos)
    steps = sum(len(d) for d in demos)
    print(f"wrote {len(demos)} {cfg.name} demonstrations ({steps} steps) to {args.out}")


def _write_history(path, hist) -> None:
    if path:
        _write(atomic_write, path, hist.to_csv())


def cmd_train(args) -> None:
    cfg = _config(args, args.task)
    demos = _read(read_dataset, args.data)
    policy, hist = workflow.train(cfg, demos)
    _write(save_checkpoint, args.out_checkpoint, policy, cfg.model_hash())
    _write_history(args.loss_csv, hist)
    print(f"teacher trained for {cfg.train.steps} steps, final L_DSM "
          f"{hist.rows[-1][1]:.4f}" if hist.rows else "no training steps run")


def cmd_distill(args) -> None:
    demos = _read(read_dataset, args.data)
    cfg = _config(args, demos[0].task if demos else None)
    teacher = _load_policy(cfg, args.teacher)
    policy, hist = workflow.distill(cfg, teacher, demos)
    _write(save_checkpoint, args.out_checkpoint, policy, cfg.model_hash())
    _write_history(args.loss_csv, hist)
    print(f"student distilled for {cfg.distill.steps} steps, final L_cons "
          f"{hist.rows[-1][3]:.4f}" if hist.rows else "no distillation steps run")


def cmd_rollout(args) -> None:
    cfg = _config(args, args.task)
    policy = _load_policy(cfg, args.checkpoint)
    ep = run_episode(policy, args.mode, cfg.make_task(), args.seed, cfg.rollout_settings())
    if args.out_csv:
        header = ",".join(ep.fields)
        rows = [",".join(repr(float(v)) for v in r) for r in ep.ticks]
        _write(atomic_write, args.out_csv, "\n".join([header, *rows]) + "\n")
    m = ep.metrics
    print(f"{ep.task} [{ep.mode}] seed {ep.seed}: {'success' if ep.success else 'failure'} "
          f"({ep.reason}); mean |F| {m.mean_force:.2f} N, std {m.std_force:.2f} N, "
          f"RMSE {m.rmse:.2f} N, {m.duration:.1f} s, {ep.denoiser_evals} denoiser evaluations")
    if args.strict and not ep.success:
        raise EpisodeFailure(f"episode ended without success: {ep.reason}")


def cmd_eval(args) -> None:
    cfg = _config(args, args.task)
    policy = _load_policy(cfg, args.checkpoint)
    seeds = args.seeds if args.seeds is not None else cfg.eval.seed
    if args.episodes is not None:
        n = args.episodes
    else:
        n = len(seeds) if isinstance(seeds, list) else cfg.eval.episodes
    task, settings = cfg.make_task(), cfg.rollout_settings()
    res = evaluate(policy, args.mode, task, n, seeds, settings)
    csv = res.to_csv()
    out = [res.summary().text()]
    if args.compare:
        if args.mode == "no-force-control":
            raise ValueError("--compare needs an admittance mode (teacher or student)")
        base = evaluate(policy, "no-force-control", task, n, seeds, settings)
        csv += "".join(base.to_csv().splitlines(True)[1:])
        out += [base.summary().text(), comparison_report([compare(res, base)]).rstrip()]
    if args.out_csv:
        _write(atomic_write, args.out_csv, csv)
    print("\n".join(out))


def cmd_grad_check(args) -> None:
    from .gradcheck import run_all

    reports = run_all(args.seed, args.cases)
    for r in reports:
        print(r.line())
    bad = [r.name for r in reports if not r.passed]
    if bad:
        raise GradientCheckError(f"gradient mismatch in: {', '.join(bad)}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forcediff", description=__doc__)
    p.add_argument("--config", help=f"run configuration file (default: ${CONFIG_ENV})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("demo-gen", help="record scripted demonstrations")
    s.add_argument("--task")
    s.add_argument("--count", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_demo_gen)

    s = sub.add_parser("train", help="train the teacher denoiser")
    s.add_argument("--task")
    s.add_argument("--data", required=True)
    s.add_argument("--out-checkpoint", required=True)
    s.add_argument("--loss-csv")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("distill", help="distil a teacher checkpoint into a one-step student")
    s.add_argument("--teacher", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out-checkpoint", required=True)
    s.add_argument("--loss-csv")
    s.set_defaults(func=cmd_distill)

    s = sub.add_parser("rollout", help="run one closed-loop episode")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--task")
    s.add_argument("--mode", choices=EPISODE_MODES, default="student")
    s.add_argument("--seed", type=int, default=1000)
    s.add_argument("--out-csv", help="per-tick log")
    s.add_argument("--strict", action="store_true", help="exit nonzero unless the task succeeds")
    s.set_defaults(func=cmd_rollout)

    s = sub.add_parser("eval", help="evaluate over seeded episodes")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--task")
    s.add_argument("--mode", choices=EPISODE_MODES, default="student")
    s.add_argument("--episodes", type=int)
    s.add_argument("--seeds", type=parse_seeds, help="base seed, lo-hi range or comma list")
    s.add_argument("--out-csv")
    s.add_argument("--compare", action="store_true",
                   help="also run no-force-control on the same seeds and report reductions")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("grad-check", help="finite-difference check of all analytic gradients")
    s.add_argument("--cases", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_grad_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ForceDiffError as exc:
        print(f"forcediff: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"forcediff: invalid input: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
