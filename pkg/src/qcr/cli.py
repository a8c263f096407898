"""``qcr`` command line: train, eval, noise-sweep, auth-demo, verify-oracles."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, auth, harness, oracles, qsim
from .agents import load_checkpoint
from .env import INSERTION_POINTS, AngularDomain, EnvConfig, NoiseConfig

NOISE_CHOICES = ("bitflip", "depolarizing", "amplitude")


class UsageFailure(Exception):
    """Bad flag value; reported on one line with exit status 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageFailure(message)


# -- flag parsing helpers --------------------------------------------------------


def parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be a comma-separated list of integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def parse_grid(text: str) -> list[float]:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start or not (0 <= start and stop <= 1):
        raise argparse.ArgumentTypeError(f"grid {text!r} must satisfy 0 <= start <= stop <= 1 and step > 0")
    return harness.noise_grid(start, stop, step)


def probability(text: str) -> float:
    p = float(text)
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in [0, 1], got {text}")
    return p


def positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return n


def resolve_seed(flag_seed: int) -> int:
    env = os.environ.get("QCR_SEED")
    if env is None or env == "":
        return flag_seed
    try:
        return int(env)
    except ValueError:
        raise UsageFailure(f"QCR_SEED must be an integer, got {env!r}") from None


def _noise_from(args) -> Optional[NoiseConfig]:
    if getattr(args, "noise", None) is None:
        return None
    return NoiseConfig(args.noise, args.noise_p, args.insertion)


def _env_flags(p: argparse.ArgumentParser, copies_default: Optional[int]) -> None:
    p.add_argument("--penalty", type=float, default=None, help="per-copy penalty X (default 0.5)")
    p.add_argument("--copies", type=positive_int, default=copies_default, help="copy budget N per episode")
    p.add_argument("--shots", type=positive_int, default=None, help="shots per probe (default 4)")
    p.add_argument("--angles", type=positive_int, default=None, help="number of probe angles K (default 8)")
    p.add_argument("--domain-start", type=float, default=None, help="start a of the angle domain [a, a+pi)")


def _noise_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noise", choices=NOISE_CHOICES, default=None)
    p.add_argument("--noise-p", type=probability, default=0.0)
    p.add_argument("--insertion", choices=INSERTION_POINTS, default="pre_measurement")


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", "-s", type=int, default=0, help="master seed (QCR_SEED overrides)")
    p.add_argument("--seeds", type=parse_seeds, default=(0, 1, 2), help="evaluation seeds, e.g. 0,1,2")
    p.add_argument("--greedy", action="store_true", help="act greedily instead of sampling")
    p.add_argument("--out", type=Path, default=None, help="run directory")
    p.add_argument("--jobs", type=positive_int, default=1, help="rollout worker processes")
    p.add_argument("--episodes", type=positive_int, default=1000, help="evaluation episodes per seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qcr", description="Quantum challenge-response RL toolkit")
    parser.add_argument("--version", action="version", version=f"qcr {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train an agent and write training_log.csv and ckpt.json")
    p.add_argument("--agent", choices=("c", "d", "s"), type=str.lower, default="s")
    _env_flags(p, None)
    _noise_flags(p)
    _common_flags(p)
    p.add_argument("--epochs", type=positive_int, default=300)
    p.add_argument("--batch", type=positive_int, default=30)
    p.add_argument("--eval-copies", type=positive_int, default=2, help="copy budget when evaluating")
    p.add_argument("--evaluate", action="store_true", help="also write eval.json after training")

    p = sub.add_parser("eval", help="evaluate a checkpoint and write eval.json")
    p.add_argument("--checkpoint", type=Path, required=True)
    _env_flags(p, 2)
    _noise_flags(p)
    _common_flags(p)

    p = sub.add_parser("noise-sweep", help="accuracy versus channel strength, written to noise_sweep.csv")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--channel", choices=NOISE_CHOICES, required=True)
    p.add_argument("--insertion", choices=INSERTION_POINTS, default="pre_measurement")
    p.add_argument("--grid", type=parse_grid, default=harness.noise_grid())
    _env_flags(p, 2)
    _common_flags(p)

    p = sub.add_parser("auth-demo", help="enroll, run one authentication session and optionally an attack")
    p.add_argument("--checkpoint", type=Path, default=None, help="enrolled S-agent checkpoint (trains one if absent)")
    p.add_argument("--domain-start", type=float, default=0.0)
    p.add_argument("--penalty", type=float, default=auth.ENROLL_PENALTY, help="enrollment training penalty")
    p.add_argument("--epochs", type=positive_int, default=300)
    p.add_argument("--challenges", type=positive_int, default=auth.DEFAULT_CHALLENGES)
    p.add_argument("--threshold", type=float, default=auth.DEFAULT_THRESHOLD)
    p.add_argument("--password", default="correct horse", help="password presented by the prover")
    p.add_argument("--enrolled-password", default="correct horse", help="password stored at enrollment")
    p.add_argument("--show-domain", action="store_true", help="write the secret domain into the transcript")
    p.add_argument("--eve", action="store_true", help="also run the mismatched-domain attack")
    p.add_argument("--eve-offset", type=float, default=auth.DEFAULT_EVE_OFFSET)
    _noise_flags(p)
    _common_flags(p)

    sub.add_parser("verify-oracles", help="run the analytic, finite-difference and parameter-shift checks")
    return parser


# -- commands -------------------------------------------------------------------------


def _env_from(args, base: EnvConfig) -> EnvConfig:
    changes = {}
    for flag, name in (("penalty", "penalty"), ("copies", "n_copies"), ("shots", "shots"), ("angles", "n_angles")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "domain_start", None) is not None:
        changes["domain"] = AngularDomain(args.domain_start)
    return base.replace(**changes)


def _require_out(args) -> Path:
    if args.out is None:
        raise UsageFailure("--out DIR is required")
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def cmd_train(args) -> int:
    out = _require_out(args)
    train_env = _env_from(args, EnvConfig()).replace(noise=_noise_from(args))
    run = harness.RunConfig(
        agent_type=args.agent,
        env=train_env,
        eval_env=train_env.replace(n_copies=args.eval_copies, noise=None),
        epochs=args.epochs,
        batch=args.batch,
        seeds=args.seeds,
        eval_episodes=args.episodes,
        greedy=args.greedy,
        jobs=args.jobs,
    )
    _, report = harness.train_to_dir(run, args.seed, out, evaluate_after=args.evaluate)
    last = report.rows[-1] if report.rows else None
    if report.aborted:
        print(f"qcr: training aborted ({report.aborted}); partial log in {out}", file=sys.stderr)
        return 1
    print(
        f"trained {run.agent_type}-agent for {len(report.rows)} epochs: "
        f"final avg steps {last['avg_steps']:.2f}, batch accuracy {last['batch_accuracy']:.2f} -> {out}"
    )
    if report.metrics:
        mean, std = harness.aggregate_seeds(list(report.metrics.values()))
        print(f"evaluation accuracy {harness.format_accuracy(mean, std)}")
    return 0


def _load(args):
    if not args.checkpoint.is_file():
        raise UsageFailure(f"checkpoint {args.checkpoint} not found")
    return load_checkpoint(args.checkpoint)


def cmd_eval(args) -> int:
    out = _require_out(args)
    agent = _load(args)
    cfg = _env_from(args, agent.config).replace(noise=_noise_from(args))
    harness.write_config(
        out,
        "eval",
        {"checkpoint": str(args.checkpoint), "env": cfg.to_dict(), "seeds": list(args.seeds),
         "episodes": args.episodes, "greedy": args.greedy},
    )
    per_seed = harness.evaluate_seeds(agent, cfg, args.seeds, args.episodes, args.greedy)
    doc = harness.eval_document(agent.agent_type, per_seed)
    harness.write_json(doc, out / "eval.json")
    print(f"accuracy {harness.format_accuracy(doc['accuracy_mean'], doc['accuracy_std'])} -> {out / 'eval.json'}")
    return 0


def cmd_noise_sweep(args) -> int:
    out = _require_out(args)
    agent = _load(args)
    cfg = _env_from(args, agent.config).replace(noise=None)
    channel = qsim.canonical_channel(args.channel)
    harness.write_config(
        out,
        "noise-sweep",
        {"checkpoint": str(args.checkpoint), "env": cfg.to_dict(), "channel": channel, "insertion": args.insertion,
         "grid": list(args.grid), "seeds": list(args.seeds), "episodes": args.episodes, "greedy": args.greedy},
    )
    rows = harness.noise_sweep(agent, cfg, channel, args.grid, args.insertion, args.seeds, args.episodes, args.greedy)
    harness.write_noise_sweep(rows, out / "noise_sweep.csv")
    for r in rows:
        print(f"{r['channel']} p={r['p']:.2f} accuracy {harness.format_accuracy(r['accuracy'], r['std'])}")
    return 0


def cmd_auth_demo(args) -> int:
    out = _require_out(args)
    run = harness.RunConfig(agent_type="S", env=EnvConfig(penalty=args.penalty), epochs=args.epochs, jobs=args.jobs)
    harness.write_config(
        out,
        "auth-demo",
        {"checkpoint": None if args.checkpoint is None else str(args.checkpoint), "run": run.to_dict(),
         "challenges": args.challenges, "threshold": args.threshold, "seed": args.seed, "eve": args.eve,
         "eve_offset": args.eve_offset, "domain_redacted": not args.show_domain},
    )
    if args.checkpoint is not None:
        agent = _load(args)
        profile = auth.VerifierProfile(agent, agent.config.domain.start, {"source": str(args.checkpoint)})
        if not math.isclose(profile.domain_start, args.domain_start, abs_tol=1e-12):
            raise UsageFailure(
                f"checkpoint was trained on domain start {profile.domain_start}, not {args.domain_start}"
            )
    else:
        profile = auth.enroll(args.domain_start, run, args.seed)
        profile.save(out / "profile.json")
    session = auth.AuthSession(
        args.domain_start, args.challenges, args.threshold, auth.Credential.create(args.enrolled_password, b"qcr-demo")
    )
    result = auth.run_session(profile, session, args.seed, password=args.password, noise=_noise_from(args),
                              greedy=args.greedy)
    doc = result.to_document(args.domain_start, redact_domain=not args.show_domain)
    if args.eve:
        report = auth.eve_attack(
            args.domain_start, args.domain_start + args.eve_offset, session_length=args.challenges,
            threshold=args.threshold, seed=args.seed, run=run,
        )
        doc["eve"] = {
            "offset": args.eve_offset,
            "per_bit_accuracy": report.per_bit_accuracy,
            "bits": report.n_bits,
            "acceptance_rate": report.acceptance_rate,
            "sessions": report.n_sessions,
            "predicted_acceptance": report.predicted_acceptance,
        }
    harness.write_json(doc, out / "auth_transcript.json")
    if not result.classical_ok:
        print("classical factor failed: rejected before any quantum challenge")
    else:
        print(f"{result.n_correct}/{len(result.challenges)} bits correct, decision: {doc['decision']}")
    if args.eve:
        print(f"eve per-bit accuracy {doc['eve']['per_bit_accuracy']:.3f}, "
              f"session acceptance {doc['eve']['acceptance_rate']:.3f}")
    return 0


def cmd_verify_oracles(args) -> int:
    results = oracles.run_all()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "noise-sweep": cmd_noise_sweep,
    "auth-demo": cmd_auth_demo,
    "verify-oracles": cmd_verify_oracles,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if hasattr(args, "seed"):
            args.seed = resolve_seed(args.seed)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
        )
        return COMMANDS[args.command](args)
    except UsageFailure as exc:
        print(f"qcr: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"qcr: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
