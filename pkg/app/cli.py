"""
Command-line interface
gen-data, train, attack, game, report, run and serve subcommands
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app import __version__
from app.config import configure_logging, get_settings
from app.errors import InvalidParameterError, LabError
from app.models.experiment import PRESETS, Defense, ExperimentConfig, ReportFormat
from app.models.game import Learner, SqmiEstimate
from app.services.data import generate_synthetic, save_csv
from app.services.experiment import attack_saved_model, play_game, run_experiment, run_pair_leakage, train_defense
from app.services.report import emit_report, load_report, render_table
from app.utils.encoding import atomic_write_text, dump_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2


def _add_config_flags(parser: argparse.ArgumentParser, seed_required: bool = False) -> None:
    parser.add_argument("--config", type=Path, help="JSON file whose keys are ExperimentConfig fields")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="Start from a named preset")
    parser.add_argument("--seed", type=int, required=seed_required, help="Run seed")
    parser.add_argument("--K", type=int, dest="K", help="Number of Split-AI sub-models")
    parser.add_argument("--L", type=int, dest="L", help="Non-model indices per sample")
    parser.add_argument("--n-members", type=int, help="Member-set size")
    parser.add_argument("--lambdas", type=float, nargs="+", help="Ground-truth weights for distillation")
    parser.add_argument("--knowledge-fraction", type=float, help="Attacker knowledge fraction")
    parser.add_argument("--csv", type=str, help="Use a CSV dataset instead of synthetic data")
    parser.add_argument("--output-dir", type=str, help="Output directory")
    parser.add_argument("--formats", nargs="+", choices=[f.value for f in ReportFormat], help="Report formats")
    parser.add_argument("--n-jobs", type=int, help="Parallel jobs")


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Preset or config file, then command-line overrides, validated as a whole"""
    if args.config is not None and args.preset is not None:
        raise InvalidParameterError("Use either --config or --preset, not both")
    if args.config is not None:
        if not args.config.exists():
            raise InvalidParameterError(f"Config file not found: {args.config}")
        data = json.loads(args.config.read_text(encoding="utf-8"))
    elif args.preset is not None:
        data = PRESETS[args.preset]().model_dump(mode="json")
    else:
        data = ExperimentConfig().model_dump(mode="json")

    overrides = {
        "seed": args.seed,
        "K": args.K,
        "L": args.L,
        "n_members": args.n_members,
        "lambdas": args.lambdas,
        "knowledge_fraction": args.knowledge_fraction,
        "output_dir": args.output_dir,
        "formats": args.formats,
        "n_jobs": args.n_jobs,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.csv is not None:
        data["dataset"] = {"source": "csv", "csv_path": args.csv}
    return ExperimentConfig.model_validate(data)


# Subcommands


def cmd_gen_data(args: argparse.Namespace) -> int:
    dataset = generate_synthetic(args.n_classes, args.n_features, args.n_per_class, args.flip_noise, args.seed)
    save_csv(dataset, args.out)
    print(dump_json({"path": str(args.out), **dataset.manifest(args.seed)}), end="")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    summary = train_defense(cfg, Defense(args.defense), args.out)
    print(dump_json(summary), end="")
    return EXIT_OK


def cmd_attack(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    row = attack_saved_model(cfg, args.model_dir, all_average=args.all_average)
    if args.out is not None:
        atomic_write_text(args.out, dump_json(row.attack_report().model_dump(mode="json")))
    print(
        render_table(
            ["Attack", "Family", "Accuracy", "Queries/target"],
            [[a.name, a.family.value, a.accuracy, a.queries_per_target] for a in row.attacks],
            title=f"{row.defense.value}: train {row.train_accuracy:.4f}, test {row.test_accuracy:.4f}",
        )
    )
    return EXIT_OK


def cmd_game(args: argparse.Namespace) -> int:
    cfg = build_config(args) if (args.config or args.preset) else ExperimentConfig.game_tiny()
    if args.pair_thresholds:
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        buckets = run_pair_leakage(cfg, args.pair_thresholds, n_jobs=args.n_jobs)
        print(dump_json({"pairs": [b.model_dump(mode="json") for b in buckets]}), end="")
        return EXIT_OK
    result = play_game(
        cfg,
        Learner(args.learner),
        adversary=args.adversary,
        trials=args.trials,
        n=args.n,
        challenge_index=args.challenge_index,
        alpha=args.alpha,
        seed=args.seed,
        n_jobs=args.n_jobs,
        transcript_path=args.transcript,
    )
    print(dump_json(result.model_dump(mode="json")), end="")
    partial = result.partial if isinstance(result, SqmiEstimate) else result.sqmi_distilled.partial
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    report = load_report(args.input)
    formats = args.formats or [f.value for f in ReportFormat]
    emit_report(report, formats, args.out or Path(args.input).parent)
    return EXIT_OK if report.complete else EXIT_PARTIAL


def cmd_run(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    report = run_experiment(cfg)
    if not report.complete:
        logger.warning(f"⚠️ Partial report: failed stages {report.failed_stages}")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    settings = get_settings()
    uvicorn.run(
        "main:app",
        host=args.host or settings.host,
        port=args.port or settings.port,
        log_level=settings.log_level.lower(),
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mia-shield", description="Membership-inference defense lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="Write a synthetic binary dataset as CSV")
    p.add_argument("--n-classes", type=int, default=10)
    p.add_argument("--n-features", type=int, default=100)
    p.add_argument("--n-per-class", type=int, default=400)
    p.add_argument("--flip-noise", type=float, default=0.4)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train", help="Train and save one defense")
    _add_config_flags(p)
    p.add_argument("--defense", choices=[d.value for d in Defense], required=True)
    p.add_argument("--out", type=Path, required=True, help="Model directory")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("attack", help="Attack a saved model")
    _add_config_flags(p)
    p.add_argument("--model-dir", type=Path, required=True)
    p.add_argument("--all-average", action="store_true", help="Query a Split-AI directory without adaptive inference")
    p.add_argument("--out", type=Path, help="Write the per-attack report as JSON")
    p.set_defaults(handler=cmd_attack)

    p = sub.add_parser("game", help="Play the single-query membership game")
    _add_config_flags(p)
    p.add_argument("--learner", choices=[lr.value for lr in Learner], default=Learner.SPLITAI.value)
    p.add_argument("--adversary", choices=["metric", "random"], default="metric")
    p.add_argument("--trials", type=int)
    p.add_argument("--n", type=int, help="Half the number of game points")
    p.add_argument("--challenge-index", type=int, help="Let the adversary fix the challenged index")
    p.add_argument("--alpha", type=float, help="With --learner distilled: check the stability bound at alpha")
    p.add_argument("--transcript", type=Path, help="Write one JSON line per trial")
    p.add_argument(
        "--pair-thresholds",
        nargs="+",
        type=float,
        help="Instead of a game: correlated-pair leakage of Split-AI bucketed by these L2 distances",
    )
    p.set_defaults(handler=cmd_game)

    p = sub.add_parser("report", help="Re-emit a report.json in other formats")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--formats", nargs="+", choices=[f.value for f in ReportFormat])
    p.add_argument("--out", type=Path)
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("run", help="Full pipeline")
    _add_config_flags(p, seed_required=True)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("serve", help="Start the HTTP API")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except (ValidationError, InvalidParameterError, json.JSONDecodeError) as exc:
        logger.error(f"❌ Invalid configuration: {exc}")
        return EXIT_INVALID
    except LabError as exc:
        logger.error(f"❌ {exc}", exc_info=True)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
