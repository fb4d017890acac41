"""Command line entry point: run, train, eval, study, serve"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from app.core.config import Settings
from app.core.exceptions import BlockLayoutMismatch, ConfigError, IdMismatch, KineticUQError, SampleMismatch
from app.schemas.scenario import ScenarioConfig
from app.services import pipeline, storage
from app.services.bifidelity import Fidelity

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_SAMPLES = 3
EXIT_FAILURE = 4


def load_scenario(path: Optional[Path], settings: Settings, full_scale: bool = False, seed: Optional[int] = None) -> ScenarioConfig:
    """--config first, then KINETIC_UQ_CONFIG_PATH"""
    path = path or (Path(settings.config_path) if settings.config_path else None)
    if path is None:
        raise ConfigError("no scenario config: pass --config or set KINETIC_UQ_CONFIG_PATH")
    scenario = ScenarioConfig.from_file(path)
    if full_scale:
        scenario = scenario.at_full_scale()
    if seed is not None:
        scenario = ScenarioConfig.from_dict({**scenario.model_dump(mode="json"), "seed": seed})
    return scenario


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="Scenario JSON file")
    parser.add_argument("--out", type=Path, required=True, help="Output directory")
    parser.add_argument("--workers", type=int, default=1, help="Worker processes for sample sweeps")
    parser.add_argument("--paper-scale", dest="full_scale", action="store_true", help="Use the published resolutions and sample sizes")
    parser.add_argument("--seed", type=int, help="Override the scenario seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinetic-uq", description="Bi-fidelity UQ for the multiscale Boltzmann equation")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Solve one model for every sample, one CSV per sample")
    _common(run)
    run.add_argument("--model", choices=[f.value for f in Fidelity], required=True)
    run.add_argument("--samples", type=Path, help="CSV with columns id, z1..zd (default: seeded training stream)")
    run.add_argument("--trajectory-every", type=int, help="Also dump the fields every K steps")

    train = commands.add_parser("train", help="Offline stage: low sweep, greedy selection, high runs, assembly")
    _common(train)
    train.add_argument("--budget", type=int, help="Number N of high-fidelity runs")
    train.add_argument("--samples", type=Path, help="Training set CSV (default: seeded training stream)")

    evaluate = commands.add_parser("eval", help="Online stage over a test set")
    evaluate.add_argument("--surrogate", type=Path, required=True, help="Directory written by train")
    evaluate.add_argument("--out", type=Path, required=True)
    evaluate.add_argument("--samples", type=Path, help="Test set CSV (default: seeded test stream)")
    evaluate.add_argument("--r-list", type=int, nargs="+", help="Nested budgets for the error table")
    evaluate.add_argument("--with-reference", action="store_true", default=None, help="Run the high-fidelity references")
    evaluate.add_argument("--workers", type=int, default=1)

    study = commands.add_parser("study", help="Train and evaluate, error versus r (optionally per epsilon / N_v^l)")
    _common(study)
    study.add_argument("--r-list", type=int, nargs="+")
    study.add_argument("--epsilons", type=float, nargs="+", help="Knudsen numbers to sweep")
    study.add_argument("--low-lattices", type=int, nargs="+", help="Low-fidelity velocity lattices to sweep")

    serve = commands.add_parser("serve", help="HTTP reconstruction service")
    serve.add_argument("--surrogate", type=Path, help="Directory written by train")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _dispatch(args: argparse.Namespace, settings: Settings):
    if args.command == "eval":
        samples = None
        if args.samples is not None:
            scenario = ScenarioConfig.from_dict(storage.load_manifest(args.surrogate).scenario)
            samples = pipeline.load_samples(scenario, path=args.samples, stream=pipeline.TEST_STREAM)
        result = pipeline.evaluate(
            args.surrogate, args.out, samples=samples, r_list=args.r_list,
            with_reference=args.with_reference, workers=args.workers,
        )
        for row in result.report.rows:
            print(f"r={row.r}\trho={row.bifidelity.rho:.6e}\tu1={row.bifidelity.u1:.6e}\tT={row.bifidelity.T:.6e}")
        return

    if args.command == "serve":
        import uvicorn
        from app.core.config import settings as app_settings

        if args.surrogate is not None:
            app_settings.surrogate_dir = str(args.surrogate)
        uvicorn.run("app.main:app", host=args.host, port=args.port)
        return

    scenario = load_scenario(args.config, settings, full_scale=args.full_scale, seed=args.seed)
    if args.command == "run":
        samples = pipeline.load_samples(scenario, path=args.samples)
        manifest = pipeline.run_samples(
            Fidelity(args.model), scenario, samples, args.out,
            workers=args.workers, trajectory_every=args.trajectory_every,
        )
        print(f"wrote {manifest.sample_count} fields to {args.out}")
    elif args.command == "train":
        samples = pipeline.load_samples(scenario, path=args.samples) if args.samples else None
        trained = pipeline.train(scenario, args.out, budget=args.budget, workers=args.workers, samples=samples)
        for k, d in enumerate(trained.manifest.residuals, start=1):
            print(f"k={k}\tid={trained.manifest.selected_ids[k - 1]}\td_k={d:.6e}")
    elif args.command == "study":
        table = pipeline.study(
            scenario, args.out, r_list=args.r_list, epsilons=args.epsilons,
            low_lattices=args.low_lattices, workers=args.workers,
        )
        print(table.to_string(index=False))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = Settings()
    logging.basicConfig(level=settings.log_level)
    try:
        _dispatch(args, settings)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SampleMismatch, BlockLayoutMismatch, IdMismatch) as e:
        print(f"sample mismatch: {e}", file=sys.stderr)
        return EXIT_SAMPLES
    except KineticUQError as e:
        print(f"failed: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
