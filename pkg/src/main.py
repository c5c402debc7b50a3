"""Command-line entry point: ``python -m src.main {generate,solve,sweep,eval}``."""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from src.config import settings
from src.models.reports import SolveReport, Tolerances
from src.models.scenario import Scenario
from src.models.schemas import GeneratorSettings, dump_scenario, load_experiment, load_scenario
from src.models.uncertainty import AmbiguitySet, SampleSpace
from src.services.experiment_service import (
    build_space,
    draw_datasets,
    evaluate_actual,
    experiment_service,
    generate_history,
    generate_scenario,
    solve_method,
)
from src.services.export_service import export_service
from src.services.uncertainty_service import build_reference
from src.utils.exceptions import ConfigurationError, SolverError, ValidationError
from src.utils.validators import audit_solution, validate_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3


def _setup_logging() -> None:
    level = logging.DEBUG if settings.DEBUG else getattr(logging, settings.LOG_LEVEL, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )


def _check_scenario(scenario: Scenario) -> None:
    problems = validate_scenario(scenario)
    if problems:
        raise ValidationError("Invalid scenario: " + "; ".join(problems))


def _problem(args: argparse.Namespace) -> Tuple[Scenario, SampleSpace, float, GeneratorSettings]:
    """Scenario, sample space and radius from ``--config`` or from the generator defaults."""
    gen = GeneratorSettings.from_defaults()
    if args.config:
        scenario, space, eps = load_scenario(args.config)
    else:
        scenario = generate_scenario(args.seed)
        space = build_space(gen)
        eps = gen.eps
    if args.eps is not None:
        eps = args.eps
    _check_scenario(scenario)
    return scenario, space, eps, gen


def cmd_generate(args: argparse.Namespace) -> int:
    overrides = {"num_gus": args.gus} if args.gus is not None else {}
    gen = GeneratorSettings.from_defaults(overrides)
    scenario = generate_scenario(args.seed, overrides)
    _check_scenario(scenario)
    space = build_space(gen)
    history = generate_history(args.seed, scenario, space, gen.num_samples)
    datasets = draw_datasets(args.seed, history.truths, space, scenario.num_slots, args.datasets)

    out = Path(args.output)
    dump_scenario(scenario, space, gen.eps, out / "scenario.json")
    export_service.write_history(history.samples, out / "history.csv")
    export_service.write_datasets(datasets, out / "datasets.csv")
    logger.info(f"[generate] seed={args.seed} I={scenario.num_gus} written to {out}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    scenario, space, eps, gen = _problem(args)
    if args.history:
        samples = export_service.read_history(args.history, scenario.num_gus)
    else:
        samples = generate_history(args.seed, scenario, space, gen.num_samples).samples
    refs = tuple(build_reference(row, space) for row in samples)
    amb = AmbiguitySet(space=space, references=refs, radius=eps)

    report: SolveReport = solve_method(args.method, scenario, amb, Tolerances())
    for problem in audit_solution(report, scenario, amb):
        logger.warning(f"[audit] {problem}")

    quota = scenario.uavs[0].quota
    export_service.write_solution(report, space, args.output, eps, quota)
    logger.info(f"[solve] {report.method} objective={report.objective:.9g} converged={report.converged}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_experiment(args.config)
    tables = experiment_service.run_sweep(config)
    checks = tables["checks"]
    failed = int((~checks["passed"].astype(bool)).sum()) if not checks.empty else 0
    logger.info(f"[sweep] {len(checks)} checks, {failed} failed; results in {config.output_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    scenario, _, _ = load_scenario(args.scenario)
    solution = Path(args.solution)
    dec = export_service.read_decisions(solution / "decisions.csv")
    traj = export_service.read_trajectory(solution / "trajectory.csv")
    expected = (scenario.num_gus, scenario.num_uavs, scenario.num_slots)
    if dec.shape != expected or traj.waypoints.shape[:2] != (scenario.num_uavs, scenario.num_slots + 1):
        raise ValidationError(f"Solution in {solution} does not match the scenario dimensions {expected}")
    datasets = export_service.read_datasets(args.datasets)
    for table in datasets:
        if table.shape[0] != scenario.num_gus or table.shape[1] not in (1, scenario.num_slots):
            raise ValidationError(f"Dataset shape {table.shape} does not match the scenario")

    stats = evaluate_actual(dec, traj, datasets, scenario)
    export_service.write_actual(args.method, stats, Path(args.output) / "actual.csv")
    logger.info(f"[eval] mean={stats[0]:.9g} std={stats[1]:.9g} over {len(datasets)} datasets")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drcoto",
        description="Distributionally robust task offloading and UAV trajectory planning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Random scenario, history and evaluation datasets")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--gus", type=int, default=None, help="number of ground users")
    gen.add_argument("--datasets", type=int, default=5, help="evaluation datasets to draw")
    gen.add_argument("--output", default=settings.OUTPUT_DIR)
    gen.set_defaults(func=cmd_generate)

    solve = sub.add_parser("solve", help="Solve one scenario with one method")
    solve.add_argument("--method", choices=["do", "so", "ro", "drcoto"], default="drcoto")
    solve.add_argument("--eps", type=float, default=None, help="ambiguity radius (overrides the file)")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--config", default=None, help="scenario JSON (generated from --seed when omitted)")
    solve.add_argument("--history", default=None, help="history CSV (generated from --seed when omitted)")
    solve.add_argument("--output", default=settings.OUTPUT_DIR)
    solve.set_defaults(func=cmd_solve)

    sweep = sub.add_parser("sweep", help="Run a parameter sweep")
    sweep.add_argument("--config", required=True, help="experiment JSON")
    sweep.set_defaults(func=cmd_sweep)

    ev = sub.add_parser("eval", help="Evaluate a solution on realized task sizes")
    ev.add_argument("--scenario", required=True)
    ev.add_argument("--solution", required=True, help="directory holding decisions.csv and trajectory.csv")
    ev.add_argument("--datasets", required=True)
    ev.add_argument("--method", default="solution", help="label for the output row")
    ev.add_argument("--output", default=settings.OUTPUT_DIR)
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        settings.validate()
        return args.func(args)
    except (ValidationError, ConfigurationError) as e:
        logger.error(f"[{args.command}] {e}")
        return EXIT_INVALID
    except SolverError as e:
        logger.error(f"[{args.command}] solver failed: {e}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
