"""Command-line front end

    python -m app simulate --d 16 --g 16 --runs 100 --seed 0x2a --protocol paper5
    python -m app sweep --preset desk --out table.csv
    python -m app offline --d 4 --g 4 --perm identity
    python -m app sort --g 4
    python -m app route-sort --g 8
    python -m app baseline
    python -m app verify prop1 --budget 200

Exit codes: 0 success, 1 validation, 2 invariant violation, 3 I/O.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, TextIO

from pydantic import ValidationError

from app import __version__
from app.config import Settings, get_sweep_preset
from app.models.experiment import (
    ExperimentSpec,
    LossPolicy,
    OutputFormat,
    PermSource,
    Protocol,
    ScheduleMode,
)
from app.models.network import NetworkConfig
from app.models.report import AggregateStats, ReportRow
from app.services.analysis_service import baseline_ds_slots
from app.services.experiment_service import SUITES, run_experiment, run_sweep, verify_suite
from app.services.offline_router import route_offline
from app.services.permutation_service import generate_permutation
from app.services.report_service import emit_report
from app.services.rng_service import parse_seed, random_keys
from app.services.sorting_service import KeyedRecord, get_sorter, route_by_sorting, sort_on_pops
from app.utils.exceptions import PopsError, ReportIOError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INVARIANT = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the validation code"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    try:
        return parse_seed(text)
    except PopsError as e:
        raise argparse.ArgumentTypeError(str(e))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key=value settings file")
    parser.add_argument("--log-level", help="Logging level")
    parser.add_argument("--seed", type=_seed, help="64-bit seed, decimal or 0x-hex")


def _add_network(parser: argparse.ArgumentParser, need_d: bool = True) -> None:
    if need_d:
        parser.add_argument("--d", type=int, help="Processors per group")
    parser.add_argument("--g", type=int, help="Number of groups")


def _add_output(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", type=Path, help="Report path (stdout when omitted)")
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], help="Report format")


def _add_routing(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--runs", type=int, help="Seeded runs")
    parser.add_argument("--protocol", choices=[p.value for p in Protocol], help="Step protocol")
    parser.add_argument("--schedule", choices=[s.value for s in ScheduleMode], help="Participation schedule")
    parser.add_argument("--perm", help="uniform, identity, reversal, stress or a permutation file")
    parser.add_argument("--c-eps", type=float, help="Schedule constant c + eps(g)")
    parser.add_argument("--loss-policy", choices=[p.value for p in LossPolicy], help="Reaction to LOSS_DETECTED")
    parser.add_argument("--immediate-exit", action="store_true", default=None, help="Delivered packets exit after one slot")
    parser.add_argument("--workers", type=int, help="Worker threads for independent runs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pops", description="POPS(d, g) permutation routing simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Seeded randomized routing runs on one network")
    _add_common(simulate)
    _add_network(simulate)
    _add_routing(simulate)
    _add_output(simulate)

    sweep = sub.add_parser("sweep", help="Randomized routing over a grid of network sizes")
    _add_common(sweep)
    _add_routing(sweep)
    _add_output(sweep)
    sweep.add_argument("--preset", help="desk, table or full")
    sweep.add_argument("--ratios", type=int, nargs="+", help="d/g ratios to include")

    offline = sub.add_parser("offline", help="Offline routing by edge coloring; prints the schedule as JSON")
    _add_common(offline)
    _add_network(offline)
    offline.add_argument("--perm", help="uniform, identity, reversal, stress or a permutation file")
    offline.add_argument("--out", type=Path, help="Schedule JSON path (stdout when omitted)")

    sort = sub.add_parser("sort", help="Sort random keys on POPS(g, g)")
    _add_common(sort)
    _add_network(sort, need_d=False)
    sort.add_argument("--dump-network", type=Path, help="Write the comparator network as JSON stage lists")

    route_sort = sub.add_parser("route-sort", help="Route a permutation by sorting on POPS(g, g)")
    _add_common(route_sort)
    _add_network(route_sort, need_d=False)
    route_sort.add_argument("--perm", help="uniform, identity, reversal or a permutation file")

    baseline = sub.add_parser("baseline", help="Slot counts of the deterministic baseline router")
    _add_common(baseline)
    baseline.add_argument("--preset", help="desk, table or full")

    verify = sub.add_parser("verify", help="Run an invariant suite")
    _add_common(verify)
    verify.add_argument("suite", help=f"one of: {', '.join(SUITES)}")
    verify.add_argument("--budget", type=int, help="Trials per configuration")
    return parser


def load_settings(args: argparse.Namespace) -> Settings:
    """Settings from env / .env, or from the --config file when given"""
    config: Optional[Path] = getattr(args, "config", None)
    if config is None:
        return Settings()
    if not config.is_file():
        raise ReportIOError(f"Cannot read config file {config}")
    return Settings(_env_file=config)


def _pick(value, default):
    return default if value is None else value


def _perm_source(text: str) -> tuple[PermSource, Optional[Path]]:
    try:
        source = PermSource(text.lower())
    except ValueError:
        return PermSource.FILE, Path(text)
    if source is PermSource.FILE:
        raise ValueError("--perm file needs the file path itself")
    return source, None


def build_spec(args: argparse.Namespace, settings: Settings, d: int, g: int) -> ExperimentSpec:
    source, path = _perm_source(_pick(args.perm, settings.perm))
    return ExperimentSpec(
        d=d,
        g=g,
        protocol=_pick(args.protocol, settings.protocol),
        schedule=_pick(args.schedule, settings.schedule),
        c_eps=_pick(args.c_eps, settings.c_eps),
        loss_policy=_pick(args.loss_policy, settings.loss_policy),
        immediate_exit=_pick(args.immediate_exit, settings.immediate_exit),
        perm_source=source,
        perm_path=path,
        runs=_pick(args.runs, settings.runs),
        seed=_pick(args.seed, settings.seed),
        output=_pick(args.format, settings.output_format),
        out_path=args.out,
        workers=_pick(args.workers, settings.parallel_runs),
        max_steps=settings.max_steps,
    )


def _summary_line(d: int, g: int, protocol: str, aggregate: AggregateStats) -> str:
    it = aggregate.iterations
    return (
        f"n={d * g} d={d} g={g} protocol={protocol} runs={aggregate.runs} "
        f"iterations mean={it.mean:.2f} sigma={it.sigma:.2f} max={it.max:.0f} "
        f"slots mean={aggregate.slots.mean:.2f}"
    )


def cmd_simulate(args, settings: Settings, out: TextIO, err: TextIO) -> int:
    spec = build_spec(args, settings, _pick(args.d, settings.d), _pick(args.g, settings.g))
    report = run_experiment(spec)
    emit_report(report.rows, spec.output, spec.out_path, stream=out)
    print(_summary_line(spec.d, spec.g, spec.protocol.value, report.aggregate), file=err)
    if report.losses:
        print(f"LOSS_DETECTED {report.losses} times", file=err)
    return EXIT_OK


def cmd_sweep(args, settings: Settings, out: TextIO, err: TextIO) -> int:
    preset = get_sweep_preset(_pick(args.preset, settings.sweep_preset))
    cells = [(d, g) for d, g in preset.cells() if args.ratios is None or d // g in args.ratios]
    base = build_spec(args, settings, 1, 1)
    rows: List[ReportRow] = []
    for spec, report in run_sweep(cells, base):
        rows.extend(report.rows)
        print(_summary_line(spec.d, spec.g, spec.protocol.value, report.aggregate), file=err)
    emit_report(rows, base.output, base.out_path, stream=out)
    return EXIT_OK


def _network(args, settings: Settings, square: bool = False) -> NetworkConfig:
    g = _pick(args.g, settings.g)
    return NetworkConfig(g if square else _pick(args.d, settings.d), g)


def cmd_offline(args, settings: Settings, out: TextIO, err: TextIO) -> int:
    cfg = _network(args, settings)
    source, path = _perm_source(_pick(args.perm, settings.perm))
    perm = generate_permutation(source, cfg, seed=_pick(args.seed, settings.seed), path=path)
    schedule, stats = route_offline(perm, cfg)
    text = schedule.dump().model_dump_json(indent=2) + "\n"
    if args.out:
        try:
            args.out.write_text(text, encoding="utf-8")
        except OSError as e:
            raise ReportIOError(f"Cannot write schedule to {args.out}: {e}")
    else:
        out.write(text)
    print(f"{cfg}: {stats.slots} slots, conflicts {sum(stats.slot_conflicts)}", file=err)
    return EXIT_OK


def cmd_sort(args, settings: Settings, out: TextIO, err: TextIO) -> int:
    cfg = _network(args, settings, square=True)
    keys = random_keys(_pick(args.seed, settings.seed), cfg.n)
    records, slots = sort_on_pops([KeyedRecord(int(k), i) for i, k in enumerate(keys)], cfg)
    if args.dump_network:
        try:
            args.dump_network.write_text(json.dumps(get_sorter(cfg).network.to_lists()) + "\n", encoding="utf-8")
        except OSError as e:
            raise ReportIOError(f"Cannot write network to {args.dump_network}: {e}")
    out.write(json.dumps({"keys": [r.key for r in records], "slots": slots}) + "\n")
    print(f"{cfg}: sorted {cfg.n} keys in {slots} slots", file=err)
    return EXIT_OK


def cmd_route_sort(args, settings: Settings, out: TextIO, err: TextIO) -> int:
    cfg = _network(args, settings, square=True)
    source, path = _perm_source(_pick(args.perm, settings.perm))
    perm = generate_permutation(source, cfg, seed=_pick(args.seed, settings.seed), path=path)
    stats = route_by_sorting(perm, cfg)
    out.write(stats.model_dump_json() + "\n")
    print(f"{cfg}: routed by sorting in {stats.slots} slots", file=err)
    return EXIT_OK


def cmd_baseline(args, settings: Settings, out: TextIO, err: TextIO) -> int:
    preset = get_sweep_preset(_pick(args.preset, "full"))
    out.write("n,d,g,baseline_slots\n")
    for d, g in preset.cells():
        out.write(f"{d * g},{d},{g},{baseline_ds_slots(NetworkConfig(d, g))}\n")
    return EXIT_OK


def cmd_verify(args, settings: Settings, out: TextIO, err: TextIO) -> int:
    report = verify_suite(args.suite, _pick(args.budget, settings.verify_budget))
    out.write(report.model_dump_json(indent=2) + "\n")
    return EXIT_OK if report.passed else EXIT_INVARIANT


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "offline": cmd_offline,
    "sort": cmd_sort,
    "route-sort": cmd_route_sort,
    "baseline": cmd_baseline,
    "verify": cmd_verify,
}


def main(argv: Optional[List[str]] = None, out: TextIO = sys.stdout, err: TextIO = sys.stderr) -> int:
    """Parse arguments, run one subcommand and return its exit code"""
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args)
        logging.basicConfig(
            level=getattr(logging, (args.log_level or settings.log_level).upper(), logging.INFO),
            format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            stream=err,
        )
        return COMMANDS[args.command](args, settings, out, err)
    except PopsError as e:
        logger.error(f"{e.code}: {e}")
        print(f"error: {e.code}: {e}", file=err)
        return e.exit_code
    except (ValidationError, ValueError) as e:
        logger.error(f"Invalid arguments: {e}")
        print(f"error: {e}", file=err)
        return EXIT_VALIDATION
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        print(f"error: {e}", file=err)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
