"""`sbs` command line: permute -> train -> reconstruct -> eval, plus analysis and repro."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import subprocess
import sys
import time
from importlib import metadata
from pathlib import Path

from pydantic import ValidationError

from kernelinr.config import config_hash, load_config
from kernelinr.engine.cnn import evaluate_accuracy
from kernelinr.engine.fixtures import make_tiny_fixture
from kernelinr.engine.smoothing import layer_orders, layer_path_cost, layer_smoothness_energy
from kernelinr.engine.trainer import (
    compression_ratio,
    permutation_overhead,
    reconstruct,
    train,
    write_history_csv,
)
from kernelinr.engine.weights import apply_permutation, bundle_meta, invert_permutation
from kernelinr.exceptions import (
    CorruptionError,
    FormatError,
    InvalidInputError,
    NumericError,
    RefusalError,
)
from kernelinr.models.analysis import LayerPermutationReport, OrderingConfig
from kernelinr.models.enums import EigSolver, EncoderKind, OrderingStrategy, Refinement, StartRule
from kernelinr.models.report import RunManifest
from kernelinr.pipeline.analysis import (
    NtkStudySettings,
    layer_target,
    load_matrix,
    matrix_target,
    ntk_study,
    spectral_rows,
    spectrum_study,
    write_spectral_csv,
    write_spectrum_csv,
)
from kernelinr.pipeline.repro import repro
from kernelinr.storage.local import LocalFileStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_NUMERIC = 4

_STRATEGY_NAMES = {
    "identity": OrderingStrategy.IDENTITY,
    "uos": OrderingStrategy.UOS,
    "mos": OrderingStrategy.MOS,
    "cosine": OrderingStrategy.COSINE_BASELINE,
}


class CommandResult:
    """What a command read and wrote, for its RunManifest."""

    def __init__(self, inputs=(), outputs=(), seeds=(), config: str = "", code: int = EXIT_OK):
        self.inputs = [str(p) for p in inputs]
        self.outputs = [str(p) for p in outputs]
        self.seeds = list(seeds)
        self.config = config
        self.code = code


def _store() -> LocalFileStore:
    return LocalFileStore()


def _hash_args(args: argparse.Namespace) -> str:
    payload = json.dumps({k: v for k, v in sorted(vars(args).items()) if k != "handler"}, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()


# ── Commands ─────────────────────────────────────────────────────────


def cmd_permute(args: argparse.Namespace) -> CommandResult:
    store = _store()
    bundle = store.load_bundle(args.bundle)
    config = OrderingConfig(
        strategy=_STRATEGY_NAMES[args.strategy],
        start_rule=args.start_rule,
        refinement=args.refinement,
        max_passes=args.max_passes,
    )
    table = layer_orders(bundle, config)
    permuted = apply_permutation(bundle, table)
    store.save_table(table, args.out_table)
    overhead = permutation_overhead(table, bundle)
    logger.info("Permuted %d layers | strategy=%s | table_overhead=%.2f%%", bundle.layer_count, args.strategy, overhead * 100)

    outputs = [args.out_table]
    if args.report:
        rows = [
            LayerPermutationReport(
                layer=i,
                strategy=config.strategy,
                path_cost_before=layer_path_cost(before),
                path_cost_after=layer_path_cost(after),
                smoothness_energy_before=layer_smoothness_energy(before),
                smoothness_energy_after=layer_smoothness_energy(after),
            )
            for i, (before, after) in enumerate(zip(bundle.layers, permuted.layers))
        ]
        with open(args.report, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(LayerPermutationReport.model_fields))
            for row in rows:
                writer.writerow(
                    [
                        row.layer,
                        args.strategy,
                        repr(row.path_cost_before),
                        repr(row.path_cost_after),
                        repr(row.smoothness_energy_before),
                        repr(row.smoothness_energy_after),
                    ]
                )
        outputs.append(args.report)
    return CommandResult(inputs=[args.bundle], outputs=outputs, config=_hash_args(args))


def cmd_train(args: argparse.Namespace) -> CommandResult:
    store = _store()
    config = load_config(args.config, args.set)
    bundle = store.load_bundle(args.bundle)
    inputs = [args.bundle] + ([args.config] if args.config else [])
    if args.table is None:
        table = layer_orders(bundle, config.ordering_config())
    elif args.table.lower() == "none":
        table = None
    else:
        table = store.load_table(args.table)
        inputs.append(args.table)

    checkpoint, history = train(bundle, table, config)
    store.save_checkpoint(checkpoint, args.out_model)
    outputs = [args.out_model]
    if args.history:
        write_history_csv(history, args.history)
        outputs.append(args.history)
    if args.out_meta:
        store.save_meta(bundle_meta(bundle), args.out_meta)
        outputs.append(args.out_meta)
    if args.out_table and table is not None:
        store.save_table(table, args.out_table)
        outputs.append(args.out_table)
    logger.info(
        "Trained | recon_mse=%.6g | compression_ratio=%.4f",
        history.final_recon_mse,
        compression_ratio(checkpoint, bundle, table),
    )
    return CommandResult(inputs=inputs, outputs=outputs, seeds=[config.seed, config.rff.seed], config=config_hash(config))


def cmd_reconstruct(args: argparse.Namespace) -> CommandResult:
    store = _store()
    checkpoint = store.load_checkpoint(args.model)
    meta = store.load_meta(args.bundle_meta)
    inputs = [args.model, args.bundle_meta]
    table = checkpoint.table
    if args.table is not None and args.table.lower() == "none":
        table = None
    elif args.table is not None:
        table = store.load_table(args.table)
        inputs.append(args.table)
    inverse = invert_permutation(table) if table is not None else None
    bundle = reconstruct(checkpoint, meta, inverse)
    store.save_bundle(bundle, args.out)
    return CommandResult(inputs=inputs, outputs=[args.out], config=_hash_args(args))


def cmd_eval(args: argparse.Namespace) -> CommandResult:
    store = _store()
    accuracy = evaluate_accuracy(store.load_netspec(args.spec), store.load_bundle(args.bundle), store.load_dataset(args.data))
    print(f"accuracy={accuracy!r}")
    return CommandResult(inputs=[args.spec, args.bundle, args.data], config=_hash_args(args))


def _parse_target(raw: str):
    """A matrix file, or `<bundle.sbsw>:<layer>` for one bundle layer."""
    path, _, layer = raw.rpartition(":")
    if path and layer.isdigit() and Path(path).suffix == ".sbsw":
        return layer_target(_store().load_bundle(path), int(layer)), path
    return matrix_target(load_matrix(raw)), raw


def cmd_ntk_report(args: argparse.Namespace) -> CommandResult:
    target, source = _parse_target(args.target)
    settings = NtkStudySettings(
        hidden=args.hidden,
        seed=args.seed,
        pe_levels=args.levels,
        rff_sigma=args.sigma,
        rff_features=args.features,
        solver=args.solver,
    )
    encoders = args.encoder or [EncoderKind.NONE, EncoderKind.PE, EncoderKind.RFF]
    write_spectral_csv(spectral_rows(ntk_study(target, encoders, settings)), args.out)
    return CommandResult(inputs=[source], outputs=[args.out], seeds=[args.seed], config=_hash_args(args))


def cmd_spectrum(args: argparse.Namespace) -> CommandResult:
    spectra = spectrum_study(load_matrix(args.matrix), args.cutoff)
    write_spectrum_csv(spectra, args.out)
    for tag, report in spectra.items():
        print(f"low_freq_fraction[{tag.value}]={report.low_freq_fraction!r}")
    return CommandResult(inputs=[args.matrix], outputs=[args.out], config=_hash_args(args))


def cmd_repro(args: argparse.Namespace) -> CommandResult:
    summary = repro(args.fixture, args.seeds, args.out_dir)
    for check in summary.checks:
        print(f"{check.name}: {check.wins}/{check.trials} {'PASS' if check.passed else 'FAIL'}")
    print(f"overall: {'PASS' if summary.all_passed else 'FAIL'}")
    out = Path(args.out_dir)
    return CommandResult(
        outputs=[out / "recon_mse.csv", out / "spectral.csv", out / "summary.csv"],
        seeds=summary.seeds,
        config=_hash_args(args),
        code=EXIT_OK if summary.all_passed else EXIT_FAILURE,
    )


def cmd_fixture(args: argparse.Namespace) -> CommandResult:
    store = _store()
    spec, bundle, dataset = make_tiny_fixture(seed=args.seed, classes=args.classes)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "tiny.sbsw", out / "tiny.net.json", out / "tiny.sbsd"]
    store.save_bundle(bundle, paths[0])
    store.save_netspec(spec, paths[1])
    store.save_dataset(dataset, paths[2])
    logger.info("Fixture written | accuracy=%.4f", bundle.source_accuracy)
    return CommandResult(outputs=paths, seeds=[args.seed], config=_hash_args(args))


def cmd_replay(args: argparse.Namespace) -> CommandResult:
    manifest = _store().load_manifest(args.manifest)
    logger.info("Replaying | command=%s", manifest.command)
    code = dispatch(manifest.argv)
    return CommandResult(inputs=[args.manifest], config=manifest.config_hash, code=code)


# ── Parser ───────────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbs", description=__doc__)
    level = parser.add_mutually_exclusive_group()
    level.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    level.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    parser.add_argument("--manifest", help="RunManifest path (default: <first output>.manifest.json)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("permute", help="compute a per-layer permutation table")
    p.add_argument("--bundle", required=True)
    p.add_argument("--strategy", choices=sorted(_STRATEGY_NAMES), default="uos")
    p.add_argument("--start-rule", type=StartRule, choices=list(StartRule), default=StartRule.SLOT_ZERO)
    p.add_argument("--refinement", type=Refinement, choices=list(Refinement), default=Refinement.NONE)
    p.add_argument("--max-passes", type=int, default=50)
    p.add_argument("--out-table", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_permute)

    p = sub.add_parser("train", help="fit the coordinate MLP to a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--table", help="permutation table path, or 'none'; default derives one from the config strategy")
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out-model", required=True)
    p.add_argument("--history")
    p.add_argument("--out-meta")
    p.add_argument("--out-table", help="save the derived permutation table")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("reconstruct", help="rebuild a bundle from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--bundle-meta", required=True)
    p.add_argument("--table", help="override the table stored in the model, or 'none' to keep slots in trained order")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_reconstruct)

    p = sub.add_parser("eval", help="top-1 accuracy of a bundle on a dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("ntk-report", help="NTK eigen-spectra and target projections")
    p.add_argument("--target", required=True, help="matrix file (.npy or CSV) or <bundle.sbsw>:<layer>")
    p.add_argument("--encoder", type=EncoderKind, choices=list(EncoderKind), action="append")
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--sigma", type=float, default=10.0)
    p.add_argument("--features", type=int, default=128)
    p.add_argument("--solver", type=EigSolver, choices=list(EigSolver), default=EigSolver.JACOBI)
    p.set_defaults(handler=cmd_ntk_report)

    p = sub.add_parser("spectrum", help="2-D DFT spectra before and after smoothing")
    p.add_argument("--matrix", required=True)
    p.add_argument("--cutoff", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_spectrum)

    p = sub.add_parser("repro", help="run the desk-scale acceptance suite")
    p.add_argument("--fixture", choices=["tiny"], default="tiny")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out-dir", default="repro-out")
    p.set_defaults(handler=cmd_repro)

    p = sub.add_parser("fixture", help="write the tiny CNN fixture and dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=2)
    p.set_defaults(handler=cmd_fixture)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(handler=cmd_replay)
    return parser


# ── Dispatch ─────────────────────────────────────────────────────────


def version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    try:
        return metadata.version("kernelinr")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _report_error(exc: Exception) -> None:
    violations = []
    if isinstance(exc, InvalidInputError):
        violations = [v.model_dump() for v in exc.violations]
    elif isinstance(exc, ValidationError):
        violations = [{"rule_id": "config", "message": e["msg"], "loc": list(e["loc"])} for e in exc.errors()]
    payload = {"error": type(exc).__name__, "message": str(exc), "violations": violations}
    if isinstance(exc, NumericError):
        payload["record"] = exc.record
    print(json.dumps(payload, default=str), file=sys.stderr)


def _write_manifest(args: argparse.Namespace, argv: list[str], result: CommandResult, wall_ms: float) -> None:
    manifest = RunManifest(
        command=args.command,
        argv=argv,
        config_hash=result.config,
        seeds=result.seeds,
        inputs=result.inputs,
        outputs=result.outputs,
        version=version_string(),
        wall_ms=wall_ms,
    )
    if args.manifest:
        path = Path(args.manifest)
    elif result.outputs:
        path = Path(f"{result.outputs[0]}.manifest.json")
    else:
        print(manifest.model_dump_json(), file=sys.stderr)
        return
    _store().save_manifest(manifest, path)


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s | %(message)s",
        stream=sys.stderr,
    )


def dispatch(argv: list[str]) -> int:
    """Run one command; returns the process exit code."""
    argv = list(argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    _configure_logging(args)

    start = time.perf_counter()
    try:
        result = args.handler(args)
    except (InvalidInputError, FormatError, CorruptionError, RefusalError, ValidationError) as exc:
        _report_error(exc)
        return EXIT_INVALID
    except NumericError as exc:
        _report_error(exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        _report_error(exc)
        return EXIT_INVALID
    except OSError as exc:
        _report_error(exc)
        return EXIT_FAILURE
    if args.command != "replay":
        _write_manifest(args, argv, result, (time.perf_counter() - start) * 1000.0)
    return result.code


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
