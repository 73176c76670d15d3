"""Command-line entry point: ``hvtm {train,eval,sweep,explain,encode,info}``.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import data_io
from .data_io import DataError, RunRecord, load_model, save_model, write_sweep_table
from .experiment import ConfigError, PreparedData, RunConfig, prepare, run_ensembles
from .explain import decode_clause, export_clauses, negated_literal_fraction
from .hv_core import HypervectorError, TokenCodebook, capacity, overlap_likelihood

log = logging.getLogger("hvtm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


# -- argument plumbing -------------------------------------------------------

def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    """One ``--flag`` per RunConfig field; unset flags leave the config value alone."""
    p.add_argument("--config", help="JSON run config (a run manifest also works)")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = str(f.type)
        if "list" in kind:
            typ = _int_list
        elif "bool" in kind:
            typ = _bool
        elif "float" in kind:
            typ = float
        elif "int" in kind:
            typ = int
        else:
            typ = str
        p.add_argument(flag, dest=f.name, type=typ, default=None)


def _run_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig)
                 if getattr(args, f.name, None) is not None}
    return dataclasses.replace(cfg, **overrides).resolved()


def _manifest(cfg: RunConfig, data: PreparedData, command: str, **extra) -> dict:
    return {
        "command": command,
        "run_config": cfg.to_dict(),
        "data": data.manifest,
        "encoder": data.encoder,
        "class_names": data.class_names,
        "versions": {"python": platform.python_version(), "numpy": np.__version__},
        **extra,
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- commands -----------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _run_config(args)
    data = prepare(cfg)
    if cfg.epochs == 0:
        log.warning("epochs=0: saving untrained models and empty curves")
    results = run_ensembles(cfg, data)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    models = []
    for r in results:
        path = out / f"model_ens{r.record.ensemble}.json"
        save_model(path, r.best, data.codebooks, data.encoder)
        models.append(path.name)
    curves, summary = write_sweep_table([r.record for r in results], out / "curves.csv")
    _write_json(out / "manifest.json", _manifest(cfg, data, "train", models=models,
                                                 curves=curves.name, summary=summary.name))
    finals = [r.record.final.accuracy for r in results if r.record.final]
    if finals:
        print(json.dumps({"final_accuracy": finals, "mean_final_accuracy": float(np.mean(finals))}))
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = load_model(args.model)
    cfg = _run_config(args)
    tm = bundle.machine
    if cfg.encoder == "hv" and cfg.dataset != "xor" and cfg.hv_size != tm.num_features:
        raise UsageError(f"dimension mismatch: model expects {tm.num_features} features, "
                         f"config encodes to hv_size {cfg.hv_size}")
    data = prepare(cfg, bundle.codebooks or None)
    if data.num_features != tm.num_features:
        raise UsageError(f"dimension mismatch: model expects {tm.num_features} features, "
                         f"dataset encodes to {data.num_features}")
    if len(data.test_labels) == 0:
        raise UsageError("evaluation dataset is empty")
    m = tm.evaluate(data.test, data.test_labels)
    print(json.dumps({"accuracy": m.accuracy, "balanced_accuracy": m.balanced_accuracy,
                      "per_class_recall": m.per_class_recall, "n_samples": m.n_samples,
                      "empty_classes": m.empty_classes}))
    return EXIT_OK


def _cell_key(hv: int, nb: int, cl: int) -> str:
    return f"{hv}x{nb}x{cl}"


def cmd_sweep(args) -> int:
    base = _run_config(args)
    hv_sizes = base.hv_sizes or [base.hv_size]
    nbits = base.nbits_list or [base.nbits]
    clauses = base.clauses_list or [base.clauses]
    out = Path(base.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells_path = out / "cells.jsonl"
    done: dict[str, list[RunRecord]] = {}
    if cells_path.exists():
        for line in cells_path.read_text(encoding="utf-8").splitlines():
            entry = json.loads(line)
            done[entry["cell"]] = [RunRecord.from_dict(r) for r in entry["records"]]
    records: list[RunRecord] = []
    cells = list(itertools.product(hv_sizes, nbits, clauses))
    data_manifest = None
    for hv, nb, cl in cells:
        key = _cell_key(hv, nb, cl)
        if key in done:
            log.info("cell %s already complete; skipping", key)
            records.extend(done[key])
            continue
        cfg = dataclasses.replace(base, hv_size=hv, nbits=nb, clauses=cl).resolved()
        data = prepare(cfg)
        data_manifest = data_manifest or data.manifest
        results = run_ensembles(cfg, data)
        cell_records = [r.record for r in results]
        records.extend(cell_records)
        with open(cells_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"cell": key, "records": [r.to_dict() for r in cell_records]},
                                sort_keys=True) + "\n")
        log.info("cell %s done", key)
    long_path, summary_path = write_sweep_table(records, out / "sweep.csv")
    _write_json(out / "manifest.json", {
        "command": "sweep", "run_config": base.to_dict(), "data": data_manifest,
        "cells": [_cell_key(*c) for c in cells], "long": long_path.name, "summary": summary_path.name,
    })
    return EXIT_OK


def cmd_explain(args) -> int:
    bundle = load_model(args.model)
    codebooks = bundle.codebooks
    if args.codebooks:
        raw = json.loads(Path(args.codebooks).read_text(encoding="utf-8"))
        codebooks = {k: TokenCodebook.from_dict(v) for k, v in raw.items()}
    shifts = dict((bundle.encoder or {}).get("role_shifts", {}))
    shifts = {role: s for role, s in shifts.items() if role in codebooks}
    tm = bundle.machine
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for report in export_clauses(tm):
            if args.top_k and not report.empty:
                report = decode_clause(report, codebooks, shifts, tm.num_features, args.top_k)
            out.write((report.render() + "\n\n") if args.text else report.to_json() + "\n")
        frac = negated_literal_fraction(tm)
        summary = {"negated_literal_fraction": frac.overall, "per_class": frac.per_class,
                   "zero_denominator": frac.zero_denominator}
        out.write(("# " + json.dumps(summary) + "\n") if args.text else
                  json.dumps({"summary": summary}) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_encode(args) -> int:
    cfg = _run_config(args)
    data = prepare(cfg)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(out, train_literals=data.train.words, train_labels=data.train_labels,
                        test_literals=data.test.words, test_labels=data.test_labels,
                        num_features=data.num_features)
    cb_path = out.with_suffix(".codebooks.json")
    _write_json(cb_path, {k: v.to_dict() for k, v in data.codebooks.items()})
    _write_json(out.with_suffix(".manifest.json"), _manifest(cfg, data, "encode"))
    return EXIT_OK


def cmd_info(args) -> int:
    print(json.dumps({
        "hv_size": args.hv_size, "nbits": args.nbits, "tokens": args.tokens,
        "capacity": str(capacity(args.hv_size, args.nbits)),
        "overlap_likelihood": overlap_likelihood(args.hv_size, args.nbits, args.tokens),
    }))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hvtm", description="Hypervector Tsetlin Machine")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train seeded ensemble replicas")
    _add_run_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved model; prints metrics JSON")
    e.add_argument("--model", required=True)
    _add_run_flags(e)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="hv_size x nbits x clauses grid, resumable")
    _add_run_flags(s)
    s.set_defaults(func=cmd_sweep)

    x = sub.add_parser("explain", help="export and decode clauses as JSON lines")
    x.add_argument("--model", required=True)
    x.add_argument("--codebooks", help="JSON {role: codebook}; defaults to the model's own")
    x.add_argument("--top-k", type=int, default=10, help="0 lists positions only")
    x.add_argument("--text", action="store_true", help="human-readable blocks instead of JSONL")
    x.add_argument("--output")
    x.set_defaults(func=cmd_explain)

    c = sub.add_parser("encode", help="encode a dataset into a literal cache (.npz)")
    c.add_argument("--output", required=True)
    _add_run_flags(c)
    c.set_defaults(func=cmd_encode)

    i = sub.add_parser("info", help="capacity and overlap likelihood for D, NBits, token count")
    i.add_argument("--hv-size", type=int, required=True)
    i.add_argument("--nbits", type=int, required=True)
    i.add_argument("--tokens", type=int, default=1000)
    i.set_defaults(func=cmd_info)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, HypervectorError, data_io.UnsupportedVersionError) as exc:
        print(f"hvtm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"hvtm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AssertionError, ValueError) as exc:
        print(f"hvtm: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
