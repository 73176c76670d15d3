"""Desk-scale MNIST experiments: arm comparison, HV size trend, clause degradation, RbE.

Each experiment trains seeded replicas on the stratified 2000/2000 split of
``data/mnist-desk`` and writes a long CSV plus a per-cell summary::

    python scripts/desk_mnist.py compare   --out runs/compare
    python scripts/desk_mnist.py hv-size   --out runs/hv_size --sizes 512,1024,2048,4096
    python scripts/desk_mnist.py clauses   --out runs/clauses --clauses 512,128,32
    python scripts/desk_mnist.py rbe       --out runs/rbe

Replicas run in parallel with ``--workers``.
"""

import argparse
import dataclasses
import json
import logging
from pathlib import Path

from hvtm.data_io import write_sweep_table
from hvtm.experiment import RunConfig, prepare, run_ensembles
from hvtm.explain import negated_literal_fraction

DATA = Path(__file__).resolve().parents[1] / "data" / "mnist-desk"

BASE = RunConfig(
    dataset="idx",
    train_images=str(DATA / "images-idx3-ubyte.gz"),
    train_labels=str(DATA / "labels-idx1-ubyte.gz"),
    n_train_per_class=200, n_test_per_class=200,
    hv_size=2048, nbits=4, clauses=100, threshold=25, specificity=3.0, epochs=30, ensembles=5,
)


def ints(text):
    return [int(x) for x in text.split(",")]


def train(cfg):
    logging.info("%s encoder, D=%d, %d clauses, s=%g", cfg.encoder, cfg.hv_size, cfg.clauses, cfg.specificity)
    return run_ensembles(cfg, prepare(cfg))


def report(results, label):
    finals = [r.record.final.accuracy for r in results]
    best = [r.record.max_accuracy for r in results]
    print(f"{label:<28} final {sum(finals) / len(finals):.4f}  max {sum(best) / len(best):.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=["compare", "hv-size", "clauses", "rbe"])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--ensembles", type=int)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sizes", type=ints, default=[512, 1024, 2048, 4096])
    ap.add_argument("--clauses", type=ints, default=[512, 128, 32])
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    base = dataclasses.replace(BASE, workers=args.workers, seed=args.seed)
    if args.epochs:
        base = dataclasses.replace(base, epochs=args.epochs)
    if args.ensembles:
        base = dataclasses.replace(base, ensembles=args.ensembles)
    args.out.mkdir(parents=True, exist_ok=True)
    records, extra = [], {}

    if args.experiment == "compare":
        for enc in ("vanilla", "hv"):
            res = train(dataclasses.replace(base, encoder=enc))
            report(res, enc)
            records += [r.record for r in res]
    elif args.experiment == "hv-size":
        for D in args.sizes:
            res = train(dataclasses.replace(base, hv_size=D))
            report(res, f"D={D}")
            records += [r.record for r in res]
    elif args.experiment == "clauses":
        # reasoning by elimination, threshold scaled with the clause budget
        for n in args.clauses:
            cfg = dataclasses.replace(base, clauses=n, threshold=max(1, n // 4), specificity=1.0,
                                      epochs=args.epochs or 20)
            res = train(cfg)
            report(res, f"{n} clauses")
            records += [r.record for r in res]
    else:
        for s in (1.0, 5.0):
            res = train(dataclasses.replace(base, specificity=s, epochs=args.epochs or 10))
            fr = [negated_literal_fraction(r.final).overall for r in res]
            extra[f"s={s:g}"] = fr
            report(res, f"s={s:g}")
            print(f"{'':<28} negated-literal fraction {sum(fr) / len(fr):.4f}")
            records += [r.record for r in res]

    long_p, summary_p = write_sweep_table(records, args.out / "curves.csv")
    if extra:
        (args.out / "negated_fraction.json").write_text(json.dumps(extra, indent=2) + "\n")
    print(f"wrote {long_p} and {summary_p}")


if __name__ == "__main__":
    main()
