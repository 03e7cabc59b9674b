#!/usr/bin/env python3
"""Reproduce the DNN_AutoEncoder average F1 on the Server Machine Dataset.

The dataset is not bundled. Point ``--smd`` at a checkout of the public
ServerMachineDataset directory (with ``train/``, ``test/`` and
``test_label/`` holding ``machine-*.txt``). The script converts it to the
benchmark layout ``<out>/SMD/<machine>/{train,test,labels}.csv`` and runs the
benchmark. Expect several hours on a laptop for all 28 machines.

    python3 scripts/reproduce_smd.py --smd ~/data/ServerMachineDataset --out smd-bench
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ads.evaluation import PUBLISHED_F1, BenchmarkSpec, run_benchmark, table_text

TOLERANCE = 0.10


def convert(smd: Path, out: Path, machines: list[str] | None = None) -> list[str]:
    names = machines or sorted(p.stem for p in (smd / "train").glob("machine-*.txt"))
    if not names:
        raise SystemExit(f"no machine-*.txt files under {smd / 'train'}")
    for name in names:
        dest = out / "SMD" / name
        dest.mkdir(parents=True, exist_ok=True)
        train = np.loadtxt(smd / "train" / f"{name}.txt", delimiter=",", ndmin=2)
        test = np.loadtxt(smd / "test" / f"{name}.txt", delimiter=",", ndmin=2)
        flags = np.loadtxt(smd / "test_label" / f"{name}.txt", delimiter=",", ndmin=1).astype(int)
        header = ",".join(f"c{j}" for j in range(train.shape[1]))
        np.savetxt(dest / "train.csv", train, delimiter=",", header=header, comments="", fmt="%.10g")
        np.savetxt(dest / "test.csv", test, delimiter=",", header=header, comments="", fmt="%.10g")
        labels = np.where(flags == 1, -1, 1)
        (dest / "labels.csv").write_text("label\n" + "\n".join(map(str, labels)) + "\n")
    return names


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--smd", type=Path, required=True, help="ServerMachineDataset directory")
    ap.add_argument("--out", type=Path, default=Path("smd-bench"))
    ap.add_argument("--machines", help="comma list, default all")
    ap.add_argument("--estimator", default="DNN_AutoEncoder")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)

    machines = args.machines.split(",") if args.machines else None
    names = convert(args.smd, args.out, machines)
    print(f"converted {len(names)} machines into {args.out / 'SMD'}")
    spec = BenchmarkSpec(args.out, estimators=[args.estimator], datasets=["SMD"], seed=args.seed, jobs=args.jobs)
    rows = run_benchmark(spec)
    print(table_text(rows, reference=True), end="")
    published = PUBLISHED_F1[args.estimator]["SMD"]
    f1 = rows[0].f1
    ok = abs(f1 - published) <= TOLERANCE
    print(f"{'PASS' if ok else 'FAIL'} criterion 10: mean F1 {f1:.3f} vs published {published:.3f} (tolerance {TOLERANCE})")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
