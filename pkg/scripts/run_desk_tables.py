"""Run the three simulation-study tables and collect them in one directory.

Usage::

    python scripts/run_desk_tables.py --out results/desk --scale desk --threads 4

Each table is written by ``tppg reproduce`` into ``<out>/<table>/``; a short
markdown digest of all tables goes to ``<out>/summary.md``.
"""

import argparse
import sys
from pathlib import Path

from tppg import cli


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--scale", choices=("desk", "full"), default="desk")
    parser.add_argument("--tables", nargs="+", default=["t1", "t2", "t3"])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--replicates", type=int, default=None)
    parser.add_argument("--settings", type=int, nargs="+", default=None)
    parser.add_argument("--structures", nargs="+", default=None)
    args = parser.parse_args(argv)

    out = Path(args.out)
    digest = []
    for table in args.tables:
        cmd = ["reproduce", "--table", table, "--scale", args.scale, "--seed", str(args.seed),
               "--threads", str(args.threads), "--out", str(out / table)]
        if args.replicates is not None:
            cmd += ["--replicates", str(args.replicates)]
        if args.settings:
            cmd += ["--settings", *map(str, args.settings)]
        if args.structures:
            cmd += ["--structures", *args.structures]
        rc = cli.main(cmd)
        if rc:
            return rc
        name = {"t1": "table1", "t2": "table2", "t3": "table3"}[table]
        digest.append((out / table / f"{name}.md").read_text())
    (out / "summary.md").write_text("\n".join(digest))
    print((out / "summary.md").read_text())
    return 0


if __name__ == "__main__":
    sys.exit(main())
