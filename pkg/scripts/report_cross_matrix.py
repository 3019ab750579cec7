"""Print the utility-matrix report for the pinned cross-model table.

The fixture stores per-domain baselines and per-(extractor, target) deltas.
This script expands each cell into three synthetic benchmark runs (the
matrix math only needs the means), rebuilds the matrices, and prints the
same report the `skillkit report` subcommand produces.

Usage:
    python3 scripts/report_cross_matrix.py [--fixture PATH] [--json]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from skillkit.metrics import (
    RunRecord,
    build_matrices,
    matrix_report,
    render_matrix_text,
)

DEFAULT_FIXTURE = (
    Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "cross_matrix.json"
)


def records_from_fixture(fx: dict) -> list[RunRecord]:
    records = []
    for domain, block in fx["domains"].items():
        for target, base in block["base"].items():
            for i, off in enumerate((-0.5, 0.0, 0.5)):
                records.append(RunRecord(None, target, domain, i, base + off))
            for extractor, delta in zip(fx["extractors"], block["delta"][target]):
                for i, off in enumerate((-0.5, 0.0, 0.5)):
                    records.append(
                        RunRecord(extractor, target, domain, i, base + delta + off))
    return records


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--fixture", type=Path, default=DEFAULT_FIXTURE)
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args(argv)

    fx = json.loads(args.fixture.read_text(encoding="utf-8"))
    matrices, problems = build_matrices(records_from_fixture(fx))
    for problem in problems:
        print(f"warning: {problem}", file=sys.stderr)

    if args.json:
        print(json.dumps(matrix_report(matrices), indent=2))
        return 0

    for matrix in matrices.values():
        print(render_matrix_text(matrix, color=sys.stdout.isatty()))
        print()
    overall = matrix_report(matrices)["overall_negative_transfer"]
    print(f"overall negative transfer: {overall['negative']}/{overall['cells']} "
          f"({100.0 * overall['rate']:.1f}%)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
