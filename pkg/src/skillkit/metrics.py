"""Utility metrics over benchmark runs.

Scores are percentages (0 to 100). A cell's delta is mean(skill runs) minus
mean(baseline runs) for one extractor/target pair in one domain, in
percentage points. Row and column aggregates, the negative-transfer rate,
the Friedman rank test, and the signal-to-noise sigma ratio live here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import permutations
from pathlib import Path
from statistics import fmean, stdev
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.stats import chi2

EXACT_ENUMERATION_CAP = 2_000_000
_STAT_EPS = 1e-9


class MetricsError(Exception):
    pass


class MissingBaseline(MetricsError):
    pass


class MissingSkillRuns(MetricsError):
    pass


class UnknownExtractor(MetricsError):
    pass


class UnknownTarget(MetricsError):
    pass


class IncompleteDesign(MetricsError):
    pass


class ZeroNoise(MetricsError):
    """Round-level scores show no variation, so the ratio is undefined."""


@dataclass(frozen=True)
class RunRecord:
    """One benchmark run. extractor None marks a baseline (no skill) run."""

    extractor: str | None
    target: str
    domain: str
    run_index: int
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 100.0:
            raise ValueError(f"score must lie in [0, 100], got {self.score}")


@dataclass(frozen=True)
class UtilityMatrix:
    """Per-domain grid of baseline scores and skill-injection deltas."""

    domain: str
    base: Mapping[str, float]
    delta: Mapping[tuple[str, str], float]

    @property
    def extractors(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for extractor, _ in self.delta:
            seen.setdefault(extractor)
        return tuple(seen)

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(self.base)


def delta(
    records: Sequence[RunRecord], extractor: str, target: str, domain: str
) -> float:
    """Mean skill score minus mean baseline score, in percentage points."""
    base_scores = [
        r.score for r in records
        if r.extractor is None and r.target == target and r.domain == domain
    ]
    skill_scores = [
        r.score for r in records
        if r.extractor == extractor and r.target == target and r.domain == domain
    ]
    if not base_scores:
        raise MissingBaseline(f"no baseline runs for {target!r} in {domain!r}")
    if not skill_scores:
        raise MissingSkillRuns(
            f"no skill runs for extractor {extractor!r} on {target!r} in {domain!r}")
    return fmean(skill_scores) - fmean(base_scores)


def build_matrix(
    records: Sequence[RunRecord], domain: str
) -> tuple[UtilityMatrix, list[str]]:
    """Assemble one domain's matrix; uncomputable cells come back as notes."""
    rows = [r for r in records if r.domain == domain]
    targets: dict[str, None] = {}
    extractors: dict[str, None] = {}
    for r in rows:
        targets.setdefault(r.target)
        if r.extractor is not None:
            extractors.setdefault(r.extractor)
    base: dict[str, float] = {}
    problems: list[str] = []
    for target in targets:
        scores = [r.score for r in rows if r.extractor is None and r.target == target]
        if scores:
            base[target] = fmean(scores)
        else:
            problems.append(f"{domain}: no baseline runs for target {target!r}")
    deltas: dict[tuple[str, str], float] = {}
    for extractor in extractors:
        for target in targets:
            skill_scores = [
                r.score for r in rows
                if r.extractor == extractor and r.target == target
            ]
            if not skill_scores:
                continue
            if target not in base:
                continue  # already reported as a baseline problem
            deltas[(extractor, target)] = fmean(skill_scores) - base[target]
    return UtilityMatrix(domain=domain, base=base, delta=deltas), problems


def build_matrices(
    records: Sequence[RunRecord],
) -> tuple[dict[str, UtilityMatrix], list[str]]:
    domains: dict[str, None] = {}
    for r in records:
        domains.setdefault(r.domain)
    matrices: dict[str, UtilityMatrix] = {}
    problems: list[str] = []
    for domain in domains:
        matrix, notes = build_matrix(records, domain)
        matrices[domain] = matrix
        problems.extend(notes)
    return matrices, problems


def extraction_efficacy(matrix: UtilityMatrix, extractor: str) -> float:
    """Mean delta the extractor's skills produce across targets (column mean)."""
    values = [v for (e, _), v in matrix.delta.items() if e == extractor]
    if not values:
        raise UnknownExtractor(
            f"extractor {extractor!r} has no cells in domain {matrix.domain!r}")
    return fmean(values)


def target_evolvability(matrix: UtilityMatrix, target: str) -> float:
    """Mean delta the target gains across extractors (row mean)."""
    values = [v for (_, t), v in matrix.delta.items() if t == target]
    if not values:
        raise UnknownTarget(
            f"target {target!r} has no cells in domain {matrix.domain!r}")
    return fmean(values)


def negative_transfer_rate(matrix: UtilityMatrix) -> float:
    """Fraction of delta cells that are strictly negative."""
    if not matrix.delta:
        raise MetricsError(f"domain {matrix.domain!r} has no delta cells")
    negative = sum(1 for v in matrix.delta.values() if v < 0)
    return negative / len(matrix.delta)


@dataclass(frozen=True)
class FactorDesign:
    """Complete blocks-by-treatments score table."""

    blocks: tuple[str, ...]
    treatments: tuple[str, ...]
    observations: Mapping[tuple[str, str], float]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "treatments", tuple(self.treatments))
        if len(self.treatments) < 2:
            raise ValueError("need at least two treatments")
        if not self.blocks:
            raise ValueError("need at least one block")
        missing = [
            (b, t) for b in self.blocks for t in self.treatments
            if (b, t) not in self.observations
        ]
        if missing:
            raise IncompleteDesign(f"missing observations: {missing[:5]}")

    def row(self, block: str) -> list[float]:
        return [self.observations[(block, t)] for t in self.treatments]


class FriedmanResult(NamedTuple):
    statistic: float
    p_value: float


def _ranks_with_ties(values: Sequence[float]) -> list[float]:
    """Ascending ranks starting at 1; tied values share the mean rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2 + 1
        for idx in order[i:j + 1]:
            ranks[idx] = shared
        i = j + 1
    return ranks


def _rank_rows(design: FactorDesign) -> list[list[float]]:
    return [_ranks_with_ties(design.row(b)) for b in design.blocks]


def _statistic_from_rows(rank_rows: list[list[float]]) -> float:
    n = len(rank_rows)
    k = len(rank_rows[0])
    center = (k + 1) / 2
    rank_means = [fmean(row[j] for row in rank_rows) for j in range(k)]
    return 12.0 * n / (k * (k + 1)) * sum((m - center) ** 2 for m in rank_means)


def friedman_exact_p(design: FactorDesign, statistic: float | None = None) -> float:
    """Exact permutation p-value: treatment labels permuted within blocks.

    Enumerates all (k!)^n assignments, so it is only viable for small
    designs; anything past EXACT_ENUMERATION_CAP configurations is refused.
    """
    rank_rows = _rank_rows(design)
    k = len(design.treatments)
    n = len(design.blocks)
    if statistic is None:
        statistic = _statistic_from_rows(rank_rows)
    total = math.factorial(k) ** n
    if total > EXACT_ENUMERATION_CAP:
        raise ValueError(
            f"exact enumeration needs {total} configurations; "
            f"cap is {EXACT_ENUMERATION_CAP}")
    perm_index = np.array(list(permutations(range(k))))
    partial = np.zeros((1, k))
    for row in rank_rows:
        permuted = np.asarray(row)[perm_index]
        partial = (partial[:, None, :] + permuted[None, :, :]).reshape(-1, k)
    stats = 12.0 / (n * k * (k + 1)) * (partial ** 2).sum(axis=1) - 3.0 * n * (k + 1)
    return float((stats >= statistic - _STAT_EPS).mean())


def friedman_test(design: FactorDesign, p_method: str = "chi2") -> FriedmanResult:
    """Friedman rank test over a complete design.

    Ranks are taken within each block with ties sharing the mean rank. The
    statistic is the classic chi-square form with k-1 degrees of freedom;
    an all-ties design yields statistic 0 and p 1. p_method "exact" swaps
    the chi-square tail for full permutation enumeration (small designs).
    """
    if len(design.blocks) < 2:
        raise ValueError("friedman_test needs at least two blocks")
    rank_rows = _rank_rows(design)
    statistic = _statistic_from_rows(rank_rows)
    if p_method == "chi2":
        p_value = float(chi2.sf(statistic, len(design.treatments) - 1))
    elif p_method == "exact":
        p_value = friedman_exact_p(design, statistic)
    else:
        raise ValueError(f"unknown p_method {p_method!r}")
    return FriedmanResult(statistic, p_value)


def sigma_ratio(level_means: Sequence[float], round_scores: Sequence[float]) -> float:
    """Factor-signal to run-noise ratio.

    Sample standard deviation of the factor-level means divided by sample
    standard deviation of repeated-round scores. Both sides use the n-1
    convention. A flat round series raises ZeroNoise.
    """
    if len(level_means) < 2:
        raise ValueError("need at least two factor-level means")
    if len(round_scores) < 2:
        raise ValueError("need at least two round scores")
    noise = stdev(round_scores)
    if noise == 0:
        raise ZeroNoise("round scores show zero variance")
    return stdev(level_means) / noise


def run_record_to_dict(record: RunRecord) -> dict:
    return {
        "extractor": record.extractor,
        "target": record.target,
        "domain": record.domain,
        "run_index": record.run_index,
        "score": record.score,
    }


def run_record_from_dict(doc: Mapping) -> RunRecord:
    return RunRecord(
        extractor=doc.get("extractor"),
        target=doc["target"],
        domain=doc["domain"],
        run_index=int(doc.get("run_index", 0)),
        score=float(doc["score"]),
    )


def save_run_records(path: str | Path, records: Iterable[RunRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(run_record_to_dict(record)) + "\n")


def load_run_records(path: str | Path) -> list[RunRecord]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(run_record_from_dict(json.loads(line)))
    return out


_GREEN = "\x1b[32m"
_RED = "\x1b[31m"
_RESET = "\x1b[0m"


def _paint(text: str, value: float, color: bool) -> str:
    if not color or value == 0:
        return text
    return f"{_GREEN if value > 0 else _RED}{text}{_RESET}"


def render_matrix_text(matrix: UtilityMatrix, color: bool = False) -> str:
    """Fixed-width text table: base column, delta cells, TE column, EE row."""
    extractors = matrix.extractors
    targets = matrix.targets
    headers = ["target", "base", *extractors, "TE"]
    rows: list[list[tuple[str, float]]] = []
    for target in targets:
        cells: list[tuple[str, float]] = [(target, 0.0), (f"{matrix.base[target]:.2f}", 0.0)]
        for extractor in extractors:
            value = matrix.delta.get((extractor, target))
            cells.append(("." if value is None else f"{value:+.2f}", value or 0.0))
        try:
            te = target_evolvability(matrix, target)
            cells.append((f"{te:+.2f}", 0.0))
        except UnknownTarget:
            cells.append((".", 0.0))
        rows.append(cells)
    ee_cells: list[tuple[str, float]] = [("EE", 0.0), ("", 0.0)]
    for extractor in extractors:
        try:
            ee_cells.append((f"{extraction_efficacy(matrix, extractor):+.2f}", 0.0))
        except UnknownExtractor:
            ee_cells.append((".", 0.0))
    ee_cells.append(("", 0.0))
    rows.append(ee_cells)

    widths = [len(h) for h in headers]
    for row in rows:
        for i, (text, _) in enumerate(row):
            widths[i] = max(widths[i], len(text))

    def render_row(cells: list[tuple[str, float]], delta_colored: bool) -> str:
        out = []
        for i, (text, value) in enumerate(cells):
            padded = text.ljust(widths[i]) if i == 0 else text.rjust(widths[i])
            if delta_colored and 2 <= i < 2 + len(extractors) and text not in (".", ""):
                padded = _paint(padded, value, color)
            out.append(padded)
        return "  ".join(out).rstrip()

    lines = [f"domain: {matrix.domain}"]
    lines.append("  ".join(
        h.ljust(widths[i]) if i == 0 else h.rjust(widths[i])
        for i, h in enumerate(headers)).rstrip())
    for row in rows[:-1]:
        lines.append(render_row(row, delta_colored=True))
    lines.append(render_row(rows[-1], delta_colored=False))
    if matrix.delta:
        negative = sum(1 for v in matrix.delta.values() if v < 0)
        rate = 100.0 * negative / len(matrix.delta)
        lines.append(
            f"negative transfer: {negative}/{len(matrix.delta)} ({rate:.1f}%)")
    return "\n".join(lines)


def matrix_report(matrices: Mapping[str, UtilityMatrix]) -> dict:
    """JSON-ready mirror of the text tables, plus the pooled negative rate."""
    report: dict = {"domains": {}}
    total_cells = 0
    total_negative = 0
    for domain, matrix in matrices.items():
        deltas: dict[str, dict[str, float]] = {}
        for (extractor, target), value in matrix.delta.items():
            deltas.setdefault(extractor, {})[target] = value
        ee = {}
        for extractor in matrix.extractors:
            ee[extractor] = extraction_efficacy(matrix, extractor)
        te = {}
        for target in matrix.targets:
            try:
                te[target] = target_evolvability(matrix, target)
            except UnknownTarget:
                continue
        cells = len(matrix.delta)
        negative = sum(1 for v in matrix.delta.values() if v < 0)
        total_cells += cells
        total_negative += negative
        report["domains"][domain] = {
            "base": dict(matrix.base),
            "delta": deltas,
            "extraction_efficacy": ee,
            "target_evolvability": te,
            "negative_transfer": {
                "negative": negative,
                "cells": cells,
                "rate": (negative / cells) if cells else None,
            },
        }
    report["overall_negative_transfer"] = {
        "negative": total_negative,
        "cells": total_cells,
        "rate": (total_negative / total_cells) if total_cells else None,
    }
    return report
