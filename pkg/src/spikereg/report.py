"""Summaries of a sweep's results file.

Reads the CSV back (the "inf"/"nan" tokens round-trip through float()),
computes nearest-rank median and 5/95 percent quantiles of every numeric
column within each sample size, tallies how often the deterministic bounds
dominate the exact quantities they bound, and writes one small plot-data
CSV per column.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .util import fmt17, nearest_rank

# columns that must be present in any results file; proj_dist_* columns are
# discovered by prefix since their count depends on the model family
REQUIRED_COLUMNS = (
    "n", "d", "replicate", "seed",
    "bias_sq", "variance", "risk", "null_risk", "normalized_risk",
    "eig_ratio_max", "smallest_ratio", "opnorm_diff",
    "lemma1_bound", "lemma4_bound", "thm2_bias_bound", "thm2_var_bound",
    "thm2_bias_argmin_m", "blt_bound", "rho_n", "minimax_proxy",
    "elapsed_ms", "error",
)

DOMINANCE_PAIRS = (
    ("lemma1_bound", "bias_sq"),
    ("lemma4_bound", "variance"),
)


class ReportError(ValueError):
    """The results file cannot be summarized."""


@dataclass(frozen=True)
class ReportSummary:
    """Aggregates of one results file.

    per_n maps n -> column -> (median, q05, q95); dominance maps a label
    "bound>=target" to (fraction, satisfied, total). passed is the
    acceptance view: every dominance fraction is exactly 1 and no replicate
    errored.
    """

    columns: tuple
    n_values: tuple
    per_n: dict
    row_counts: dict
    dominance: dict
    error_count: int
    plot_files: tuple

    @property
    def passed(self) -> bool:
        if self.error_count:
            return False
        return all(frac == 1.0 for frac, _, _ in self.dominance.values())

    def __str__(self):
        total = sum(self.row_counts.values()) + self.error_count
        lines = [f"rows: {total} ({self.error_count} with errors)"]
        for n in self.n_values:
            stats = self.per_n[n]
            d = stats["d"][0]
            lines.append(f"n = {n}  d = {int(d) if math.isfinite(d) else d}  "
                         f"({self.row_counts[n]} rows)")
            for col in self.columns:
                if col in ("n", "d", "replicate", "seed", "error"):
                    continue
                med, q05, q95 = stats[col]
                lines.append(
                    f"  {col:<20} median = {med:<24.17g} "
                    f"q05 = {q05:<24.17g} q95 = {q95:.17g}"
                )
        for label, (frac, hits, denom) in self.dominance.items():
            lines.append(f"dominance {label}: {frac!r} ({hits}/{denom})")
        lines.append(f"assert: {'pass' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _read_rows(path: Path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ReportError("no rows")
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ReportError(f"missing column {missing[0]!r}")
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if len(record) != len(header):
                raise ReportError(
                    f"line {lineno}: {len(record)} fields, header has {len(header)}"
                )
            rows.append(dict(zip(header, record)))
    if not rows:
        raise ReportError("no rows")
    return tuple(header), rows


def _quantiles(values) -> tuple:
    finite = [v for v in values if not math.isnan(v)]
    if not finite:
        return (math.nan, math.nan, math.nan)
    return (
        nearest_rank(finite, 0.5),
        nearest_rank(finite, 0.05),
        nearest_rank(finite, 0.95),
    )


def report(results_path, out_dir=None) -> ReportSummary:
    """Summarize a results CSV and emit per-column plot data.

    Error rows are excluded from every statistic and reported by count.
    Plot-data files land in out_dir (default: "<results stem>_plots" next
    to the input) as plot_<column>.csv with header n,median,q05,q95.
    """
    path = Path(results_path)
    columns, rows = _read_rows(path)
    numeric = tuple(c for c in columns if c != "error")

    good = [r for r in rows if not r["error"]]
    error_count = len(rows) - len(good)
    parsed = [{c: float(r[c]) for c in numeric} for r in good]

    n_values = tuple(sorted({int(r["n"]) for r in parsed}))
    per_n, row_counts = {}, {}
    for n in n_values:
        block = [r for r in parsed if int(r["n"]) == n]
        row_counts[n] = len(block)
        per_n[n] = {c: _quantiles([r[c] for r in block]) for c in numeric}

    dominance = {}
    for bound, target in DOMINANCE_PAIRS:
        pairs = [
            (r[bound], r[target])
            for r in parsed
            if not (math.isnan(r[bound]) or math.isnan(r[target]))
        ]
        hits = sum(1 for b, v in pairs if b >= v)
        frac = hits / len(pairs) if pairs else math.nan
        dominance[f"{bound}>={target}"] = (frac, hits, len(pairs))

    target_dir = Path(out_dir) if out_dir is not None else (
        path.parent / (path.stem + "_plots")
    )
    target_dir.mkdir(parents=True, exist_ok=True)
    plot_files = []
    for col in numeric:
        lines = ["n,median,q05,q95"]
        for n in n_values:
            med, q05, q95 = per_n[n][col]
            lines.append(f"{n},{fmt17(med)},{fmt17(q05)},{fmt17(q95)}")
        target = target_dir / f"plot_{col}.csv"
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")
        plot_files.append(target)

    return ReportSummary(
        columns=columns,
        n_values=n_values,
        per_n=per_n,
        row_counts=row_counts,
        dominance=dominance,
        error_count=error_count,
        plot_files=tuple(plot_files),
    )
