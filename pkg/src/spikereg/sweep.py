"""Sweep execution: one result row per (sample size, replicate).

The output CSV is a pure function of the config and the package version:
rows are computed independently (optionally in a process pool), collected
in submission order, and serialized with 17-significant-digit floats. The
wall-clock cost of each replicate is therefore banished to the JSON
sidecar; the elapsed_ms column exists for schema compatibility and always
holds the deterministic sentinel 0.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .bounds import build_bound_report
from .config import ExperimentConfig, serialize_config
from .diagnostics import eig_ratio, op_norm_diff, projector_dist, smallest_eig_ratio
from .mnls import dual_decompose
from .risk import conditional_risk
from .sampler import make_dataset
from .util import fmt17, pmap_indexed, replicate_seed

_HEAD = (
    "n", "d", "replicate", "seed",
    "bias_sq", "variance", "risk", "null_risk", "normalized_risk",
    "eig_ratio_max", "smallest_ratio",
)
_TAIL = (
    "opnorm_diff", "lemma1_bound", "lemma4_bound",
    "thm2_bias_bound", "thm2_var_bound", "thm2_bias_argmin_m",
    "blt_bound", "rho_n", "minimax_proxy", "elapsed_ms", "error",
)
_INT_COLUMNS = frozenset(("n", "d", "replicate", "seed", "thm2_bias_argmin_m", "elapsed_ms"))


def result_columns(spike_count: int) -> tuple:
    """CSV header for a family with the given number of spikes."""
    dists = tuple(f"proj_dist_{j}" for j in range(1, spike_count + 1))
    return _HEAD + dists + _TAIL


def build_instance(config: ExperimentConfig, n: int, replicate: int = 0):
    """Realize one (model, dataset, dual decomposition) triple of a sweep."""
    seed = replicate_seed(config.base_seed, replicate, n)
    model = config.family.realize_at(n)
    theta = config.theta.build(model, seed)
    dataset = make_dataset(
        model, theta, n, config.sigma, config.law, seed, config.noise_law
    )
    return model, dataset, dual_decompose(dataset.X)


def _replicate_row(task) -> tuple:
    """Compute one row; any failure becomes an error row, never a crash."""
    config, n, replicate = task
    seed = replicate_seed(config.base_seed, replicate, n)
    m_bar = config.family.spike_count
    columns = result_columns(m_bar)
    row = dict.fromkeys(columns, math.nan)
    row.update(n=n, d=0, replicate=replicate, seed=seed, elapsed_ms=0, error="")
    start = time.perf_counter()
    try:
        model, dataset, dd = build_instance(config, n, replicate)
        row["d"] = model.d
        rr = conditional_risk(model, dd, dataset.theta, config.sigma, seed=seed)
        row.update(
            bias_sq=rr.bias_sq,
            variance=rr.variance,
            risk=rr.total,
            null_risk=rr.null_risk,
            normalized_risk=rr.normalized,
        )

        # Skipping diagnostics also skips the power iteration; the bound
        # report then carries NaN wherever the operator norm would appear.
        opnorm = (
            op_norm_diff(dataset.X, model) if config.diagnostics else math.nan
        )
        if config.diagnostics:
            if dd.rank >= m_bar >= 1:
                row["eig_ratio_max"] = eig_ratio(dd, model, m_bar)[0]
                for j in range(1, m_bar + 1):
                    row[f"proj_dist_{j}"] = projector_dist(dd, model, j)
            row["smallest_ratio"] = smallest_eig_ratio(dd, model)

        br = build_bound_report(
            model, dd, dataset.theta, config.sigma,
            c=config.c, t=config.t, m_cap=config.m_cap, opnorm=opnorm,
        )
        row.update(
            opnorm_diff=br.values["opnorm_diff"],
            lemma1_bound=br.values["lemma1_bias"],
            lemma4_bound=br.values["lemma4_variance"],
            thm2_bias_bound=br.values["thm2_bias"],
            thm2_var_bound=br.values["thm2_variance"],
            thm2_bias_argmin_m=br.minimizers["thm2_bias_m"],
            blt_bound=br.values["blt_bias"],
            rho_n=br.values["rho_n"],
            minimax_proxy=br.values["minimax_proxy"],
        )
    except Exception as exc:  # crash isolation: the row records the failure
        row["error"] = f"{type(exc).__name__}: {exc}"
    elapsed_ms = (time.perf_counter() - start) * 1e3
    return row, elapsed_ms


def _cell(column: str, value) -> str:
    if column == "error":
        text = str(value)
        for bad in (",", "\r", "\n"):
            text = text.replace(bad, ";" if bad == "," else " ")
        return text
    if column in _INT_COLUMNS and not math.isnan(value):
        return str(int(value))
    return fmt17(value)


def _atomic_write(path: Path, data: str) -> None:
    # temp file in the destination directory so os.replace stays atomic
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sidecar_path(out_path) -> Path:
    out = Path(out_path)
    return out.with_name(out.name + ".json")


def run_sweep(
    config: ExperimentConfig,
    threads: int | None = None,
    out_path=None,
) -> Path:
    """Run every (n, replicate) cell and write the results CSV.

    threads=None uses every core; the CSV bytes do not depend on the
    choice. Replicate failures produce rows with a populated error column.
    Files appear at the final paths only once complete (temp file plus
    rename); a JSON sidecar at <out>.json records the config text, its
    sha256, the package version, and the measured timings.
    """
    out = Path(out_path if out_path is not None else config.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    tasks = [
        (config, n, rep) for n in config.n_grid for rep in range(config.replicates)
    ]
    results = pmap_indexed(_replicate_row, tasks, threads)

    columns = result_columns(config.family.spike_count)
    lines = [",".join(columns)]
    lines += [
        ",".join(_cell(col, row[col]) for col in columns) for row, _ in results
    ]
    _atomic_write(out, "\n".join(lines) + "\n")

    config_text = serialize_config(config)
    sidecar = {
        "artifact_version": __version__,
        "config": config_text,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "written_at": datetime.now(timezone.utc).isoformat(),
        "wallclock_s": time.perf_counter() - started,
        "timings_ms": [
            [int(row["n"]), int(row["replicate"]), ms] for row, ms in results
        ],
    }
    _atomic_write(sidecar_path(out), json.dumps(sidecar, indent=1) + "\n")
    return out
