"""Config grammar, sweep execution, reporting, and the CLI."""

import hashlib
import json
import math
import os

import pytest

from spikereg import __version__
from spikereg.cli import main
from spikereg.config import (
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    serialize_config,
)
from spikereg.model import EquicorrFamily, SpikeFamily
from spikereg.report import ReportError, report
from spikereg.sweep import result_columns, run_sweep, sidecar_path
from spikereg.util import replicate_seed

MINIMAL = "model.kind = equicorrelated\nmodel.a = 0.5\n"

SMALL_SWEEP = MINIMAL + (
    "sweep.n_grid = 10, 15\n"
    "sweep.replicates = 2\n"
)


def small_config(tmp_path, extra="", base=SMALL_SWEEP):
    return parse_config(base + f"output.path = {tmp_path / 'results.csv'}\n" + extra)


# ---------------------------------------------------------------- config


def test_minimal_config_takes_defaults():
    cfg = parse_config(MINIMAL)
    assert isinstance(cfg.family, EquicorrFamily)
    assert cfg.family.a == 0.5
    assert cfg.n_grid == (25, 50, 100)
    assert cfg.law.tag == "gaussian"
    assert cfg.noise_law is None
    assert cfg.sigma == 1.0
    assert cfg.replicates == 50
    assert cfg.base_seed == 0
    assert cfg.t == pytest.approx(math.log(20.0))
    assert cfg.c == 1.0
    assert cfg.m_cap == 0
    assert cfg.diagnostics is True
    assert cfg.out_path == "results.csv"


def test_serialize_is_a_fixed_point():
    text = serialize_config(parse_config(MINIMAL))
    again = serialize_config(parse_config(text))
    assert again == text


def test_spike_config_round_trips_every_field():
    text = (
        "model.kind = spike\n"
        "model.spike_a = 2.0, 1.25\n"
        "model.spike_beta = 1.0, 0.5\n"
        "model.spike_gamma = 0.0, 0.25\n"
        "model.bulk_c1 = 0.9\n"
        "model.bulk_c2 = 0.3\n"
        "model.dim_kappa = 2.0\n"
        "model.dim_p = 1.5\n"
        "model.basis = householder:7\n"
        "sweep.n_grid = 8, 12\n"
        "sweep.replicates = 3\n"
        "sweep.base_seed = 11\n"
        "sampling.law = student_t\n"
        "sampling.df = 6\n"
        "sampling.noise_law = rademacher\n"
        "sampling.sigma = 0.5\n"
        "theta.delta = 0.25\n"
        "theta.norm = 2.0\n"
        "theta.spike_weights = 1.0, 0.5\n"
        "bounds.t = 1.5\n"
        "bounds.c = 2.0\n"
        "bounds.m_cap = 4\n"
        "output.path = out.csv\n"
        "output.diagnostics = false\n"
    )
    cfg = parse_config(text)
    assert isinstance(cfg.family, SpikeFamily)
    assert cfg.family.spec.spike_rules == ((2.0, 1.0, 0.0), (1.25, 0.5, 0.25))
    assert cfg.family.spec.bulk == (0.9, 0.3)
    assert cfg.family.basis == ("householder", 7, 2)
    assert cfg.law.df == 6.0
    assert cfg.noise_law.tag == "rademacher"
    assert cfg.theta.spike_weights == (1.0, 0.5)
    assert cfg.diagnostics is False

    canon = serialize_config(cfg)
    assert parse_config(canon) == cfg
    assert serialize_config(parse_config(canon)) == canon


def test_comments_and_blank_lines_are_skipped():
    cfg = parse_config("# heading\n\n" + MINIMAL + "\n# trailing\n")
    assert cfg.family.a == 0.5


def test_decreasing_grid_names_the_key():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "sweep.n_grid = 100, 50\n")
    (line, msg), = err.value.errors
    assert line == 3
    assert "n_grid" in msg and "not increasing" in msg


def test_out_of_range_a_blames_a():
    with pytest.raises(ConfigError) as err:
        parse_config("model.kind = equicorrelated\nmodel.a = 1.5\n")
    (line, msg), = err.value.errors
    assert line == 2
    assert msg.startswith("model.a:")


def test_unknown_key_reports_its_line():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "model.shape = round\n")
    (line, msg), = err.value.errors
    assert line == 3
    assert "unknown key" in msg and "model.shape" in msg


def test_unknown_section_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "plots.dpi = 300\n")
    assert "unknown section 'plots'" in err.value.errors[0][1]


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "model.a = 0.6\n")
    assert "duplicate" in err.value.errors[0][1]


def test_type_mismatch_names_the_key():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "sweep.replicates = soon\n")
    (line, msg), = err.value.errors
    assert msg.startswith("sweep.replicates:")
    assert "integer" in msg


def test_missing_kind_is_a_whole_config_error():
    with pytest.raises(ConfigError) as err:
        parse_config("sweep.base_seed = 1\n")
    (line, msg), = err.value.errors
    assert line == 0
    assert "model.kind" in msg


def test_spike_keys_rejected_under_equicorrelated():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "model.spike_a = 2.0\n")
    assert "applies only to model.kind = spike" in err.value.errors[0][1]


def test_spike_beta_length_mismatch_blamed():
    with pytest.raises(ConfigError) as err:
        parse_config(
            "model.kind = spike\nmodel.spike_a = 2.0, 1.5\nmodel.spike_beta = 1.0\n"
        )
    assert "model.spike_beta" in err.value.errors[0][1]


def test_student_t_without_df_is_blamed():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "sampling.law = student_t\n")
    assert "df" in err.value.errors[0][1]


def test_all_errors_are_collected_in_line_order():
    with pytest.raises(ConfigError) as err:
        parse_config(
            "model.kind = equicorrelated\n"
            "model.a = 2.0\n"
            "sweep.n_grid = 9, 9\n"
            "sampling.sigma = -1\n"
        )
    lines = [ln for ln, _ in err.value.errors]
    assert lines == sorted(lines)
    assert len(err.value.errors) == 3


def test_weights_length_checked_against_family():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "theta.spike_weights = 1.0, 2.0\n")
    assert "theta.spike_weights" in err.value.errors[0][1]


def test_all_zero_weights_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(MINIMAL + "theta.spike_weights = 0.0\n")
    assert "all-zero" in err.value.errors[0][1]


def test_with_seed_returns_modified_copy():
    cfg = parse_config(MINIMAL)
    other = cfg.with_seed(99)
    assert other.base_seed == 99 and cfg.base_seed == 0
    assert other.family == cfg.family


def test_constructor_validates_directly():
    fam = EquicorrFamily(0.5)
    with pytest.raises(ValueError, match="not increasing"):
        ExperimentConfig(fam, n_grid=(50, 50))
    with pytest.raises(ValueError, match="replicates"):
        ExperimentConfig(fam, replicates=0)


# ----------------------------------------------------------------- sweep


def test_sweep_row_cardinality_and_header(tmp_path):
    cfg = small_config(
        tmp_path, base=MINIMAL + "sweep.n_grid = 8, 10, 12\nsweep.replicates = 5\n"
    )
    out = run_sweep(cfg, threads=1)
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(result_columns(1))
    assert len(lines) == 1 + 15


def test_sweep_rerun_is_byte_identical(tmp_path):
    cfg = small_config(tmp_path)
    first = run_sweep(cfg, threads=1).read_bytes()
    second = run_sweep(cfg, threads=1).read_bytes()
    assert first == second


def test_sweep_thread_count_does_not_change_bytes(tmp_path):
    cfg = small_config(tmp_path)
    serial = run_sweep(cfg, threads=1, out_path=tmp_path / "a.csv").read_bytes()
    pooled = run_sweep(cfg, threads=3, out_path=tmp_path / "b.csv").read_bytes()
    assert serial == pooled


def test_sweep_seed_column_follows_the_contract(tmp_path):
    cfg = small_config(tmp_path, extra="sweep.base_seed = 42\n")
    lines = run_sweep(cfg, threads=1).read_text().splitlines()
    header = lines[0].split(",")
    n_at, rep_at, seed_at = (header.index(k) for k in ("n", "replicate", "seed"))
    for line in lines[1:]:
        cells = line.split(",")
        assert int(cells[seed_at]) == replicate_seed(
            42, int(cells[rep_at]), int(cells[n_at])
        )


def test_extending_the_grid_preserves_existing_rows(tmp_path):
    short = small_config(tmp_path)
    long = parse_config(
        MINIMAL
        + "sweep.n_grid = 10, 15, 20\nsweep.replicates = 2\n"
        + f"output.path = {tmp_path / 'long.csv'}\n"
    )
    short_rows = run_sweep(short, threads=1).read_text().splitlines()
    long_rows = run_sweep(long, threads=1).read_text().splitlines()
    assert long_rows[: len(short_rows)] == short_rows


def test_failing_grid_point_becomes_error_rows(tmp_path):
    # the first spike falls below the second at n=2 (sqrt(d)=2 vs 3), so
    # realization fails there and everywhere else succeeds
    text = (
        "model.kind = spike\n"
        "model.spike_a = 1.0, 3.0\n"
        "model.spike_beta = 0.5, 0.0\n"
        "sweep.n_grid = 2, 4, 5\n"
        "sweep.replicates = 2\n"
        f"output.path = {tmp_path / 'mixed.csv'}\n"
    )
    lines = run_sweep(parse_config(text), threads=1).read_text().splitlines()
    header = lines[0].split(",")
    err_at = header.index("error")
    bias_at = header.index("bias_sq")
    d_at = header.index("d")
    rows = [line.split(",") for line in lines[1:]]
    assert len(rows) == 6
    bad = [r for r in rows if r[err_at]]
    assert len(bad) == 2
    for r in bad:
        assert r[0] == "2"
        assert "not strictly above" in r[err_at]
        assert r[bias_at] == "nan"
        assert r[d_at] == "0"
    good = [r for r in rows if not r[err_at]]
    assert len(good) == 4
    assert all(r[bias_at] != "nan" for r in good)

    # the healthy grid points are unaffected by the failing one
    clean = parse_config(text.replace("2, 4, 5", "4, 5"))
    clean_lines = run_sweep(
        clean, threads=1, out_path=tmp_path / "clean.csv"
    ).read_text().splitlines()
    assert clean_lines[1:] == lines[3:]


def test_elapsed_column_holds_the_sentinel(tmp_path):
    cfg = small_config(tmp_path)
    lines = run_sweep(cfg, threads=1).read_text().splitlines()
    at = lines[0].split(",").index("elapsed_ms")
    assert all(line.split(",")[at] == "0" for line in lines[1:])


def test_sidecar_records_config_and_timings(tmp_path):
    cfg = small_config(tmp_path)
    out = run_sweep(cfg, threads=1)
    meta = json.loads(sidecar_path(out).read_text())
    text = serialize_config(cfg)
    assert meta["artifact_version"] == __version__
    assert meta["config"] == text
    assert meta["config_sha256"] == hashlib.sha256(text.encode()).hexdigest()
    assert len(meta["timings_ms"]) == 4
    assert all(ms > 0 for _, _, ms in meta["timings_ms"])
    assert meta["wallclock_s"] > 0


def test_interrupted_write_leaves_no_final_file(tmp_path):
    cfg = small_config(tmp_path)
    target = tmp_path / "results.csv"
    target.mkdir()  # os.replace onto a directory fails after the work is done
    with pytest.raises(OSError):
        run_sweep(cfg, threads=1)
    assert target.is_dir()
    leftovers = [p for p in tmp_path.iterdir() if p.name.startswith("results.csv.")]
    assert leftovers == []


def test_diagnostics_toggle_blanks_spectral_columns(tmp_path):
    cfg = small_config(
        tmp_path,
        base=MINIMAL + "sweep.n_grid = 10\nsweep.replicates = 1\n",
        extra="output.diagnostics = false\n",
    )
    lines = run_sweep(cfg, threads=1).read_text().splitlines()
    header = lines[0].split(",")
    row = dict(zip(header, lines[1].split(",")))
    for col in ("eig_ratio_max", "smallest_ratio", "proj_dist_1", "opnorm_diff",
                "blt_bound"):
        assert row[col] == "nan"
    for col in ("bias_sq", "variance", "lemma1_bound", "lemma4_bound",
                "thm2_bias_bound", "rho_n", "minimax_proxy"):
        assert row[col] != "nan"


# ---------------------------------------------------------------- report


def test_report_summarizes_and_dominance_is_one(tmp_path):
    cfg = small_config(tmp_path)
    out = run_sweep(cfg, threads=1)
    summary = report(out, out_dir=tmp_path / "plots")
    assert summary.n_values == (10, 15)
    assert summary.row_counts == {10: 2, 15: 2}
    assert summary.error_count == 0
    assert summary.dominance["lemma1_bound>=bias_sq"][0] == 1.0
    assert summary.dominance["lemma4_bound>=variance"][0] == 1.0
    assert summary.passed
    text = str(summary)
    assert "dominance lemma1_bound>=bias_sq: 1.0" in text
    assert "dominance lemma4_bound>=variance: 1.0" in text


def test_report_plot_files_cover_every_numeric_column(tmp_path):
    cfg = small_config(tmp_path)
    out = run_sweep(cfg, threads=1)
    summary = report(out, out_dir=tmp_path / "plots")
    expected = [c for c in result_columns(1) if c != "error"]
    names = sorted(p.name for p in summary.plot_files)
    assert names == sorted(f"plot_{c}.csv" for c in expected)
    sample = (tmp_path / "plots" / "plot_risk.csv").read_text().splitlines()
    assert sample[0] == "n,median,q05,q95"
    assert len(sample) == 1 + 2


def test_report_single_row_medians_equal_that_row(tmp_path):
    cfg = small_config(
        tmp_path, base=MINIMAL + "sweep.n_grid = 10\nsweep.replicates = 1\n"
    )
    out = run_sweep(cfg, threads=1)
    lines = out.read_text().splitlines()
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    summary = report(out, out_dir=tmp_path / "plots")
    stats = summary.per_n[10]
    for col, (med, q05, q95) in stats.items():
        want = float(row[col])
        assert med == q05 == q95
        assert med == want or (math.isnan(med) and math.isnan(want))


def test_report_missing_column_is_named(tmp_path):
    cfg = small_config(tmp_path)
    out = run_sweep(cfg, threads=1)
    lines = out.read_text().splitlines()
    header = lines[0].split(",")
    drop = header.index("lemma1_bound")
    stripped = "\n".join(
        ",".join(c for i, c in enumerate(line.split(",")) if i != drop)
        for line in lines
    )
    bad = tmp_path / "missing.csv"
    bad.write_text(stripped + "\n")
    with pytest.raises(ReportError, match="'lemma1_bound'"):
        report(bad, out_dir=tmp_path / "plots")


def test_report_header_only_file_errors(tmp_path):
    bad = tmp_path / "empty.csv"
    bad.write_text(",".join(result_columns(1)) + "\n")
    with pytest.raises(ReportError, match="no rows"):
        report(bad, out_dir=tmp_path / "plots")


def test_report_excludes_error_rows_and_fails_assert(tmp_path):
    cfg = small_config(tmp_path)
    out = run_sweep(cfg, threads=1)
    lines = out.read_text().splitlines()
    header = lines[0].split(",")
    err_at = header.index("error")
    broken = lines[1].split(",")
    broken[err_at] = "RuntimeError: synthetic"
    rigged = tmp_path / "rigged.csv"
    rigged.write_text("\n".join([lines[0], ",".join(broken)] + lines[1:]) + "\n")
    summary = report(rigged, out_dir=tmp_path / "plots")
    assert summary.error_count == 1
    assert sum(summary.row_counts.values()) == 4
    assert not summary.passed


def test_report_detects_dominance_violation(tmp_path):
    cfg = small_config(tmp_path)
    out = run_sweep(cfg, threads=1)
    lines = out.read_text().splitlines()
    header = lines[0].split(",")
    at = header.index("lemma1_bound")
    cells = lines[1].split(",")
    cells[at] = "0"
    lines[1] = ",".join(cells)
    rigged = tmp_path / "rigged.csv"
    rigged.write_text("\n".join(lines) + "\n")
    summary = report(rigged, out_dir=tmp_path / "plots")
    frac, hits, total = summary.dominance["lemma1_bound>=bias_sq"]
    assert (hits, total) == (3, 4)
    assert frac == 0.75
    assert not summary.passed


# ------------------------------------------------------------------- cli


def write_config(tmp_path, text):
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    return str(path)


def test_cli_sweep_then_report_succeeds(tmp_path, capsys):
    out = tmp_path / "r.csv"
    cfg = write_config(tmp_path, SMALL_SWEEP + f"output.path = {out}\n")
    assert main(["sweep", "--config", cfg, "--threads", "1"]) == 0
    assert out.exists()
    assert main(["report", str(out), "--out", str(tmp_path / "plots"), "--assert"]) == 0
    captured = capsys.readouterr().out
    assert "dominance lemma1_bound>=bias_sq: 1.0" in captured


def test_cli_out_flag_overrides_config_path(tmp_path):
    cfg = write_config(tmp_path, SMALL_SWEEP + f"output.path = {tmp_path / 'a.csv'}\n")
    target = tmp_path / "elsewhere.csv"
    assert main(["sweep", "--config", cfg, "--threads", "1", "--out", str(target)]) == 0
    assert target.exists()
    assert not (tmp_path / "a.csv").exists()


def test_cli_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path, SMALL_SWEEP)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(["sweep", "--config", cfg, "--threads", "1", "--out", str(a)]) == 0
    assert main(["sweep", "--config", cfg, "--threads", "1", "--out", str(b),
                 "--seed", "7"]) == 0
    rows_a = a.read_text().splitlines()[1:]
    rows_b = b.read_text().splitlines()[1:]
    assert rows_a != rows_b
    seed_at = a.read_text().splitlines()[0].split(",").index("seed")
    assert all(
        int(rb.split(",")[seed_at]) - int(ra.split(",")[seed_at]) == 7
        for ra, rb in zip(rows_a, rows_b)
    )


def test_cli_simulate_prints_risk_and_bounds(tmp_path, capsys):
    cfg = write_config(tmp_path, MINIMAL)
    assert main(["simulate", "--config", cfg, "--n", "12"]) == 0
    text = capsys.readouterr().out
    for token in ("bias_sq", "variance", "normalized", "lemma1_bias",
                  "thm2_variance", "kl_projector_1"):
        assert token in text


def test_cli_diagnose_prints_spectral_fields(tmp_path, capsys):
    cfg = write_config(tmp_path, MINIMAL)
    assert main(["diagnose", "--config", cfg, "--n", "12"]) == 0
    text = capsys.readouterr().out
    for token in ("eig_ratio_max", "smallest_ratio", "opnorm_diff",
                  "split_ratio_max"):
        assert token in text


def test_cli_baiyin_runs_small(capsys):
    assert main(["baiyin", "--n", "120", "--p", "30", "--reps", "2"]) == 0
    text = capsys.readouterr().out
    assert "sigma_max_mean" in text and "sigma_min_mean" in text


def test_cli_config_error_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, "model.kind = equicorrelated\nmodel.a = 9\n")
    assert main(["sweep", "--config", cfg]) == 1
    assert "model.a" in capsys.readouterr().err


def test_cli_missing_config_exits_1(tmp_path):
    assert main(["sweep", "--config", str(tmp_path / "nope.cfg")]) == 1


def test_cli_usage_error_exits_1():
    assert main(["frobnicate"]) == 1


def test_cli_report_assert_failure_exits_3(tmp_path):
    cfg = small_config(tmp_path)
    out = run_sweep(cfg, threads=1)
    lines = out.read_text().splitlines()
    at = lines[0].split(",").index("lemma4_bound")
    cells = lines[1].split(",")
    cells[at] = "0"
    lines[1] = ",".join(cells)
    rigged = tmp_path / "rigged.csv"
    rigged.write_text("\n".join(lines) + "\n")
    assert main(["report", str(rigged), "--out", str(tmp_path / "p")]) == 0
    assert main(["report", str(rigged), "--out", str(tmp_path / "p"),
                 "--assert"]) == 3


def test_cli_runtime_error_exits_2(tmp_path):
    assert main(["report", str(tmp_path)]) == 2


def test_cli_version_flag_exits_zero(capsys):
    with pytest.raises(SystemExit) as stop:
        main(["--version"])
    assert stop.value.code == 0
    assert __version__ in capsys.readouterr().out
