"""Experiment configuration: a small line-oriented text format.

Grammar: one `section.key = value` assignment per line; blank lines and
lines starting with `#` are skipped. Sections are model, sweep, sampling,
theta, bounds, and output. Lists are comma-separated, booleans are the
literals true/false. parse_config collects every problem it finds and
raises one ConfigError carrying (line, message) pairs, each naming the
offending key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .model import EquicorrFamily, SpikeFamily, SpikeSpec
from .risk import ThetaPolicy
from .sampler import EntryLaw
from .bounds import DEFAULT_T

SECTIONS = ("model", "sweep", "sampling", "theta", "bounds", "output")

LAW_TAGS = ("gaussian", "rademacher", "uniform", "student_t")


class ConfigError(ValueError):
    """Invalid configuration text; .errors lists (line, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"line {ln}: {msg}" for ln, msg in self.errors)
        super().__init__(lines or "invalid configuration")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description.

    family drives the covariance at each sample size; everything else is a
    plain knob. Instances are immutable; use dataclasses.replace (or the
    with_seed helper) to derive variants.
    """

    family: object
    n_grid: tuple = (25, 50, 100)
    law: EntryLaw = field(default_factory=lambda: EntryLaw("gaussian"))
    noise_law: EntryLaw | None = None
    sigma: float = 1.0
    theta: ThetaPolicy = field(default_factory=lambda: ThetaPolicy(0.0, 1.0))
    replicates: int = 50
    base_seed: int = 0
    t: float = DEFAULT_T
    c: float = 1.0
    m_cap: int = 0
    diagnostics: bool = True
    out_path: str = "results.csv"

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(n < 1 for n in grid):
            raise ValueError("n_grid entries must be positive integers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid not increasing")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")
        if not (math.isfinite(self.t) and self.t > 0):
            raise ValueError("t must be positive and finite")
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError("c must be positive and finite")
        if self.m_cap < 0:
            raise ValueError("m_cap must be >= 0 (0 disables the cap)")
        object.__setattr__(self, "n_grid", grid)

    @property
    def effective_noise_law(self) -> EntryLaw:
        return self.law if self.noise_law is None else self.noise_law

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, base_seed=int(seed))


def _parse_int(text: str) -> int:
    try:
        return int(text, 10)
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}")


def _parse_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}")
    if not math.isfinite(value):
        raise ValueError(f"expected a finite number, got {text!r}")
    return value


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _parse_list(text: str, element):
    parts = [p.strip() for p in text.split(",")]
    if any(not p for p in parts):
        raise ValueError("empty list element")
    return tuple(element(p) for p in parts)


_KEY_PARSERS = {
    "model.kind": str,
    "model.a": _parse_float,
    "model.spike_a": lambda s: _parse_list(s, _parse_float),
    "model.spike_beta": lambda s: _parse_list(s, _parse_float),
    "model.spike_gamma": lambda s: _parse_list(s, _parse_float),
    "model.bulk_c1": _parse_float,
    "model.bulk_c2": _parse_float,
    "model.dim_kappa": _parse_float,
    "model.dim_p": _parse_float,
    "model.basis": str,
    "sweep.n_grid": lambda s: _parse_list(s, _parse_int),
    "sweep.replicates": _parse_int,
    "sweep.base_seed": _parse_int,
    "sampling.law": str,
    "sampling.df": _parse_float,
    "sampling.noise_law": str,
    "sampling.noise_df": _parse_float,
    "sampling.sigma": _parse_float,
    "theta.delta": _parse_float,
    "theta.norm": _parse_float,
    "theta.spike_weights": lambda s: _parse_list(s, _parse_float),
    "bounds.t": _parse_float,
    "bounds.c": _parse_float,
    "bounds.m_cap": _parse_int,
    "output.path": str,
    "output.diagnostics": _parse_bool,
}


def _scan(text: str):
    """First pass: raw key -> (value, line), plus syntax errors."""
    values, errors = {}, []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            errors.append((lineno, f"expected 'section.key = value', got {line!r}"))
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key.count(".") != 1:
            errors.append((lineno, f"key {key!r} is not of the form section.key"))
            continue
        section = key.split(".", 1)[0]
        if section not in SECTIONS:
            errors.append((lineno, f"unknown section {section!r} in key {key!r}"))
            continue
        if key not in _KEY_PARSERS:
            errors.append((lineno, f"unknown key {key!r}"))
            continue
        if key in values:
            errors.append((lineno, f"duplicate key {key!r}"))
            continue
        values[key] = (value, lineno)
    return values, errors


class _Reader:
    """Typed access to scanned values, accumulating blamed errors."""

    def __init__(self, values, errors):
        self.values = values
        self.errors = errors
        self.used = set()

    def line(self, key: str) -> int:
        return self.values[key][1] if key in self.values else 0

    def get(self, key: str, default=None):
        self.used.add(key)
        if key not in self.values:
            return default
        raw, lineno = self.values[key]
        try:
            return _KEY_PARSERS[key](raw)
        except ValueError as exc:
            self.errors.append((lineno, f"{key}: {exc}"))
            return default

    def blame(self, key: str, message: str) -> None:
        self.errors.append((self.line(key), f"{key}: {message}"))

    def reject_unused(self) -> None:
        for key in sorted(set(self.values) - self.used):
            self.errors.append(
                (self.values[key][1], f"key {key!r} does not apply here")
            )


def _build_law(reader: _Reader, law_key: str, df_key: str, default):
    tag = reader.get(law_key)
    df = reader.get(df_key)
    if tag is None:
        if df is not None:
            reader.blame(df_key, "df given without a student_t law")
        return default
    if tag not in LAW_TAGS:
        reader.blame(law_key, f"unknown law {tag!r}; choose from {', '.join(LAW_TAGS)}")
        return default
    try:
        return EntryLaw(tag, df)
    except ValueError as exc:
        reader.blame(df_key if "df" in str(exc) else law_key, str(exc))
        return default


def _build_family(reader: _Reader):
    kind = reader.get("model.kind")
    dim_kappa = reader.get("model.dim_kappa", 1.0)
    dim_p = reader.get("model.dim_p", 2.0)

    if kind is None:
        reader.errors.append((0, "model.kind: required key is missing"))
        return None
    if kind not in ("spike", "equicorrelated"):
        reader.blame("model.kind", f"must be spike or equicorrelated, got {kind!r}")
        return None

    if kind == "equicorrelated":
        for key in ("model.spike_a", "model.spike_beta", "model.spike_gamma",
                    "model.bulk_c1", "model.bulk_c2", "model.basis"):
            if key in reader.values:
                reader.blame(key, "applies only to model.kind = spike")
                reader.used.add(key)
        a = reader.get("model.a")
        if a is None:
            reader.errors.append((0, "model.a: required for equicorrelated models"))
            return None
        try:
            return EquicorrFamily(a, (dim_kappa, dim_p))
        except ValueError as exc:
            key = "model.a" if "a must" in str(exc) else "model.dim_kappa"
            reader.blame(key, str(exc))
            return None

    if "model.a" in reader.values:
        reader.blame("model.a", "applies only to model.kind = equicorrelated")
        reader.used.add("model.a")
    spike_a = reader.get("model.spike_a")
    if spike_a is None:
        reader.errors.append((0, "model.spike_a: required for spike models"))
        return None
    spike_beta = reader.get("model.spike_beta", tuple(1.0 for _ in spike_a))
    spike_gamma = reader.get("model.spike_gamma", tuple(0.0 for _ in spike_a))
    ok = True
    for key, seq in (("model.spike_beta", spike_beta), ("model.spike_gamma", spike_gamma)):
        if len(seq) != len(spike_a):
            reader.blame(key, f"length {len(seq)} does not match {len(spike_a)} spikes")
            ok = False
    bulk_c1 = reader.get("model.bulk_c1", 1.0)
    bulk_c2 = reader.get("model.bulk_c2", bulk_c1)
    basis = reader.get("model.basis", "identity")
    if basis != "identity":
        head, _, tail = basis.partition(":")
        if head != "householder" or not tail.isdigit():
            reader.blame("model.basis", f"expected identity or householder:<seed>, got {basis!r}")
            ok = False
        else:
            # one reflection per spike is enough to move every spiked
            # direction off the coordinate axes
            basis = ("householder", int(tail), len(spike_a))
    if not ok:
        return None
    try:
        spec = SpikeSpec(
            tuple(zip(spike_a, spike_beta, spike_gamma)),
            bulk=(bulk_c1, bulk_c2),
            dim_rule=(dim_kappa, dim_p),
        )
    except ValueError as exc:
        msg = str(exc)
        if "bulk" in msg:
            reader.blame("model.bulk_c1", msg)
        elif "dimension rule" in msg:
            reader.blame("model.dim_kappa", msg)
        else:
            reader.blame("model.spike_a", msg)
        return None
    return SpikeFamily(spec, basis)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text.

    All detectable problems are reported together; the raised ConfigError
    lists one (line, message) pair per problem, line 0 meaning the config
    as a whole (for example a missing required key).
    """
    values, errors = _scan(text)
    reader = _Reader(values, errors)

    family = _build_family(reader)

    n_grid = reader.get("sweep.n_grid", (25, 50, 100))
    if any(n < 1 for n in n_grid):
        reader.blame("sweep.n_grid", "entries must be positive")
    elif any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        reader.blame("sweep.n_grid", "n_grid not increasing")
    replicates = reader.get("sweep.replicates", 50)
    if replicates < 1:
        reader.blame("sweep.replicates", "must be >= 1")
    base_seed = reader.get("sweep.base_seed", 0)
    if base_seed < 0:
        reader.blame("sweep.base_seed", "must be >= 0")

    law = _build_law(reader, "sampling.law", "sampling.df", EntryLaw("gaussian"))
    noise_law = _build_law(reader, "sampling.noise_law", "sampling.noise_df", None)
    sigma = reader.get("sampling.sigma", 1.0)
    if sigma < 0:
        reader.blame("sampling.sigma", "must be nonnegative")

    delta = reader.get("theta.delta", 0.0)
    norm = reader.get("theta.norm", 1.0)
    weights = reader.get("theta.spike_weights")
    theta = None
    try:
        theta = ThetaPolicy(delta, norm, weights)
    except ValueError as exc:
        msg = str(exc)
        key = "theta.delta" if "delta" in msg else (
            "theta.spike_weights" if "weight" in msg else "theta.norm")
        reader.blame(key, msg)
    if theta is not None and weights is not None:
        if family is not None and len(weights) != family.spike_count:
            reader.blame(
                "theta.spike_weights",
                f"length {len(weights)} does not match {family.spike_count} spikes",
            )
        elif delta < 1.0 and not any(weights):
            reader.blame(
                "theta.spike_weights",
                "all-zero weights leave no spiked component while delta < 1",
            )

    t = reader.get("bounds.t", DEFAULT_T)
    if not t > 0:
        reader.blame("bounds.t", "must be positive")
    c = reader.get("bounds.c", 1.0)
    if not c > 0:
        reader.blame("bounds.c", "must be positive")
    m_cap = reader.get("bounds.m_cap", 0)
    if m_cap < 0:
        reader.blame("bounds.m_cap", "must be >= 0 (0 disables the cap)")

    out_path = reader.get("output.path", "results.csv")
    if not out_path:
        reader.blame("output.path", "must be a nonempty path")
    diagnostics = reader.get("output.diagnostics", True)

    reader.reject_unused()
    if reader.errors:
        raise ConfigError(sorted(reader.errors))

    return ExperimentConfig(
        family=family,
        n_grid=n_grid,
        law=law,
        noise_law=noise_law,
        sigma=sigma,
        theta=theta,
        replicates=replicates,
        base_seed=base_seed,
        t=t,
        c=c,
        m_cap=m_cap,
        diagnostics=diagnostics,
        out_path=out_path,
    )


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        # repr round-trips binary64 exactly and is the shortest such form
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt_value(v) for v in value)
    return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical text for a config: every key explicit, fixed order.

    parse_config(serialize_config(c)) reproduces c, and re-serializing is
    byte-identical, so the serialized form doubles as a config hash input.
    """
    pairs = [("model.kind",
              "spike" if isinstance(config.family, SpikeFamily) else "equicorrelated")]
    fam = config.family
    if isinstance(fam, SpikeFamily):
        a, beta, gamma = zip(*fam.spec.spike_rules)
        pairs += [
            ("model.spike_a", tuple(a)),
            ("model.spike_beta", tuple(beta)),
            ("model.spike_gamma", tuple(gamma)),
            ("model.bulk_c1", fam.spec.bulk[0]),
            ("model.bulk_c2", fam.spec.bulk[1]),
            ("model.dim_kappa", fam.spec.dim_rule[0]),
            ("model.dim_p", fam.spec.dim_rule[1]),
            ("model.basis",
             "identity" if fam.basis == "identity" else f"householder:{fam.basis[1]}"),
        ]
    else:
        pairs += [
            ("model.a", fam.a),
            ("model.dim_kappa", fam.dim_rule[0]),
            ("model.dim_p", fam.dim_rule[1]),
        ]
    pairs += [
        ("sweep.n_grid", config.n_grid),
        ("sweep.replicates", config.replicates),
        ("sweep.base_seed", config.base_seed),
        ("sampling.law", config.law.tag),
    ]
    if config.law.df is not None:
        pairs.append(("sampling.df", config.law.df))
    if config.noise_law is not None:
        pairs.append(("sampling.noise_law", config.noise_law.tag))
        if config.noise_law.df is not None:
            pairs.append(("sampling.noise_df", config.noise_law.df))
    pairs += [
        ("sampling.sigma", config.sigma),
        ("theta.delta", config.theta.delta),
        ("theta.norm", config.theta.norm),
    ]
    if config.theta.spike_weights is not None:
        pairs.append(("theta.spike_weights", config.theta.spike_weights))
    pairs += [
        ("bounds.t", config.t),
        ("bounds.c", config.c),
        ("bounds.m_cap", config.m_cap),
        ("output.path", config.out_path),
        ("output.diagnostics", config.diagnostics),
    ]
    return "".join(f"{k} = {_fmt_value(v)}\n" for k, v in pairs)


def load_config(path) -> ExperimentConfig:
    """Read and parse a config file (UTF-8)."""
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
