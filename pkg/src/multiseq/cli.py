"""Command-line front end.

Subcommands::

    multiseq design gs|composite|single-stage|dtl  --config FILE [flags]
    multiseq oc grid|sweep|sensitivity             --config FILE [flags]

Configuration is a flat key-value text file (``key = value``, ``#``
comments); ``--set key=value`` overrides individual entries and the
named flags ``--seed --nsims --threads --out`` override their keys.
Outputs are deterministic: identical configurations produce
byte-identical files.

Exit codes: 0 success, 2 validation error, 3 infeasible design,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import analysis, dtl
from .errors import (
    CalibrationError,
    ConfigError,
    InfeasibleDesignError,
    InvalidCorrelationError,
)
from .model import GSDesignSpec, OutcomeModel, StageSchedule
from .simulate import SimConfig

__all__ = ["RunConfig", "parse_config", "load_key_values", "emit_results", "main"]

DESIGN_KINDS = ("gs", "composite", "single-stage", "dtl")
THREADS_ENV = "MULTISEQ_THREADS"

_DEFAULT_MU_VALUES = (-0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.4)
_DEFAULT_RHO_VALUES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
_DEFAULT_CP_GRID = (-4.0, 4.0, 0.1)


@dataclass(frozen=True)
class RunConfig:
    """Fully validated parameters of one run; equality is value-based so
    a config echo parses back to an identical instance."""

    command: str
    kind: str | None = None
    kind_a: str | None = None
    kind_b: str | None = None
    K: int = 0
    m: int = 1
    J: int = 1
    delta: float = 0.0
    alpha: float = 0.025
    beta: float = 0.2
    delta0: tuple = ()
    delta1: tuple = ()
    sigma: tuple = ()
    rho: tuple = ()
    k_max: int | None = None
    cp_l: float = 0.3
    cp_u: float = 0.95
    seed: int = 1
    nsims: int = 100_000
    chunk_size: int = 65_536
    threads: int = 1
    nmin: int | None = None
    nmax: int | None = None
    lfc_mode: str = "first-m"
    strict_alpha: bool = False
    mu_values: tuple = ()
    rho_values: tuple = ()
    cp_l_values: tuple = ()
    cp_u_values: tuple = ()
    cp_grid: tuple = _DEFAULT_CP_GRID
    out: str = "multiseq-out"


def _fail(field_name: str, message: str):
    raise ConfigError(f"{field_name}: {message}")


def _parse_float(raw: str, name: str) -> float:
    try:
        return float(raw)
    except ValueError:
        _fail(name, f"expected a number, got {raw!r}")


def _parse_int(raw: str, name: str) -> int:
    try:
        return int(raw)
    except ValueError:
        _fail(name, f"expected an integer, got {raw!r}")


def _parse_floats(raw: str, name: str) -> tuple:
    return tuple(_parse_float(part.strip(), name) for part in raw.split(",") if part.strip())


def _parse_bool(raw: str, name: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    _fail(name, f"expected true or false, got {raw!r}")


def load_key_values(path) -> dict:
    """Read a flat ``key = value`` file, '#' starts a comment."""
    entries = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def parse_config(command: str, entries: dict) -> RunConfig:
    """Build a validated RunConfig from raw key-value strings."""
    known = {f.name for f in fields(RunConfig)} - {"command"}
    for key in entries:
        if key not in known:
            _fail(key, "unknown configuration key")
    get = entries.get

    k = _parse_int(get("K", "0"), "K")
    if k < 1:
        _fail("K", "the number of outcomes is required and must be >= 1")

    def vector(name: str, default: float | None = None) -> tuple:
        raw = get(name)
        if raw is None:
            if default is None:
                _fail(name, "required")
            values = (float(default),) * k
        else:
            values = _parse_floats(raw, name)
            if len(values) == 1:
                values = values * k
            if len(values) != k:
                _fail(name, f"expected 1 or {k} values, got {len(values)}")
        return values

    raw_rho = get("rho", "0")
    if ";" in raw_rho:
        rows = tuple(_parse_floats(row, "rho") for row in raw_rho.split(";"))
        if len(rows) != k or any(len(row) != k for row in rows):
            _fail("rho", f"matrix must be {k}x{k}")
        rho = rows
    else:
        shared = _parse_float(raw_rho, "rho")
        rho = tuple(tuple(1.0 if i == j else shared for j in range(k))
                    for i in range(k))

    cfg = RunConfig(
        command=command,
        kind=get("kind"),
        kind_a=get("kind_a"),
        kind_b=get("kind_b"),
        K=k,
        m=_parse_int(get("m", "1"), "m"),
        J=_parse_int(get("J", "1"), "J"),
        delta=_parse_float(get("delta", "0"), "delta"),
        alpha=_parse_float(get("alpha", "0.025"), "alpha"),
        beta=_parse_float(get("beta", "0.2"), "beta"),
        delta0=vector("delta0"),
        delta1=vector("delta1"),
        sigma=vector("sigma", default=1.0),
        rho=rho,
        k_max=_parse_int(get("k_max"), "k_max") if get("k_max") is not None else None,
        cp_l=_parse_float(get("cp_l", "0.3"), "cp_l"),
        cp_u=_parse_float(get("cp_u", "0.95"), "cp_u"),
        seed=_parse_int(get("seed", "1"), "seed"),
        nsims=_parse_int(get("nsims", "100000"), "nsims"),
        chunk_size=_parse_int(get("chunk_size", "65536"), "chunk_size"),
        threads=_parse_int(get("threads", os.environ.get(THREADS_ENV, "1")), "threads"),
        nmin=_parse_int(get("nmin"), "nmin") if get("nmin") is not None else None,
        nmax=_parse_int(get("nmax"), "nmax") if get("nmax") is not None else None,
        lfc_mode=get("lfc_mode", "first-m"),
        strict_alpha=_parse_bool(get("strict_alpha", "false"), "strict_alpha"),
        mu_values=_parse_floats(get("mu_values"), "mu_values")
        if get("mu_values") is not None else _DEFAULT_MU_VALUES,
        rho_values=_parse_floats(get("rho_values"), "rho_values")
        if get("rho_values") is not None else _DEFAULT_RHO_VALUES,
        cp_l_values=_parse_floats(get("cp_l_values", ""), "cp_l_values"),
        cp_u_values=_parse_floats(get("cp_u_values", ""), "cp_u_values"),
        cp_grid=_parse_cp_grid(get("cp_grid")),
        out=get("out", "multiseq-out"),
    )
    _validate(cfg)
    return cfg


def _parse_cp_grid(raw: str | None) -> tuple:
    if raw is None:
        return _DEFAULT_CP_GRID
    parts = raw.split(":")
    if len(parts) != 3:
        _fail("cp_grid", "expected 'low:high:step'")
    lo, hi, step = (_parse_float(p, "cp_grid") for p in parts)
    if step <= 0 or hi <= lo:
        _fail("cp_grid", "need low < high and step > 0")
    return lo, hi, step


def _validate(cfg: RunConfig) -> None:
    if cfg.command.startswith("design"):
        if cfg.kind not in DESIGN_KINDS:
            _fail("kind", f"must be one of {', '.join(DESIGN_KINDS)}")
    else:
        for name in ("kind_a", "kind_b"):
            value = getattr(cfg, name)
            if cfg.command in ("oc grid", "oc sweep") and value not in DESIGN_KINDS:
                _fail(name, f"must be one of {', '.join(DESIGN_KINDS)}")
    if not 1 <= cfg.m <= cfg.K:
        _fail("m", "must satisfy 1 <= m <= K")
    if cfg.J < 1:
        _fail("J", "must be >= 1")
    if not 0 < cfg.alpha < 1:
        _fail("alpha", "must lie in (0, 1)")
    if not 0 < cfg.beta < 1:
        _fail("beta", "must lie in (0, 1)")
    if any(hi < lo for lo, hi in zip(cfg.delta0, cfg.delta1)):
        _fail("delta1", "must be >= delta0 elementwise")
    if any(s <= 0 for s in cfg.sigma):
        _fail("sigma", "must be strictly positive")
    if not 0 <= cfg.cp_l < cfg.cp_u <= 1:
        _fail("cp_l/cp_u", "thresholds must satisfy 0 <= cp_l < cp_u <= 1")
    if cfg.nsims < 1:
        _fail("nsims", "must be >= 1")
    if cfg.threads < 1:
        _fail("threads", "must be >= 1")
    needs_dtl = cfg.kind == "dtl" or "dtl" in (cfg.kind_a, cfg.kind_b) \
        or cfg.command == "oc sensitivity"
    if needs_dtl:
        if cfg.k_max is None:
            _fail("k_max", "required for drop-the-loser designs")
        if not 1 <= cfg.k_max < cfg.K:
            _fail("k_max", "must satisfy 1 <= k_max < K")
    if cfg.kind == "single-stage" and cfg.J != 1:
        _fail("J", "single-stage designs require J = 1")
    if cfg.kind == "dtl" and cfg.J not in (1, 2):
        _fail("J", "drop-the-loser designs fix J = 2")
    if cfg.nmin is not None and cfg.nmin < 1:
        _fail("nmin", "must be >= 1")
    if cfg.nmin is not None and cfg.nmax is not None and cfg.nmin >= cfg.nmax:
        _fail("nmin/nmax", "require nmin < nmax")
    try:
        OutcomeModel(sigma=cfg.sigma, rho=np.asarray(cfg.rho))
    except ValueError as exc:
        _fail("rho", str(exc))


# ---------------------------------------------------------------------------
# building engine inputs


def _model(cfg: RunConfig) -> OutcomeModel:
    return OutcomeModel(sigma=cfg.sigma, rho=np.asarray(cfg.rho))


def _sim_config(cfg: RunConfig) -> SimConfig:
    return SimConfig(seed=cfg.seed, nsims=cfg.nsims, chunk_size=cfg.chunk_size)


def _gs_spec(cfg: RunConfig, n_stages: int, composite: bool) -> GSDesignSpec:
    return GSDesignSpec(n_outcomes=cfg.K, n_promising=cfg.m, n_stages=n_stages,
                        alpha=cfg.alpha, beta=cfg.beta, delta0=cfg.delta0,
                        delta1=cfg.delta1, wt_delta=cfg.delta, composite=composite)


def _dtl_spec(cfg: RunConfig, cp_l: float | None = None,
              cp_u: float | None = None) -> dtl.DtLDesignSpec:
    return dtl.DtLDesignSpec(
        n_outcomes=cfg.K, n_promising=cfg.m, max_retained=cfg.k_max,
        cp_lower=cfg.cp_l if cp_l is None else cp_l,
        cp_upper=cfg.cp_u if cp_u is None else cp_u,
        alpha=cfg.alpha, beta=cfg.beta, delta0=cfg.delta0, delta1=cfg.delta1)


def _spec_for_kind(cfg: RunConfig, kind: str):
    if kind == "dtl":
        return _dtl_spec(cfg)
    if kind == "single-stage":
        return _gs_spec(cfg, 1, composite=False)
    return _gs_spec(cfg, cfg.J, composite=(kind == "composite"))


def _run_search(cfg: RunConfig, kind: str):
    spec = _spec_for_kind(cfg, kind)
    nmin = cfg.nmin if cfg.nmin is not None else (2 if kind == "dtl" else 1)
    nmax = cfg.nmax if cfg.nmax is not None else 400
    return analysis.search_design(spec, _model(cfg), _sim_config(cfg),
                                  threads=cfg.threads, nmin=nmin, nmax=nmax,
                                  lfc_mode=cfg.lfc_mode, strict=cfg.strict_alpha)


# ---------------------------------------------------------------------------
# emission

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".6g")
    return str(value)


def _fmt_seq(values) -> str:
    return ", ".join(_fmt(v) for v in values)


def config_echo_lines(cfg: RunConfig) -> list:
    """Canonical re-parseable form of the configuration (exact floats)."""
    def rep(value):
        if isinstance(value, tuple) and value and isinstance(value[0], tuple):
            return "; ".join(",".join(repr(x) for x in row) for row in value)
        if isinstance(value, tuple):
            return ",".join(repr(x) for x in value)
        return str(value)

    lines = []
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        value = getattr(cfg, f.name)
        if value is None or (isinstance(value, tuple) and not value):
            continue
        if f.name == "cp_grid":
            lines.append(f"cp_grid = {':'.join(repr(x) for x in value)}")
            continue
        lines.append(f"{f.name} = {rep(value)}")
    return lines


def _summary_for_realisation(real, label: str = "") -> list:
    p = f"{label}_" if label else ""
    lines = [f"{p}kind = {real.kind}"]
    if isinstance(real, dtl.DtLRealisation):
        lines += [
            f"{p}r = {_fmt(real.r)}",
            f"{p}n = {real.n}",
            f"{p}N = {real.n_total}",
            f"{p}alpha_star = {_fmt(real.alpha_star)}",
            f"{p}power_star = {_fmt(real.power_star)}",
            f"{p}pet_null = {_fmt(real.oc_null.pet)}",
            f"{p}pet_lfc = {_fmt(real.oc_lfc.pet)}",
            f"{p}ess_null = {_fmt(real.oc_null.ess)}",
            f"{p}ess_lfc = {_fmt(real.oc_lfc.ess)}",
            f"{p}enm_null = {_fmt(real.oc_null.enm)}",
            f"{p}enm_lfc = {_fmt(real.oc_lfc.enm)}",
        ]
    else:
        lines += [
            f"{p}C = {_fmt(real.constant)}",
            f"{p}n = {real.n}",
            f"{p}N = {real.n_total}",
            f"{p}f = {_fmt_seq(real.boundaries.lower)}",
            f"{p}e = {_fmt_seq(real.boundaries.upper)}",
            f"{p}alpha_star = {_fmt(real.alpha_star)}",
            f"{p}power_star = {_fmt(real.power_star)}",
            f"{p}ess_null = {_fmt(real.oc_null.ess)}",
            f"{p}ess_lfc = {_fmt(real.oc_lfc.ess)}",
            f"{p}enm_null = {_fmt(real.oc_null.enm)}",
            f"{p}enm_lfc = {_fmt(real.oc_lfc.enm)}",
            f"{p}expected_stages_null = {_fmt(real.oc_null.expected_stages)}",
            f"{p}expected_stages_lfc = {_fmt(real.oc_lfc.expected_stages)}",
        ]
    return lines


def _write_text(path: Path, lines) -> None:
    path.write_text("\n".join(lines) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def emit_results(cfg: RunConfig, out_dir: Path, summary_lines, csv_files) -> list:
    """Write config echo, summary and any CSV tables; returns the paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    echo = out_dir / "config_echo.txt"
    _write_text(echo, config_echo_lines(cfg))
    written.append(echo)
    summary = out_dir / "summary.txt"
    _write_text(summary, [f"seed = {cfg.seed}", f"nsims = {cfg.nsims}"] + summary_lines)
    written.append(summary)
    for name, (header, rows) in csv_files.items():
        path = out_dir / name
        _write_csv(path, header, rows)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# commands

def _cmd_design(cfg: RunConfig) -> list:
    real = _run_search(cfg, cfg.kind)
    summary = _summary_for_realisation(real)
    csv_files = {}
    if isinstance(real, dtl.DtLRealisation):
        lo, hi, step = cfg.cp_grid
        z_values = np.arange(lo, hi + step / 2, step)
        rows = dtl.cp_lookup(real.spec, _model(cfg), real.r, real.n, z_values)
        csv_files["cp_lookup.csv"] = (("outcome", "z", "cp"), rows)
    else:
        cum = StageSchedule.equal(real.n, real.spec.n_stages).cumulative
        rows = [(j + 1, int(cum[j]), real.boundaries.lower[j], real.boundaries.upper[j])
                for j in range(real.spec.n_stages)]
        csv_files["boundaries.csv"] = (("stage", "n_cumulative", "lower", "upper"), rows)
    return emit_results(cfg, Path(cfg.out), summary, csv_files)


def _cmd_oc_grid(cfg: RunConfig) -> list:
    real_a = _run_search(cfg, cfg.kind_a)
    real_b = _run_search(cfg, cfg.kind_b)
    axes = (cfg.mu_values,) * cfg.K
    grid = analysis.effect_grid(real_a, real_b, axes, _model(cfg),
                                _sim_config(cfg), threads=cfg.threads)
    header = tuple(f"mu_{k + 1}" for k in range(cfg.K)) + (
        "p_reject_A", "p_reject_B", "ess_A", "ess_B", "enm_A", "enm_B",
        "ess_ratio", "enm_ratio")
    rows = [tuple(point) + (grid.p_a[i], grid.p_b[i], grid.ess_a[i], grid.ess_b[i],
                            grid.enm_a[i], grid.enm_b[i], grid.ess_ratio[i],
                            grid.enm_ratio[i])
            for i, point in enumerate(grid.points)]
    summary = (_summary_for_realisation(real_a, "A") +
               _summary_for_realisation(real_b, "B"))
    return emit_results(cfg, Path(cfg.out), summary, {"grid.csv": (header, rows)})


def _cmd_oc_sweep(cfg: RunConfig) -> list:
    spec_a = _spec_for_kind(cfg, cfg.kind_a)
    spec_b = _spec_for_kind(cfg, cfg.kind_b)
    nmin = cfg.nmin if cfg.nmin is not None else 1
    nmax = cfg.nmax if cfg.nmax is not None else 400
    curve = analysis.correlation_sweep(spec_a, spec_b, cfg.rho_values,
                                       _sim_config(cfg), sigma=cfg.sigma[0],
                                       threads=cfg.threads, nmin=nmin, nmax=nmax,
                                       lfc_mode=cfg.lfc_mode, strict=cfg.strict_alpha)
    header = ("rho", "valid", "n_A", "n_B", "constant_A", "constant_B",
              "ess_A", "ess_B", "enm_A", "enm_B", "ess_ratio", "enm_ratio")
    rows = [(rho, curve.valid[i], curve.n_a[i], curve.n_b[i],
             curve.constant_a[i], curve.constant_b[i], curve.ess_a[i],
             curve.ess_b[i], curve.enm_a[i], curve.enm_b[i],
             curve.ess_ratio[i], curve.enm_ratio[i])
            for i, rho in enumerate(curve.rho_values)]
    summary = [f"kind_a = {cfg.kind_a}", f"kind_b = {cfg.kind_b}",
               f"points = {len(rows)}", f"failed = {len(curve.errors)}"]
    summary += [f"error_{i} = rho {rho}: {msg}"
                for i, (rho, msg) in enumerate(curve.errors)]
    return emit_results(cfg, Path(cfg.out), summary, {"sweep.csv": (header, rows)})


def _cmd_oc_sensitivity(cfg: RunConfig) -> list:
    lowers = cfg.cp_l_values or (cfg.cp_l,)
    uppers = cfg.cp_u_values or (cfg.cp_u,)
    nmin = cfg.nmin if cfg.nmin is not None else 2
    nmax = cfg.nmax if cfg.nmax is not None else 400
    header = ("cp_l", "cp_u", "r", "n", "N", "alpha_star", "power_star",
              "pet_null", "pet_lfc", "ess_null", "ess_lfc", "enm_null", "enm_lfc")
    rows = []
    for lo in lowers:
        for hi in uppers:
            if not 0 <= lo < hi <= 1:
                continue
            spec = _dtl_spec(cfg, cp_l=lo, cp_u=hi)
            real = dtl.search_dtl_design(spec, _model(cfg), _sim_config(cfg),
                                         nmin=nmin, nmax=nmax, threads=cfg.threads,
                                         lfc_mode=cfg.lfc_mode,
                                         strict=cfg.strict_alpha)
            rows.append((lo, hi, real.r, real.n, real.n_total, real.alpha_star,
                         real.power_star, real.oc_null.pet, real.oc_lfc.pet,
                         real.oc_null.ess, real.oc_lfc.ess,
                         real.oc_null.enm, real.oc_lfc.enm))
    summary = [f"combinations = {len(rows)}"]
    return emit_results(cfg, Path(cfg.out), summary, {"sensitivity.csv": (header, rows)})


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multiseq",
                                     description="design search for multi-outcome "
                                                 "sequential single-arm trials")
    sub = parser.add_subparsers(dest="group", required=True)

    def add_common(p):
        p.add_argument("--config", help="key-value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration entry (repeatable)")
        p.add_argument("--seed", type=int, help="RNG seed")
        p.add_argument("--nsims", type=int, help="simulated trials per estimate")
        p.add_argument("--threads", type=int, help="worker threads")
        p.add_argument("--out", help="output directory")

    design = sub.add_parser("design", help="search for a design realisation")
    design.add_argument("design_kind", choices=DESIGN_KINDS)
    add_common(design)

    oc = sub.add_parser("oc", help="operating-characteristic comparisons")
    oc.add_argument("oc_kind", choices=("grid", "sweep", "sensitivity"))
    add_common(oc)
    return parser


def _gather_entries(args) -> dict:
    entries = load_key_values(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        entries[key.strip()] = value.strip()
    for name in ("seed", "nsims", "threads", "out"):
        value = getattr(args, name)
        if value is not None:
            entries[name] = str(value)
    return entries


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.group == "design":
            command = "design"
            entries = _gather_entries(args)
            entries.setdefault("kind", args.design_kind)
            if entries["kind"] != args.design_kind:
                raise ConfigError("kind: conflicts with the design subcommand")
            cfg = parse_config(command, entries)
            written = _cmd_design(cfg)
        else:
            command = f"oc {args.oc_kind}"
            cfg = parse_config(command, _gather_entries(args))
            written = {"grid": _cmd_oc_grid, "sweep": _cmd_oc_sweep,
                       "sensitivity": _cmd_oc_sensitivity}[args.oc_kind](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleDesignError as exc:
        print(f"infeasible design: {exc}", file=sys.stderr)
        return 3
    except (CalibrationError, InvalidCorrelationError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
