"""Command-line front end: ``lacewalk <subcommand> [flags]``.

Exit status is 0 on success, 1 when a check fails and 2 on a bad
configuration. Reports go to ``--out`` (or stdout); progress goes to stderr.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    fit_exponent,
    gaussian_collapse,
    pc_first_order_terms,
    scaling_scan,
    theorem_constant,
)
from .expansion import (
    Truncation,
    effective_diffusion,
    pc_series_bound,
    pc_transfer,
    solve_pc_fixed_point,
    tail_identity_check,
    verify_recursion,
)
from .laces import (
    IntervalGraph,
    all_edges,
    enumerate_laces,
    is_lace,
    lace_from_graph,
    pi_tables,
)
from .lattice import build_uniform_box, heat_kernel_profile, verify_assumption_D
from .reports import FORMATS, ReportError, emit_report
from .walks import INFINITY, EnumerationBudgetExceeded, memory_label, two_point_tables

SUBCOMMANDS = {
    "dist-check": "Assumption-D diagnostics and the heat-kernel profile of the box distribution.\n"
    "CSV columns: kind, n, sup, normalized (heat-kernel rows) and the report fields (assumption row).",
    "enumerate": "Exact weighted walk counts c_n (and unweighted counts).\n"
    "CSV columns: tau, n, c_n, unweighted.",
    "pi": "Exact expansion coefficient tables pi^(N)_{1,n}(x).\n"
    "CSV columns: N, tau, n, x, numerator, denominator.",
    "verify": "Exact recursion residuals, lace-enumeration oracle and (with --p) the tail identity.\n"
    "CSV columns: check, params, residual, bound, verdict.",
    "pc": "Critical point p_c^tau by transfer matrix, fixed point or series bound.\n"
    "CSV columns: value, tau, method, truncation, bracket, iterations.",
    "scan": "p_c^tau over --tau-list with doubled differences and the exponent fit.\n"
    "CSV columns: tau, pc_estimate, method, diff, diff_next, log_tau, log_diff, error.",
    "clt": "Gaussian-collapse diagnostic of the Fourier two-point function.\n"
    "CSV columns: n, k, value, target, deviation, flagged.",
    "const": "Leading large-tau constant and the first-order p_c prediction for the box.\n"
    "CSV columns: d, L, SigmaH2, A, pc_first_order, partial, tail_estimate.",
}


class ConfigError(ValueError):
    pass


def _parse_tau(text, name="tau"):
    s = str(text).strip().lower()
    if s in ("inf", "infinity", "saw"):
        return INFINITY
    try:
        v = int(s)
    except ValueError:
        raise ConfigError(f"field '{name}': expected an integer >= 1 or 'inf', got {text!r}") from None
    if v < 1:
        raise ConfigError(f"field '{name}': expected an integer >= 1 or 'inf', got {text!r}")
    return v


def _parse_list(text, conv, name):
    if isinstance(text, (list, tuple)):
        return list(text)
    items = [t for t in str(text).replace(" ", "").split(",") if t]
    try:
        return [conv(t) for t in items]
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"field '{name}': {exc}") from None


@dataclass
class JobConfig:
    command: str
    d: int = 1
    L: int = 1
    tau: object = INFINITY
    tau_list: list = field(default_factory=list)
    memory: object = INFINITY
    method: str = "transfer"
    N_max: int = 2
    n_max: int = 6
    p: float | None = None
    tol: float = 1e-12
    threads: int = 1
    format: str = "json"
    out: str | None = None
    grid: int = 16
    epsilon: float = 0.5
    n_list: list = field(default_factory=lambda: [8, 16, 32])
    k_list: list = field(default_factory=lambda: [0.5, 1.0, 2.0])

    def validate(self) -> "JobConfig":
        if self.command not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.command!r}")
        for name in ("d", "L", "threads", "N_max"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"field '{name}': must be >= 1")
        if self.n_max < 0:
            raise ConfigError("field 'n_max': must be >= 0")
        if not self.tol > 0:
            raise ConfigError("field 'tol': must be positive")
        if self.format not in FORMATS:
            raise ConfigError(f"field 'format': must be one of {FORMATS}")
        if self.method not in ("transfer", "fixed-point", "series-bound"):
            raise ConfigError("field 'method': must be transfer, fixed-point or series-bound")
        if self.command == "scan" and not self.tau_list:
            raise ConfigError("field 'tau_list': the scan needs at least one tau")
        if self.command == "dist-check" and self.grid < 8:
            raise ConfigError("field 'grid': must be >= 8")
        if self.command == "clt" and (not self.n_list or not self.k_list):
            raise ConfigError("field 'n_list'/'k_list': must be nonempty")
        if self.out is not None and not Path(self.out).parent.exists():
            raise ConfigError(f"field 'out': directory of {self.out!r} does not exist")
        return self

    def header(self) -> dict:
        out = asdict(self)
        for key in ("tau", "memory"):
            out[key] = memory_label(out[key])
        out["tau_list"] = [memory_label(t) for t in self.tau_list]
        return out


_CONVERTERS = {
    "d": int, "L": int, "N_max": int, "n_max": int, "threads": int, "grid": int,
    "p": float, "tol": float, "epsilon": float,
    "tau": _parse_tau, "memory": lambda s: _parse_tau(s, "memory"),
    "tau_list": lambda s: _parse_list(s, lambda t: _parse_tau(t, "tau_list"), "tau_list"),
    "n_list": lambda s: _parse_list(s, int, "n_list"),
    "k_list": lambda s: _parse_list(s, float, "k_list"),
    "method": str, "format": str, "out": str,
}
_ALIASES = {"nmax": "n_max", "Nmax": "N_max", "tau-list": "tau_list", "n-list": "n_list", "k-list": "k_list"}


def _convert(key, value):
    key = _ALIASES.get(key, key.replace("-", "_"))
    if key not in _CONVERTERS:
        raise ConfigError(f"unknown config field {key!r}")
    try:
        return key, _CONVERTERS[key](value)
    except ConfigError:
        raise
    except (TypeError, ValueError):
        raise ConfigError(f"field '{key}': cannot parse {value!r}") from None


def read_config_file(path) -> dict:
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"field 'config': cannot read {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"field 'config': line {lineno} is not key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        key, val = _convert(k, v)
        out[key] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lacewalk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    for name, text in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=text.splitlines()[0], description=text,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--d", type=str, help="dimension")
        sp.add_argument("--L", type=str, help="range of the box distribution")
        sp.add_argument("--tau", type=str, help="memory (integer or 'inf')")
        sp.add_argument("--tau-list", dest="tau_list", type=str, help="comma-separated memories")
        sp.add_argument("--memory", type=str, help="walk model of the tail identity (default inf)")
        sp.add_argument("--method", type=str, help="transfer, fixed-point or series-bound")
        sp.add_argument("--nmax", dest="n_max", type=str, help="length cutoff")
        sp.add_argument("--Nmax", dest="N_max", type=str, help="loop-order cutoff")
        sp.add_argument("--p", type=str, help="weight parameter p")
        sp.add_argument("--tol", type=str, help="tolerance")
        sp.add_argument("--threads", type=str, help="worker count")
        sp.add_argument("--format", type=str, help="json or csv")
        sp.add_argument("--out", type=str, help="output file (default stdout)")
        sp.add_argument("--grid", type=str, help="grid resolution for dist-check")
        sp.add_argument("--epsilon", type=str, help="moment exponent epsilon for dist-check")
        sp.add_argument("--n-list", dest="n_list", type=str, help="comma-separated n for clt")
        sp.add_argument("--k-list", dest="k_list", type=str, help="comma-separated k for clt")
        sp.add_argument("--config", type=str, help="key=value file; flags override it")
    return parser


def make_config(argv) -> JobConfig:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise ConfigError("invalid command line") from None
    if not ns.command:
        raise ConfigError("missing subcommand")
    values = read_config_file(ns.config) if ns.config else {}
    for f in fields(JobConfig):
        raw = getattr(ns, f.name, None)
        if f.name != "command" and raw is not None:
            key, val = _convert(f.name, raw)
            values[key] = val
    return JobConfig(command=ns.command, **values).validate()


def _progress(msg: str):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# subcommands; each returns (results, ok)


def _dist_check(cfg: JobConfig):
    D = build_uniform_box(cfg.d, cfg.L)
    rep = verify_assumption_D(D, cfg.grid, cfg.epsilon)
    prof = heat_kernel_profile(D, max(cfg.n_max, 1))
    rows = [{"kind": "assumption", **asdict(rep)}]
    rows += [{"kind": "heat-kernel", "n": n, "sup": s, "normalized": z} for n, s, z in prof.rows()]
    rows.append({"kind": "heat-kernel-bound", "bound": prof.bound})
    return rows, True


def _enumerate(cfg: JobConfig):
    D = build_uniform_box(cfg.d, cfg.L)
    tables = two_point_tables(D, cfg.tau, cfg.n_max, workers=cfg.threads)
    rows = []
    for t in tables:
        rows.append({"tau": memory_label(cfg.tau), "n": t.n, "c_n": t.c, "unweighted": t.unweighted(D)})
    return rows, True


def _pi(cfg: JobConfig):
    D = build_uniform_box(cfg.d, cfg.L)
    P = pi_tables(D, cfg.tau, cfg.n_max, workers=cfg.threads)
    rows = []
    for n in range(2, cfg.n_max + 1):
        for N in range(1, min(cfg.N_max, max(P.max_order, 1)) + 1):
            rows.extend(P.table(N, n).rows())
    if not rows:
        rows = [{"N": 1, "tau": memory_label(cfg.tau), "n": cfg.n_max, "x": None, "numerator": 0, "denominator": 1}]
    return rows, True


def lace_oracle_rows(max_length: int) -> list[dict]:
    """Lace enumeration against filtering all edge subsets, and idempotence of the construction."""
    from itertools import combinations

    rows = []
    for b in range(1, max_length + 1):
        edges = all_edges(0, b)
        brute: dict[int, set] = {}
        for r in range(1, b + 1):
            for sub in combinations(edges, r):
                if is_lace(sub, 0, b):
                    brute.setdefault(r, set()).add(tuple(sub))
        mism = 0
        for N in range(1, b + 1):
            got = {tuple(L.edges) for L in enumerate_laces(N, INFINITY, 0, b)}
            mism += len(got ^ brute.get(N, set()))
            for L in enumerate_laces(N, INFINITY, 0, b):
                if lace_from_graph(IntervalGraph(frozenset(L.edges), 0, b)) != L:
                    mism += 1
        rows.append({"check": "lace-oracle", "params": {"a": 0, "b": b}, "residual": mism, "bound": 0,
                     "verdict": "PASS" if mism == 0 else "FAIL"})
    return rows


def _verify(cfg: JobConfig):
    D = build_uniform_box(cfg.d, cfg.L)
    rows = []
    for n in range(cfg.n_max + 1):
        res = verify_recursion(D, cfg.tau, n, workers=cfg.threads)
        rows.append({"check": "recursion", "params": {"d": cfg.d, "L": cfg.L, "tau": memory_label(cfg.tau), "n": n},
                     "residual": res, "bound": 0, "verdict": "PASS" if res == 0 else "FAIL"})
    rows += lace_oracle_rows(min(cfg.n_max, 7))
    if cfg.p is not None and cfg.tau != INFINITY and cfg.tau >= 2 and cfg.n_max > cfg.tau:
        e1 = np.zeros(cfg.d)
        e1[0] = math.pi / 2
        for k in (np.zeros(cfg.d), e1):
            rows.append(tail_identity_check(D, cfg.tau, cfg.p, k, cfg.n_max, cfg.memory, cfg.threads).as_dict())
    ok = all(r["verdict"] == "PASS" for r in rows)
    return rows, ok


def _pc(cfg: JobConfig):
    D = build_uniform_box(cfg.d, cfg.L)
    if cfg.method == "transfer":
        est = pc_transfer(D, cfg.tau, cfg.tol, workers=cfg.threads)
    elif cfg.method == "fixed-point":
        est = solve_pc_fixed_point(D, cfg.tau, Truncation(cfg.N_max, max(cfg.n_max, 2)), cfg.tol, workers=cfg.threads)
    else:
        est = pc_series_bound(D, cfg.tau, max(cfg.n_max, 1), workers=cfg.threads)
    return [est.as_dict()], True


def _scan(cfg: JobConfig):
    D = build_uniform_box(cfg.d, cfg.L)
    trunc = Truncation(cfg.N_max, max(cfg.n_max, 2)) if cfg.method == "fixed-point" else None
    rows = scaling_scan(D, cfg.tau_list, cfg.method, trunc, cfg.tol, cfg.threads,
                        progress=lambda t, pc, err: _progress(f"tau={memory_label(t)} pc={pc} error={err}"))
    out = [r.as_dict() for r in rows]
    try:
        fit = fit_exponent(rows)
        out.append({"fit_slope": fit.slope, "fit_intercept": fit.intercept,
                    "fit_residual_norm": fit.residual_norm, "fit_points": fit.points})
    except ValueError as exc:
        out.append({"fit_error": str(exc)})
    return out, True


def _clt(cfg: JobConfig):
    D = build_uniform_box(cfg.d, cfg.L)
    p = 1.0 if cfg.p is None else cfg.p
    trunc = Truncation(cfg.N_max, max(cfg.n_max, 2))
    diff = effective_diffusion(D, p, trunc, cfg.tau, cfg.threads)
    rows = gaussian_collapse(D, p, cfg.n_list, cfg.k_list, diff, cfg.tau, trunc)
    return [asdict(r) for r in rows], True


def _const(cfg: JobConfig):
    sh2 = cfg.d / 3.0
    pred = pc_first_order_terms(cfg.d, cfg.L, max(cfg.n_max, 2))
    return [{"d": cfg.d, "L": cfg.L, "SigmaH2": sh2, "A": theorem_constant(cfg.d, cfg.L, sh2),
             "pc_first_order": pred.value, "partial": pred.partial, "tail_estimate": pred.tail_estimate}], True


HANDLERS = {"dist-check": _dist_check, "enumerate": _enumerate, "pi": _pi, "verify": _verify,
            "pc": _pc, "scan": _scan, "clt": _clt, "const": _const}


def run(cfg: JobConfig) -> tuple[int, str]:
    """Run one validated job; returns (exit status, report text)."""
    results, ok = HANDLERS[cfg.command](cfg)
    text = emit_report(results, cfg.format, cfg.out, cfg.header())
    return (0 if ok else 1), text


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = make_config(argv)
    except ConfigError as exc:
        print(f"lacewalk: config error: {exc}", file=sys.stderr)
        return 2
    try:
        status, text = run(cfg)
    except ReportError as exc:
        print(f"lacewalk: {exc}", file=sys.stderr)
        return 2
    except (EnumerationBudgetExceeded, ValueError, RuntimeError) as exc:
        print(f"lacewalk: {cfg.command} failed: {exc}", file=sys.stderr)
        return 1
    if cfg.out is None:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
