"""Command-line entry point: ``controlkam <subcommand> [--config PATH] ...``.

Every run writes its artifacts plus ``manifest.json`` (config hash, library
versions, wall time, status) into the output directory.  Exit codes: 0 on
success, 2 on usage or validation errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import platform
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cost import OptimizerParams
from .errors import (ControlKamError, DisconnectedError, DivergenceError, IndeterminateExpansionError,
                     InfeasibleError, InvalidInputError, NonConvergenceError, UnreachablePointError, UnreachedError)

log = logging.getLogger("controlkam")

SUBCOMMANDS = ("cost", "critical", "potential", "transport", "example", "brackets", "check")
ENV_PREFIX = "CONTROLKAM_"
NUMERICAL_ERRORS = (NonConvergenceError, DisconnectedError, UnreachedError, InfeasibleError,
                    DivergenceError, UnreachablePointError)


class ConfigError(InvalidInputError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# configuration

OPTIMIZER_KEYS = {f.name for f in dataclasses.fields(OptimizerParams)}
SECTION_KEYS = {
    "system": {"name", "space", "periods", "bounds", "drift", "controls"},
    "lagrangian": {"kind", "A", "b", "expr", "control_bound"},
    "grid": {"counts"},
    "horizons": {"t_short", "doublings", "tail"},
    "optimizer": OPTIMIZER_KEYS - {"seed"},
    "transport": {"mu", "nu"},
    "example": {"k", "p2", "levels", "resolution", "deltas", "restarts", "penalty_energy"},
    "brackets": {"point", "max_order", "word", "test_function"},
}
TOP_KEYS = {"seed", "out", "threads", "matrix"} | set(SECTION_KEYS)


@dataclass
class RunConfig:
    seed: int
    system: dict = field(default_factory=lambda: {"name": "integrator-1d"})
    lagrangian: dict = field(default_factory=dict)
    grid: dict = field(default_factory=lambda: {"counts": [16]})
    horizons: dict = field(default_factory=lambda: {"t_short": 1.0, "doublings": 8, "tail": 1})
    optimizer: dict = field(default_factory=dict)
    transport: dict = field(default_factory=dict)
    example: dict = field(default_factory=dict)
    brackets: dict = field(default_factory=dict)
    matrix: str | None = None
    out: str = "out"
    threads: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict, lines: dict | None = None) -> "RunConfig":
        lines = lines or {}
        for key in data:
            if key not in TOP_KEYS:
                raise ConfigError(f"unknown key {key!r}", lines.get((key,)))
        for sec, allowed in SECTION_KEYS.items():
            val = data.get(sec)
            if sec == "system" and isinstance(val, str):
                continue
            if val is None:
                continue
            if not isinstance(val, dict):
                raise ConfigError(f"{sec!r} must be a table", lines.get((sec,)))
            for key in val:
                if key not in allowed:
                    raise ConfigError(f"unknown key {sec}.{key}", lines.get((sec, key)))
        if "seed" not in data:
            raise ConfigError("seed is mandatory")
        kw = dict(data)
        if isinstance(kw.get("system"), str):
            kw["system"] = {"name": kw["system"]}
        base = cls(seed=0)
        for sec in ("horizons", "grid"):
            merged = dict(getattr(base, sec))
            merged.update(kw.get(sec) or {})
            kw[sec] = merged
        cfg = cls(**kw)
        cfg.validate(lines)
        return cfg

    def validate(self, lines=None):
        lines = lines or {}
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer", lines.get(("seed",)))
        for key, val in self.optimizer.items():
            if key.endswith("tol") or key in ("penalty", "init_scale", "penalty_energy"):
                if not isinstance(val, (int, float)) or not val > 0:
                    raise ConfigError(f"optimizer.{key} must be positive", lines.get(("optimizer", key)))
        t = self.horizons.get("t_short", 1.0)
        if not isinstance(t, (int, float)) or not t > 0:
            raise ConfigError("horizons.t_short must be positive", lines.get(("horizons", "t_short")))
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError("threads must be >= 1", lines.get(("threads",)))

    def hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _key_lines(text: str) -> dict:
    """Map ``(key,)`` / ``(section, key)`` to 1-based line numbers."""
    out, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_\-]+)\s*\]$", line)
        if m:
            section = m.group(1)
            out.setdefault((section,), no)
            continue
        m = re.match(r"^([A-Za-z0-9_\-]+)\s*=", line)
        if m:
            key = (section, m.group(1)) if section else (m.group(1),)
            out.setdefault(key, no)
    return out


def _parse_value(text: str):
    import tomli

    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def _apply_env(data: dict, environ) -> dict:
    """``CONTROLKAM_SECTION__KEY=value`` overrides ``[section] key``; top-level keys use one part."""
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in name[len(ENV_PREFIX):].split("__")]
        target = data
        for p in parts[:-1]:
            if isinstance(target.get(p), str) and p == "system":
                target[p] = {"name": target[p]}
            target = target.setdefault(p, {})
        target[parts[-1]] = _parse_value(raw)
    return data


def load_config(path, environ=None, overrides: dict | None = None) -> RunConfig:
    """Read a TOML run configuration; unknown keys are errors reported with their line."""
    import tomli

    text = Path(path).read_text() if path is not None else ""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        m = re.search(r"line (\d+)", str(e))
        raise ConfigError(f"cannot parse config: {e}", int(m.group(1)) if m else None) from None
    data = _apply_env(data, os.environ if environ is None else environ)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    return RunConfig.from_dict(data, _key_lines(text))


# ---------------------------------------------------------------------------
# builders


def build_system(cfg: RunConfig):
    from .systems import (ControlAffineSystem, Lagrangian, StateSpace, VectorField, catalog_system,
                          parse_expression, state_symbols)

    desc = dict(cfg.system)
    if "name" in desc and len(desc) == 1:
        system, lag = catalog_system(desc["name"])
    else:
        if desc.get("space") == "torus":
            space = StateSpace.torus(*desc["periods"])
        elif desc.get("space") == "box":
            space = StateSpace.box(*[tuple(b) for b in desc["bounds"]])
        else:
            raise ConfigError("inline system needs space = 'torus' or 'box'")
        m = space.dimension
        syms = state_symbols(m)
        drift = VectorField([parse_expression(str(e), syms) for e in desc.get("drift", ["0"] * m)], m)
        ctrls = [VectorField([parse_expression(str(e), syms) for e in c], m) for c in desc["controls"]]
        system = ControlAffineSystem(space, drift, ctrls, desc.get("name", "inline"))
        lag = Lagrangian.pure_quadratic(m, len(ctrls))
    if cfg.lagrangian:
        L = dict(cfg.lagrangian)
        kind = L.pop("kind", "quadratic-with-state-weight")
        m, n = system.m, system.n
        if kind == "pure-quadratic":
            lag = Lagrangian.pure_quadratic(m, n)
        elif kind == "quadratic-with-state-weight":
            lag = Lagrangian.quadratic(m, n, A=L.get("A"), b=L.get("b", 0))
        elif kind == "general-expression":
            lag = Lagrangian.general(m, n, L["expr"], L.get("control_bound", 50.0))
        else:
            raise ConfigError(f"unknown lagrangian kind {kind!r}")
    return system, lag


def build_params(cfg: RunConfig):
    return OptimizerParams(seed=cfg.seed, **cfg.optimizer)


def build_grid(cfg: RunConfig, system):
    counts = list(cfg.grid.get("counts", [16]))
    if len(counts) == 1 and system.m > 1:
        counts = counts * system.m
    return system.space.uniform_grid(counts)


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append([float(v) for v in row])
    return np.array(rows, dtype=float)


def load_matrix(cfg: RunConfig, workdir: Path):
    """Cost matrix from ``matrix = "file.csv"`` or computed on the configured grid."""
    from .cost import CostMatrix, build_cost_matrix

    if cfg.matrix:
        E = read_matrix_csv(cfg.matrix)
        return CostMatrix.from_array(E, t=float(cfg.horizons.get("t_short", 1.0))), None, None
    system, lag = build_system(cfg)
    grid = build_grid(cfg, system)
    C = build_cost_matrix(system, lag, grid, float(cfg.horizons["t_short"]), build_params(cfg))
    return C, system, lag


# ---------------------------------------------------------------------------
# serialization


def fmt(x) -> str:
    """Shortest round-tripping decimal; ``inf`` for the sentinel."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, rows, header=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (int, float, np.floating, np.integer)) else v for v in row])
    path.write_bytes(buf.getvalue().encode())


def write_json(path: Path, obj):
    path.write_bytes((json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n").encode())


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if hasattr(o, "as_dict"):
        return o.as_dict()
    return str(o)


def _versions():
    import scipy
    import sympy

    return {"controlkam": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "sympy": sympy.__version__}


# ---------------------------------------------------------------------------
# subcommands


def cmd_cost(cfg, out: Path):
    C, system, _ = load_matrix(cfg, out)
    write_csv(out / "cost.csv", C.entries.tolist())
    sidecar = {"grid": C.grid, "grid_spec": cfg.grid, "t": C.t, "seed": cfg.seed,
               "optimizer": build_params(cfg).as_dict(), **C.meta}
    write_json(out / "cost.json", sidecar)
    return {"entries": C.size ** 2, "unreached": int(np.sum(~np.isfinite(C.entries)))}


def cmd_critical(cfg, out: Path):
    from .weakkam import critical_value_report

    C, _, _ = load_matrix(cfg, out)
    rep = critical_value_report(C, int(cfg.horizons.get("doublings", 8)))
    write_json(out / "critical.json", rep.as_dict())
    return {"h_karp": rep.h_karp, "spread": rep.spread}


def cmd_potential(cfg, out: Path):
    from .weakkam import min_mean_cycle, viscosity_residual, weak_kam_potential

    C, system, lag = load_matrix(cfg, out)
    ht, _ = min_mean_cycle(C)
    res = weak_kam_potential(C, ht, tail=int(cfg.horizons.get("tail", 1)))
    f = res.potential
    write_csv(out / "potential.csv", [list(p) + [v] for p, v in zip(f.grid, f.values)],
              header=[f"x{i + 1}" for i in range(f.grid.shape[1])] + ["value"])
    summary = {"h": ht / C.t, "fixed_point_residual": res.residual, "iterations": res.iterations}
    if system is not None:
        vmax, table, skipped = viscosity_residual(system, lag, f, ht / C.t)
        summary.update(viscosity_residual=vmax, skipped_fraction=skipped)
    write_json(out / "potential.json", summary)
    return summary


def cmd_transport(cfg, out: Path):
    from .transport import alpha_T, solve_ot, slackness_violation

    C, _, _ = load_matrix(cfg, out)
    n = C.size
    mu = np.asarray(cfg.transport.get("mu", np.full(n, 1.0 / n)), dtype=float)
    nu = np.asarray(cfg.transport.get("nu", np.full(n, 1.0 / n)), dtype=float)
    plan, primal, duals = solve_ot(C, mu, nu)
    write_csv(out / "plan.csv", plan.triplets(), header=["i", "j", "weight"])
    write_csv(out / "duals.csv", [[i, duals.f[i], duals.g[i]] for i in range(n)], header=["index", "f", "g"])
    alpha, stat = alpha_T(C)
    write_csv(out / "stationary_plan.csv", stat.triplets(), header=["i", "j", "weight"])
    summary = {"primal": primal, "dual": duals.value(mu, nu), "gap": abs(primal - duals.value(mu, nu)),
               "slackness": slackness_violation(C, plan, duals), "alpha": alpha}
    write_json(out / "transport.json", summary)
    return summary


def cmd_example(cfg, out: Path):
    from .example import demo_params, discontinuity_demo, lower_bound, phase_portrait

    ex = cfg.example
    k = int(ex.get("k", 3))
    p2 = float(ex.get("p2", -2.0))
    levels = ex.get("levels", [-0.25, 0.0, 0.25])
    pp = phase_portrait(k, p2, levels, int(ex.get("resolution", 256)))
    rows = [(lvl, x1, p1) for lvl, curves in pp.items() for c in curves for x1, p1 in c]
    write_csv(out / "portrait.csv", rows, header=["level", "x1", "p1"])
    area, escape, combined = lower_bound(k, p2)
    summary = {"k": k, "p2": p2, "area_term": area, "escape_term": escape, "combined": combined}
    deltas = ex.get("deltas")
    if deltas:
        over = {key: v for key, v in cfg.optimizer.items()}
        over.update(seed=cfg.seed, restarts=int(ex.get("restarts", 32)))
        if "penalty_energy" in ex:
            over["penalty_energy"] = float(ex["penalty_energy"])
        table = discontinuity_demo(k, deltas, demo_params(**over))
        write_csv(out / "demo.csv", [r[:4] for r in table], header=["k", "delta", "cost", "bound"])
        summary["demo"] = table
    write_json(out / "example.json", summary)
    return summary


def cmd_brackets(cfg, out: Path):
    from .geometry import bracket_field, bracket_words, chow_control, k_generating_check, verify_bracket_expansion

    system, _ = build_system(cfg)
    br = cfg.brackets
    point = np.asarray(br.get("point", [0.0] * system.m), dtype=float)
    kmax = int(br.get("max_order", 4))
    rows, order = [], None
    for k in range(1, kmax + 1):
        ok, _ = k_generating_check(system.controls, point, k)
        if ok and order is None:
            order = k
    for k in range(1, kmax + 1):
        for w in bracket_words(system.n, k):
            val = bracket_field(system.controls, w)(point)
            rows.append(["".join(map(str, w))] + [float(v) for v in val])
    write_csv(out / "brackets.csv", rows, header=["word"] + [f"x{i + 1}" for i in range(system.m)])
    summary = {"point": point, "generating_order": order, "expansions": []}
    if "word" in br:
        words = [tuple(int(i) for i in br["word"])]
    else:
        words = k_generating_check(system.controls, point, order)[1] if order else []
    exp_rows = []
    for word in words:
        val = bracket_field(system.controls, word)(point)
        f = br.get("test_function", f"x{int(np.argmax(np.abs(val))) + 1}")
        try:
            fit = verify_bracket_expansion(system.controls, word, chow_control(word, n=system.n), f, point)
        except IndeterminateExpansionError as e:
            summary["expansions"].append({"word": word, "error": str(e)})
            continue
        tag = "".join(map(str, word))
        exp_rows += [[tag, f, e, d, fit.slope, fit.coefficient] for e, d in zip(fit.epsilons, fit.deltas)]
        summary["expansions"].append({"word": word, "test_function": f, "slope": fit.slope,
                                      "coefficient": fit.coefficient, "expected": fit.expected_coefficient})
    write_csv(out / "expansion.csv", exp_rows,
              header=["word", "test_function", "epsilon", "endpoint_delta", "fitted_slope", "fitted_coefficient"])
    write_json(out / "brackets.json", summary)
    print(f"generating order at {point.tolist()}: {order}")
    return summary


def cmd_check(cfg, out: Path):
    from .systems import check_conditions

    system, lag = build_system(cfg)
    counts = list(cfg.grid.get("counts", [9]))
    if len(counts) == 1 and system.m > 1:
        counts = counts * system.m
    if system.space.kind == "box":
        counts = [c + 1 - c % 2 for c in counts]  # odd counts keep the centre line
    rep = check_conditions(system, lag, system.space.uniform_grid(counts))
    write_json(out / "conditions.json", rep.as_dict())
    lines = [f"system: {system.name}"]
    for name in ("growth", "state_derivative", "convexity", "generating"):
        st = getattr(rep, name)
        lines.append(f"{name}: {st.status}" + (f" ({st.detail})" if st.detail else ""))
    m = re.search(r"k(\d+)$", system.name or "")
    if rep.generating_order is not None:
        tag = f" (exponent {m.group(1)})" if m else ""
        lines.append(f"{rep.generating_order}-generating: true{tag}")
    else:
        lines.append("generating: false")
    lines.append("constants: " + ", ".join(f"{k}={v:.6g}" for k, v in rep.constants.items()))
    print("\n".join(lines))
    return rep.as_dict()


COMMANDS = {"cost": cmd_cost, "critical": cmd_critical, "potential": cmd_potential,
            "transport": cmd_transport, "example": cmd_example, "brackets": cmd_brackets,
            "check": cmd_check}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="controlkam", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=str, default=None)
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--out", type=str, default=None)
        s.add_argument("--threads", type=int, default=None)
        s.add_argument("--system", type=str, default=None, help="catalog system name")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None, environ=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    manifest = {"command": args.command, "versions": _versions()}
    out = Path(args.out or "out")
    code = 0
    try:
        over = {"seed": args.seed, "out": args.out, "threads": args.threads,
                "system": {"name": args.system} if args.system else None}
        cfg = load_config(args.config, environ, over)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest.update(config=cfg.to_dict(), config_hash=cfg.hash(), seed=cfg.seed)
        manifest["result"] = COMMANDS[args.command](cfg, out)
        manifest["status"] = "ok"
    except NUMERICAL_ERRORS as e:
        code = 3
        manifest.update(status="numerical-failure", error=f"{type(e).__name__}: {e}")
        if getattr(e, "trace", None):
            manifest["trace"] = e.trace
    except (ControlKamError, KeyError, ValueError, TypeError, OSError) as e:
        code = 2
        manifest.update(status="invalid-input", error=f"{type(e).__name__}: {e}")
    manifest["wall_time_s"] = time.perf_counter() - t0
    log.info("%s finished with exit code %d in %.2fs; artifacts in %s", args.command, code,
             manifest["wall_time_s"], out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "manifest.json", manifest)
    except OSError:  # pragma: no cover
        pass
    if code:
        print(manifest["error"], file=sys.stderr)
    return code


def main():  # pragma: no cover
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
