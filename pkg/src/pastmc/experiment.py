"""Config-driven comparison runs: plain vs resample-from-past vs auxiliary.

A config is a JSON document; see ``DEFAULTS`` for every key. Each requested
variant writes its trace CSV(s) and per-variable diagnostics summaries into
the output directory, next to ``config_echo.json``, which is enough to rerun
the experiment bit-for-bit.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .auxiliary import AuxConfig, EnergyPartition, check_weights, prerun_partition, run_importance_resampling
from .core import RNG_ALGORITHM, ChainTrace, LogDensity, RngStream, read_trace_csv, run_chain, write_trace_csv
from .diagnostics import inefficiency, summary, write_summary
from .kernels import RwmKernel
from .models import FiniteStateModel, GaussianMixture, NormalToy, SvModel, SvPriors, load_returns_csv, sv_simulate
from .models.finite import metropolis_matrix, ring_proposal
from .models.sv import sv_gibbs_kernel
from .resampling import ResampleSchedule, run_with_resampling

OUTPUT_ROOT_ENV = "PASTMC_OUTPUT_ROOT"
VARIANTS = ("plain", "past", "aux", "equienergy")

DEFAULTS: dict[str, Any] = {
    "model": {"id": "normal_toy"},
    "variants": ["plain", "past"],
    "n_steps": 25000,
    "burn_in": 5000,
    "schedule": {"b2": 1.0, "alpha": 1.3},
    "kernel": {"sigma": 0.1},
    "aux": {
        "theta": 0.9,
        "temper": 2.0,
        "sigma": None,
        "aux_burn_in": 0,
        "partition": {"rings": 5, "pre_run": 10000},
    },
    "x0": None,
    "x0_aux": None,
    "seed": 1,
    "rho": None,
    "monitor": None,
    "output_dir": "pastmc-out",
    "diagnostics": {"bandwidth": 5000, "window": None, "variables": None},
}


class ConfigError(ValueError):
    pass


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_dotted(cfg: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted}: {k} is not an object")
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str | Path, overrides: list[str] = ()) -> dict:
    try:
        user = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for o in overrides:
        set_dotted(user, *parse_override(o))
    return resolve_config(user)


def resolve_config(user: dict) -> dict:
    cfg = deep_merge(DEFAULTS, user)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    variants = cfg["variants"]
    if isinstance(variants, str):
        variants = cfg["variants"] = [variants]
    need(variants and all(v in VARIANTS for v in variants), f"variants must be drawn from {VARIANTS}, got {variants}")
    need(len(set(variants)) == len(variants), "variants must not repeat")
    need(isinstance(cfg["n_steps"], int) and cfg["n_steps"] >= 1, "n_steps must be a positive integer")
    need(isinstance(cfg["burn_in"], int) and cfg["burn_in"] >= 0, "burn_in must be a non-negative integer")
    need(isinstance(cfg["seed"], int) and 0 <= cfg["seed"] < 2**64, "seed must be a 64-bit unsigned integer")
    sch = cfg["schedule"]
    need(sch["b2"] > 0 and sch["alpha"] >= 1, "schedule needs b2 > 0 and alpha >= 1")
    aux = cfg["aux"]
    need(0.0 <= aux["theta"] <= 1.0, "aux.theta must lie in [0, 1]")
    need(aux["temper"] >= 1, "aux.temper must be >= 1")
    need(cfg["model"].get("id") in MODEL_BUILDERS, f"unknown model id {cfg['model'].get('id')!r}")
    if cfg["model"]["id"] == "sv" and any(v in ("aux", "equienergy") for v in variants):
        need(aux["temper"] == 1, "sv auxiliary chain is a copy of the Gibbs sampler: aux.temper must be 1")
    rho = cfg["rho"]
    need(rho is None or 0 < rho < 1, "rho must lie in (0, 1) when given")
    need(cfg["diagnostics"]["bandwidth"] >= 2, "diagnostics.bandwidth must be >= 2")


# -- models -------------------------------------------------------------------


@dataclass
class Setup:
    """Everything a variant needs, built from a resolved config."""

    target: LogDensity
    kernel: Any
    aux_target: LogDensity
    aux_kernel: Any
    x0: np.ndarray
    x0_aux: np.ndarray
    monitor: list[int] | None
    variables: dict[str, tuple[int, Callable[[np.ndarray], np.ndarray]]]
    echo: dict


def _identity(v):
    return v


def _build_normal_toy(cfg, rng):
    h = NormalToy()
    sigma = cfg["kernel"]["sigma"]
    T = cfg["aux"]["temper"]
    h0 = LogDensity(1, lambda x: -0.5 * float(x[0]) ** 2 / T, name=f"normal_toy(T={T:g})")
    aux_sigma = cfg["aux"]["sigma"] or sigma * math.sqrt(T)
    x0 = cfg["x0"] or [0.0]
    return Setup(h, RwmKernel(h, sigma), h0, RwmKernel(h0, aux_sigma), np.array(x0, float),
                 np.array(cfg["x0_aux"] or x0, float), None, {"x": (0, _identity)}, {})


def _build_mixture(cfg, rng):
    m = cfg["model"]
    h = GaussianMixture(m.get("weights", [0.3, 0.7]), m.get("means", [-4.0, 4.0]), m.get("sds", [0.5, 0.5]))
    h0 = h.tempered(cfg["aux"]["temper"])
    sigma = cfg["kernel"]["sigma"]
    x0 = cfg["x0"] or [float(h.means[-1])]
    return Setup(h, RwmKernel(h, sigma), h0, RwmKernel(h0, cfg["aux"]["sigma"] or 4.0), np.array(x0, float),
                 np.array(cfg["x0_aux"] or x0, float), None, {"x": (0, _identity)}, {})


def _build_finite(cfg, rng):
    m = cfg["model"]
    if "P" in m:
        model = FiniteStateModel(m["P"])
    else:
        target = np.asarray(m.get("target", [1, 2, 3, 4, 5, 6]), dtype=float)
        target = target / target.sum()
        model = FiniteStateModel(metropolis_matrix(target, ring_proposal(target.size, m.get("lazy", 0.0))))
    T = cfg["aux"]["temper"]
    aux_pi = model.pi ** (1.0 / T)
    aux_pi /= aux_pi.sum()
    n = model.n_states
    aux_model = FiniteStateModel(metropolis_matrix(aux_pi, (np.ones((n, n)) - np.eye(n)) / (n - 1)))
    x0 = cfg["x0"] or [0.0]
    echo = {"stationary": model.pi.tolist()}
    return Setup(model.log_density(), model, model.log_density(T), aux_model, np.array(x0, float),
                 np.array(cfg["x0_aux"] or x0, float), None, {"state": (0, _identity)}, echo)


def _build_sv(cfg, rng):
    m = cfg["model"]
    priors = SvPriors(**m.get("priors", {}))
    if "returns_csv" in m:
        y = load_returns_csv(m["returns_csv"])
        data_echo = {"returns_csv": str(m["returns_csv"]), "T_len": int(y.size)}
    else:
        sim = {"T_len": 500, "mu": -0.7, "phi": 0.97, "sigma": 0.15, "seed": 0}
        sim.update(m.get("simulate", {}))
        y, _ = sv_simulate(sim["T_len"], sim["mu"], sim["phi"], sim["sigma"], RngStream(sim["seed"]))
        data_echo = {"simulate": sim}
    model = SvModel(y, priors, m.get("phi_step", 2.4))
    h = model.target()
    x0 = np.array(cfg["x0"], float) if cfg["x0"] else model.initial_state()
    x0_aux = np.array(cfg["x0_aux"], float) if cfg["x0_aux"] else x0.copy()
    variables = {"sigma": (0, _identity), "phi": (1, _identity), "beta": (2, lambda mu: np.exp(mu / 2.0))}
    monitor = cfg["monitor"] if cfg["monitor"] is not None else [0, 1, 2]
    echo = {"data": data_echo, "priors": priors.as_dict()}
    # aux chain is an independent copy of the Gibbs sampler
    return Setup(h, sv_gibbs_kernel(model), h, sv_gibbs_kernel(model), x0, x0_aux, monitor, variables, echo)


MODEL_BUILDERS = {
    "normal_toy": _build_normal_toy,
    "mixture": _build_mixture,
    "finite": _build_finite,
    "sv": _build_sv,
}


def build_setup(cfg: dict) -> Setup:
    setup = MODEL_BUILDERS[cfg["model"]["id"]](cfg, RngStream(cfg["seed"]))
    if cfg["monitor"] is not None:
        setup.monitor = list(cfg["monitor"])
    return setup


def aux_config(cfg: dict, setup: Setup, variant: str, rng: RngStream) -> AuxConfig:
    aux = cfg["aux"]
    partition = None
    if variant == "equienergy":
        part_cfg = aux["partition"]
        if part_cfg.get("boundaries"):
            partition = EnergyPartition(part_cfg["boundaries"])
        else:
            partition = prerun_partition(setup.aux_kernel, setup.target, setup.x0_aux, rng,
                                         part_cfg.get("pre_run", 10000), part_cfg.get("rings", 5))
    return AuxConfig(
        theta=aux["theta"],
        main_kernel=setup.kernel,
        aux_kernel=setup.aux_kernel,
        target=setup.target,
        aux_target=setup.aux_target,
        variant="importance" if variant == "aux" else "equi_energy",
        partition=partition,
        aux_burn_in=aux["aux_burn_in"],
    )


# -- running ------------------------------------------------------------------


def output_dir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def config_echo(cfg: dict) -> dict:
    return {"config": cfg, "rng": RNG_ALGORITHM, "version": __version__}


def run_variant(cfg: dict, setup: Setup, variant: str) -> dict[str, ChainTrace]:
    rng = RngStream(cfg["seed"])
    n = cfg["n_steps"]
    if variant == "plain":
        return {"plain": run_chain(setup.kernel, n, setup.x0, rng, setup.monitor)}
    if variant == "past":
        s = ResampleSchedule(cfg["burn_in"], cfg["schedule"]["b2"], cfg["schedule"]["alpha"])
        return {"past": run_with_resampling(setup.kernel, s, n, setup.x0, rng, setup.monitor, cfg["rho"])}
    acfg = aux_config(cfg, setup, variant, rng)
    main, aux = run_importance_resampling(acfg, n, setup.x0, setup.x0_aux, rng, setup.monitor)
    if acfg.partition is not None:
        main.config_echo["partition"] = acfg.partition.boundaries.tolist()
    return {f"{variant}_main": main, f"{variant}_aux": aux}


def trace_variables(trace: ChainTrace, setup_vars: dict, window: int | None = None) -> dict[str, np.ndarray]:
    out = {}
    for name, (coord, fn) in setup_vars.items():
        if coord in trace.columns:
            series = fn(trace.column(coord))
            out[name] = series[-window:] if window else series
    return out


def diagnostics_window(cfg: dict) -> int:
    w = cfg["diagnostics"]["window"]
    if w:
        return min(int(w), cfg["n_steps"])
    B = cfg["burn_in"]
    return cfg["n_steps"] - B if B < cfg["n_steps"] else cfg["n_steps"]


def effective_bandwidth(cfg: dict, n: int) -> int:
    return max(2, min(int(cfg["diagnostics"]["bandwidth"]), n - 1))


def run_experiment(cfg: dict, emit_plotdata: bool = False, plot: bool = False) -> Path:
    """Run every requested variant and write outputs; return the output directory."""
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    (out / "config_echo.json").write_text(json.dumps(config_echo(cfg), indent=2, sort_keys=True) + "\n")
    setup = build_setup(cfg)
    window = diagnostics_window(cfg)
    status: dict[str, Any] = {"status": "running", "variants": {}}
    chains: dict[str, dict[str, np.ndarray]] = {}
    try:
        for variant in cfg["variants"]:
            for name, trace in run_variant(cfg, setup, variant).items():
                write_trace_csv(trace, out / f"{name}.csv")
                status["variants"][name] = {
                    "n_steps": trace.n_steps,
                    "accept_count": trace.accept_count,
                    "resample_events": len(trace.resample_events),
                    "first_resample": trace.resample_events[0] if trace.resample_events else None,
                    **{k: v for k, v in trace.config_echo.items() if k not in ("rng",)},
                }
                if name.endswith("_aux"):
                    continue
                series = trace_variables(trace, _selected(cfg, setup), window)
                chains[name] = series
                for var, f in series.items():
                    rec = summary(f, var, effective_bandwidth(cfg, f.size))
                    rec["sampler"] = name
                    write_summary(rec, out / f"summary_{name}_{var}.json")
    except Exception as e:
        status.update(status="failed", error=f"{type(e).__name__}: {e}")
        (out / "FAILED").write_text(status["error"] + "\n")
        (out / "run_status.json").write_text(json.dumps(status, indent=2, sort_keys=True) + "\n")
        raise
    if len(chains) >= 2:
        table = compare_report(list(chains.items()), None, cfg["diagnostics"]["bandwidth"])
        write_table(table, out / "comparison.csv", out / "comparison.txt")
    if emit_plotdata:
        from .plotting import write_plotdata
        write_plotdata(chains, out / "plotdata")
    if plot:
        from .plotting import render_figures
        render_figures(chains, out / "figures")
    status["status"] = "ok"
    (out / "run_status.json").write_text(json.dumps(status, indent=2, sort_keys=True) + "\n")
    return out


def _selected(cfg: dict, setup: Setup) -> dict:
    wanted = cfg["diagnostics"]["variables"]
    if not wanted:
        return setup.variables
    missing = [v for v in wanted if v not in setup.variables]
    if missing:
        raise ConfigError(f"unknown variables {missing}; model provides {list(setup.variables)}")
    return {k: setup.variables[k] for k in wanted}


def weight_report(cfg: dict, n: int = 10_000) -> dict:
    setup = build_setup(cfg)
    return check_weights(setup.aux_kernel, setup.target, setup.aux_target, setup.x0_aux, RngStream(cfg["seed"]), n)


# -- comparison ---------------------------------------------------------------


@dataclass
class ComparisonRow:
    sampler: str
    variable: str
    n: int
    i_hat: float
    ratio: float


def compare_report(traces, variables=None, bandwidth: int = 5000) -> list[ComparisonRow]:
    """Inefficiency of each sampler on each variable, with ratio to the first sampler.

    ``traces`` is a sequence of ``(sampler_name, {variable: series})`` pairs.
    """
    traces = list(traces)
    if len(traces) < 2:
        raise ValueError("comparison needs at least two traces")
    names = [set(v) for _, v in traces]
    if variables is None:
        variables = list(traces[0][1])
    for (sampler, vs), have in zip(traces, names):
        missing = [v for v in variables if v not in have]
        if missing:
            raise ValueError(f"sampler {sampler!r} lacks variables {missing}")
    base = {}
    rows = []
    for i, (sampler, vs) in enumerate(traces):
        for var in variables:
            f = np.asarray(vs[var], dtype=float)
            val = inefficiency(f, max(2, min(bandwidth, f.size - 1))).i_hat
            if i == 0:
                base[var] = val
            rows.append(ComparisonRow(sampler, var, int(f.size), val, val / base[var]))
    return rows


def table_csv(rows: list[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sampler", "variable", "n", "i_hat", "ratio_to_baseline"])
    for r in rows:
        w.writerow([r.sampler, r.variable, r.n, repr(r.i_hat), repr(r.ratio)])
    return buf.getvalue()


def table_text(rows: list[ComparisonRow]) -> str:
    head = ("sampler", "variable", "n", "I_hat", "ratio")
    body = [(r.sampler, r.variable, str(r.n), f"{r.i_hat:.2f}", f"{r.ratio:.3f}") for r in rows]
    widths = [max(len(x[i]) for x in [head] + body) for i in range(len(head))]
    lines = ["  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in [head] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_table(rows: list[ComparisonRow], csv_path: Path, txt_path: Path) -> None:
    csv_path.write_text(table_csv(rows))
    txt_path.write_text(table_text(rows))


def load_run(directory: str | Path) -> list[tuple[str, dict[str, np.ndarray]]]:
    """Reload the main-chain traces of a finished run as comparison inputs."""
    d = Path(directory)
    try:
        echo = json.loads((d / "config_echo.json").read_text())
    except FileNotFoundError:
        raise ConfigError(f"{d} has no config_echo.json") from None
    cfg = echo["config"]
    setup_vars = _selected(cfg, build_setup(cfg))
    window = diagnostics_window(cfg)
    out = []
    for variant in cfg["variants"]:
        name = variant if variant in ("plain", "past") else f"{variant}_main"
        path = d / f"{name}.csv"
        if not path.exists():
            raise ConfigError(f"{path} missing")
        trace = read_trace_csv(path)
        out.append((f"{d.name}/{name}", trace_variables(trace, setup_vars, window)))
    return out
