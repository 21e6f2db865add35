"""Config-driven scenario runs, comparisons, rate verification and sweeps.

A scenario is a JSON document with ``schema_version`` 1. Unknown fields are
rejected with the dotted path of the offending key. Every output file is
written atomically.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, ct, dt, event_triggered as et
from .graph import (
    GRAPH_A,
    GRAPH_B,
    GraphError,
    TopologySchedule,
    WeightedDigraph,
    is_weight_balanced,
    laplacian,
    random_connected_graph,
    spectrum,
)
from .signals import (
    SignalBundle,
    SignalError,
    Sum,
    Windowed,
    bundle_from_list,
    event_triggered_inputs,
    formation_targets,
    sampled_stochastic_bundle,
    signal_from_dict,
    uncommon_rate_bound,
)
from .trajectory import atomic_write, atomic_write_json

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MODES = ("ct", "dt", "et")


class ConfigError(ValueError):
    """Invalid scenario configuration."""


class CheckFailed(RuntimeError):
    """A requested bound check did not hold."""


def _check_keys(d, allowed, path, required=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{path}: unknown field(s) {extra}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ConfigError(f"{path}: missing required field(s) {missing}")


# ---------------------------------------------------------------------------
# config model

_TOP_KEYS = ("schema_version", "name", "mode", "graph", "schedule", "signals", "algorithm",
             "horizon", "dt", "steps", "period", "init", "events", "active", "seed",
             "tail_fraction", "description")

_ALG_KEYS = {
    "basic_dac": (),
    "pi_dac": ("alpha", "beta_scale"),
    "foi_dac": ("epsilon", "beta", "beta_scale"),
    "directed_pi_dac": ("alpha", "beta"),
    "sliding_basic": ("kp",),
    "sliding_two_hop": ("kp",),
    "sliding_one_hop": ("kp", "alpha"),
    "sliding_robust": ("kp",),
    "static": ("reinit_every", "scale"),
    "p": ("kI", "gains"),
    "accel_p": ("kI", "rho", "gains"),
    "pi": ("kI", "kp", "rho", "gains"),
    "accel_pi": ("kI", "kp", "rho", "gains"),
    "poly_cascade_zm": ("m", "scale", "contraction"),
    "poly_cascade_p": ("m", "scale", "contraction"),
    "feedforward": ("m", "scale", "contraction", "prefilter"),
    "euler_directed_pi": ("alpha", "beta", "delta"),
    "event_triggered_pi": ("alpha", "beta", "trigger"),
}
_ALG_REQUIRED = {
    "pi_dac": ("alpha",),
    "foi_dac": ("epsilon", "beta"),
    "directed_pi_dac": ("alpha", "beta"),
    "poly_cascade_zm": ("m",),
    "poly_cascade_p": ("m",),
    "feedforward": ("m", "prefilter"),
    "euler_directed_pi": ("alpha", "beta", "delta"),
    "event_triggered_pi": ("alpha", "beta", "trigger"),
}
_MODE_OF = {k: "ct" for k in ct.CT_VARIANTS} | {k: "dt" for k in dt.DT_VARIANTS} | {"event_triggered_pi": "et"}
_GAIN_NAMES = {"p": "P", "accel_p": "AccelP", "pi": "PI", "accel_pi": "AccelPI"}


@dataclass
class ScenarioConfig:
    """Validated scenario; ``raw`` is the canonical dictionary form."""

    raw: dict
    graph: WeightedDigraph | TopologySchedule = field(repr=False)
    signals: SignalBundle = field(repr=False)
    reference: SignalBundle = field(repr=False)
    events: list = field(repr=False)

    @property
    def mode(self) -> str:
        return self.raw["mode"]

    @property
    def name(self) -> str:
        return self.raw.get("name", "scenario")

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.raw == other.raw


def parse_graph(d, path="graph") -> WeightedDigraph:
    if isinstance(d, dict) and "builtin" in d:
        _check_keys(d, ("builtin", "n", "directed"), path)
        name = d["builtin"]
        if name == "graph_a":
            return GRAPH_A
        if name == "graph_b":
            return GRAPH_B
        if name == "ring":
            return WeightedDigraph.ring(int(d["n"]), bool(d.get("directed", False)))
        if name == "complete":
            return WeightedDigraph.complete(int(d["n"]))
        if name == "balanced_five":
            return et.balanced_five_agent_digraph()
        raise ConfigError(f"{path}.builtin: unknown graph {name!r}")
    _check_keys(d, ("n", "edges"), path, ("n", "edges"))
    try:
        return WeightedDigraph.from_dict(d)
    except GraphError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_signals(d, seed: int, path="signals") -> SignalBundle:
    try:
        if isinstance(d, list):
            return bundle_from_list(d, path)
        _check_keys(d, ("builtin", "n", "drift", "a", "b", "period"), path, ("builtin",))
        name = d["builtin"]
        if name == "formation":
            return formation_targets(int(d.get("n", 4)), bool(d.get("drift", True)))
        if name == "event_triggered":
            return event_triggered_inputs()
        if name == "sampled_stochastic":
            return sampled_stochastic_bundle(d["a"], d["b"], float(d["period"]), seed)
        raise ConfigError(f"{path}.builtin: unknown signal set {name!r}")
    except SignalError as exc:
        raise ConfigError(str(exc)) from exc
    except KeyError as exc:
        raise ConfigError(f"{path}: missing field {exc}") from exc


def parse_config(d: dict) -> ScenarioConfig:
    _check_keys(d, _TOP_KEYS, "config", ("schema_version", "mode", "signals", "algorithm"))
    if d["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"config.schema_version: unsupported version {d['schema_version']!r}")
    mode = d["mode"]
    if mode not in MODES:
        raise ConfigError(f"config.mode: must be one of {MODES}")
    if ("graph" in d) == ("schedule" in d):
        raise ConfigError("config: exactly one of 'graph' or 'schedule' is required")
    seed = int(d.get("seed", 0))

    if "graph" in d:
        topo = parse_graph(d["graph"])
    else:
        sd = d["schedule"]
        _check_keys(sd, ("segments", "dwell"), "config.schedule", ("segments",))
        starts, graphs = [], []
        for i, seg in enumerate(sd["segments"]):
            _check_keys(seg, ("start", "graph"), f"config.schedule.segments[{i}]", ("start", "graph"))
            starts.append(float(seg["start"]))
            graphs.append(parse_graph(seg["graph"], f"config.schedule.segments[{i}].graph"))
        try:
            topo = TopologySchedule(tuple(starts), tuple(graphs), sd.get("dwell"))
        except GraphError as exc:
            raise ConfigError(f"config.schedule: {exc}") from exc

    signals = parse_signals(d["signals"], seed, "config.signals")
    n = topo.n
    if signals.n != n:
        raise ConfigError(f"config.signals: {signals.n} signals for {n} agents")

    alg = d["algorithm"]
    if not isinstance(alg, dict) or "kind" not in alg:
        raise ConfigError("config.algorithm: expected an object with a 'kind' field")
    kind = alg["kind"]
    if kind not in _ALG_KEYS:
        raise ConfigError(f"config.algorithm.kind: unknown algorithm {kind!r}")
    _check_keys(alg, ("kind",) + _ALG_KEYS[kind], "config.algorithm", _ALG_REQUIRED.get(kind, ()))
    if _MODE_OF[kind] != mode:
        raise ConfigError(f"config.algorithm.kind: {kind!r} does not run in mode {mode!r}")

    if mode in ("ct", "et"):
        for key in ("horizon", "dt"):
            if key not in d:
                raise ConfigError(f"config: mode {mode!r} needs {key!r}")
            if not float(d[key]) > 0:
                raise ConfigError(f"config.{key}: must be positive")
    else:
        if "steps" not in d:
            raise ConfigError("config: mode 'dt' needs 'steps'")
        if int(d["steps"]) <= 0:
            raise ConfigError("config.steps: must be positive")

    reference = signals
    events = []
    for i, ev in enumerate(d.get("events", [])):
        p = f"config.events[{i}]"
        _check_keys(ev, ("time", "kind", "agent", "signal", "window", "graph", "init"), p, ("kind",))
        kindv = ev["kind"]
        if kindv == "perturb":
            a = ev.get("agent")
            if a is None or not 0 <= int(a) < n:
                raise ConfigError(f"{p}.agent: out of range")
            extra = parse_signals([ev["signal"]], seed, f"{p}.signal").signals[0]
            win = ev.get("window")
            if win is not None:
                windows = win if isinstance(win[0], list) else [win]
                extra = Sum(tuple(Windowed(extra, float(w0), float(w1)) for w0, w1 in windows))
            signals = signals.replace(int(a), Sum((signals.signals[int(a)], extra)))
            continue
        if "time" not in ev:
            raise ConfigError(f"{p}: missing required field(s) ['time']")
        if kindv in ("depart", "arrive"):
            if mode != "ct":
                raise ConfigError(f"{p}.kind: membership events are supported in mode 'ct' only")
            a = ev.get("agent")
            if a is None or not 0 <= int(a) < n:
                raise ConfigError(f"{p}.agent: out of range")
            if kindv == "arrive" and "signal" in ev:
                sig = parse_signals([ev["signal"]], seed, f"{p}.signal").signals[0]
                signals = signals.replace(int(a), sig)
                reference = reference.replace(int(a), sig)
            events.append(ct.Event(float(ev["time"]), kindv, int(a), None,
                                   {k: float(v) for k, v in ev.get("init", {}).items()}))
        elif kindv == "switch":
            if mode != "ct":
                raise ConfigError(f"{p}.kind: use 'schedule' for topology changes in mode {mode!r}")
            events.append(ct.Event(float(ev["time"]), "switch", None, parse_graph(ev["graph"], f"{p}.graph")))
        else:
            raise ConfigError(f"{p}.kind: unknown event kind {kindv!r}")

    if "active" in d:
        if mode != "ct":
            raise ConfigError("config.active: supported in mode 'ct' only")
        if any(not 0 <= int(i) < n for i in d["active"]):
            raise ConfigError("config.active: agent index out of range")
    tf = float(d.get("tail_fraction", 0.2))
    if not 0 < tf <= 1:
        raise ConfigError("config.tail_fraction: must lie in (0, 1]")
    return ScenarioConfig(copy.deepcopy(d), topo, signals, reference, events)


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a scenario file, falling back to the bundled golden scenarios by name."""
    p = Path(path)
    if not p.exists():
        golden = resources.files("dacsim") / "scenarios" / p.name
        if not golden.is_file():
            alt = resources.files("dacsim") / "scenarios" / (p.name + ".json")
            if not alt.is_file():
                raise ConfigError(f"no such config file: {path}")
            golden = alt
        text = golden.read_text()
    else:
        text = p.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw)


def golden_scenarios() -> list[str]:
    return sorted(p.name for p in (resources.files("dacsim") / "scenarios").iterdir() if p.name.endswith(".json"))


# ---------------------------------------------------------------------------
# building specs


def _first_graph(cfg: ScenarioConfig) -> WeightedDigraph:
    return cfg.graph.graphs[0] if isinstance(cfg.graph, TopologySchedule) else cfg.graph


def build_spec(cfg: ScenarioConfig):
    alg = {k: v for k, v in cfg.raw["algorithm"].items() if k != "kind"}
    kind = cfg.raw["algorithm"]["kind"]
    g = _first_graph(cfg)
    if kind in ct.CT_VARIANTS:
        return ct.CT_VARIANTS[kind](**{k: float(v) for k, v in alg.items()})
    if kind == "event_triggered_pi":
        trig = alg.get("trigger", {})
        _check_keys(trig, ("law", "eps", "eps_scaled"), "config.algorithm.trigger", ("law",))
        d_out = g.out_degree()
        if "eps" in trig:
            eps = tuple(float(e) for e in trig["eps"])
        elif "eps_scaled" in trig:
            eps = tuple(2 * float(trig["eps_scaled"]) * np.sqrt(d_out))
        else:
            raise ConfigError("config.algorithm.trigger: give 'eps' or 'eps_scaled'")
        law = {"absolute": et.AbsoluteTrigger, "relative": et.RelativeTrigger}.get(trig["law"])
        if law is None:
            raise ConfigError("config.algorithm.trigger.law: must be 'absolute' or 'relative'")
        return et.EventTriggeredPi(float(alg["alpha"]), float(alg["beta"]), law(eps))
    if kind in _GAIN_NAMES:
        if alg.get("gains") == "optimal":
            lam = np.sort(np.linalg.eigvalsh(laplacian(g)))
            rep = dt.gains(_GAIN_NAMES[kind], lam[1], lam[-1])
            alg = {"kI": rep.kI, "kp": rep.kp, "rho": rep.rho}
        fields = {"p": ("kI",), "accel_p": ("kI", "rho"), "pi": ("kI", "kp", "rho"),
                  "accel_pi": ("kI", "kp", "rho")}[kind]
        missing = [f for f in fields if f not in alg]
        if missing:
            raise ConfigError(f"config.algorithm: missing {missing} (or set gains='optimal')")
        return dt.DT_VARIANTS[kind](**{f: float(alg[f]) for f in fields})
    if kind in ("poly_cascade_zm", "poly_cascade_p", "feedforward"):
        scale = alg.get("scale")
        if "contraction" in alg:
            scale = dt.scale_for_contraction(laplacian(g), float(alg["contraction"]))
        kw = {"m": int(alg["m"]), "scale": None if scale is None else float(scale)}
        if kind == "feedforward":
            pf = alg.get("prefilter", {})
            _check_keys(pf, ("theta_c", "q", "tol", "pole"), "config.algorithm.prefilter", ("theta_c",))
            kw["prefilter"] = dt.design_prefilter(kw["m"], float(pf["theta_c"]), int(pf.get("q", 3)),
                                                  float(pf.get("tol", 1e-2)), pf.get("pole"))
        return dt.DT_VARIANTS[kind](**kw)
    if kind == "static":
        return dt.StaticConsensus(alg.get("reinit_every"), alg.get("scale"))
    if kind == "euler_directed_pi":
        return dt.EulerDirectedPi(float(alg["alpha"]), float(alg["beta"]), float(alg["delta"]))
    raise ConfigError(f"config.algorithm.kind: {kind!r} not buildable")


# ---------------------------------------------------------------------------
# running


@dataclass
class RunResult:
    trajectory: object
    metrics: dict
    event_log: object = None
    paths: dict = field(default_factory=dict)


def simulate_config(cfg: ScenarioConfig):
    spec = build_spec(cfg)
    raw = cfg.raw
    init = raw.get("init")
    if cfg.mode == "ct":
        traj = ct.integrate(spec, cfg.graph, cfg.signals, float(raw["horizon"]), float(raw["dt"]),
                            init=init, events=cfg.events, reference=cfg.reference,
                            active=raw.get("active"))
        return spec, traj, None
    if cfg.mode == "dt":
        traj = dt.simulate(spec, cfg.graph, cfg.signals, int(raw["steps"]), float(raw.get("period", 1.0)),
                           init=init, reference=cfg.reference)
        return spec, traj, None
    traj, elog = et.simulate_et(spec, _first_graph(cfg), cfg.signals, float(raw["horizon"]),
                                float(raw["dt"]), init=init)
    traj.u_avg = cfg.reference.values(traj.t).mean(axis=1)
    return spec, traj, elog


def bound_check(cfg: ScenarioConfig, spec, metrics: dict) -> dict | None:
    """Compare the tail error with the analytic bound where one applies."""
    if cfg.events or isinstance(cfg.graph, TopologySchedule):
        return {"applicable": False, "reason": "topology or membership changes during the run"}
    g = cfg.graph
    horizon = float(cfg.raw.get("horizon", 0.0))
    init = cfg.raw.get("init") or {}
    zero_sum = {ct.BasicDac: "p", ct.DirectedPiDac: "q"}.get(type(spec))
    if zero_sum and abs(float(np.sum(np.broadcast_to(init.get(zero_sum, 0.0), (g.n,))))) > 1e-12:
        return {"applicable": False, "reason": f"initial {zero_sum} does not sum to zero"}
    if cfg.mode == "ct" and isinstance(spec, (ct.BasicDac, ct.DirectedPiDac, ct.PiDac)):
        gamma = uncommon_rate_bound(cfg.signals, horizon, 1e-3)
        bound = ct.ultimate_bound(spec, g, gamma)
    elif cfg.mode == "et":
        gamma = uncommon_rate_bound(cfg.signals, horizon, 1e-3)
        bound = et.et_error_bound(g, spec.beta, spec.trigger.eps, gamma)
    else:
        return {"applicable": False, "reason": "no analytic bound for this algorithm"}
    measured = metrics["tail_sup_error"]
    return {"applicable": True, "gamma": gamma, "bound": float(bound), "measured": measured,
            "holds": bool(measured <= bound)}


def run(cfg: ScenarioConfig, out_dir: str | Path, check_bounds: bool = False,
        write_trajectory: bool = True) -> RunResult:
    out = Path(out_dir)
    spec, traj, elog = simulate_config(cfg)
    tf = float(cfg.raw.get("tail_fraction", 0.2))
    metrics = {"name": cfg.name, "mode": cfg.mode, "algorithm": cfg.raw["algorithm"]["kind"],
               "samples": int(len(traj.t))}
    metrics.update(analysis.summarize(traj, tf))
    if cfg.mode == "ct":
        metrics["conservation"] = {
            name: {"initial": float(series[0]), "max_drift": float(np.max(np.abs(series - series[0])))}
            for name, series in ((q, ct.conservation_residual(traj, q)) for q in ("x-u",) + tuple(traj.states))
        }
    if "kp" in traj.meta:
        metrics["kp"] = traj.meta["kp"]
    if "scale" in traj.meta:
        metrics["laplacian_scale"] = traj.meta["scale"]
    if elog is not None:
        metrics["event_counts"] = elog.counts
        metrics["min_interevent"] = elog.min_interevent
    if check_bounds:
        metrics["bound_check"] = bound_check(cfg, spec, metrics)

    paths = {}
    paths["config"] = atomic_write_json(out / "config.json", cfg.to_dict())
    if write_trajectory:
        paths["trajectory"] = traj.write_csv(out / "trajectory.csv")
    if elog is not None:
        paths["events"] = atomic_write(out / "events.json", elog.to_json() + "\n")
    paths["metrics"] = atomic_write_json(out / "metrics.json", metrics)
    bc = metrics.get("bound_check")
    if check_bounds and bc and bc.get("applicable") and not bc["holds"]:
        log.warning("bound check failed: measured %.6g > bound %.6g", bc["measured"], bc["bound"])
    return RunResult(traj, metrics, elog, {k: str(v) for k, v in paths.items()})


def checks_passed(result: RunResult) -> bool:
    bc = result.metrics.get("bound_check")
    return not (bc and bc.get("applicable") and not bc["holds"])


# ---------------------------------------------------------------------------
# comparison and sweeps

COMPARE_METRICS = ("time_avg_error", "tail_sup_error")


def compare(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig, out_dir: str | Path) -> dict:
    """Run two scenarios and report, per metric, which one has the smaller error."""
    ta = cfg_a.raw.get("horizon", cfg_a.raw.get("steps", 0) * cfg_a.raw.get("period", 1.0))
    tb = cfg_b.raw.get("horizon", cfg_b.raw.get("steps", 0) * cfg_b.raw.get("period", 1.0))
    if not math.isclose(ta, tb, rel_tol=1e-9):
        raise ConfigError(f"compare needs equal horizons, got {ta} and {tb}")
    out = Path(out_dir)
    ra = run(cfg_a, out / "a")
    rb = run(cfg_b, out / "b")
    report = {"a": cfg_a.name, "b": cfg_b.name, "metrics": {}}
    for m in COMPARE_METRICS:
        va, vb = ra.metrics[m], rb.metrics[m]
        if math.isclose(va, vb, rel_tol=1e-12, abs_tol=0.0):
            winner = "tie"
        else:
            winner = "a" if va < vb else "b"
        report["metrics"][m] = {"a": va, "b": vb, "winner": winner}
    atomic_write_json(out / "compare.json", report)
    return report


def _set_path(d: dict, dotted: str, value):
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        if k not in cur or not isinstance(cur[k], dict):
            raise ConfigError(f"sweep parameter {dotted!r}: no object at {k!r}")
        cur = cur[k]
    if keys[-1] not in cur and keys[-1] not in _ALG_KEYS.get(cur.get("kind"), ()) + _TOP_KEYS:
        raise ConfigError(f"sweep parameter {dotted!r}: unknown field")
    cur[keys[-1]] = value


def _sweep_point(args):
    raw, out_dir = args
    res = run(parse_config(raw), out_dir, check_bounds=True)
    return {k: res.metrics.get(k) for k in ("tail_sup_error", "time_avg_error", "event_counts", "bound_check")}


def sweep(cfg: ScenarioConfig, params: dict[str, list], out_dir: str | Path, jobs: int = 1) -> dict:
    """Cartesian sweep over dotted config paths; one run directory per point."""
    out = Path(out_dir)
    names = list(params)
    grid = [[]]
    for name in names:
        grid = [g + [v] for g in grid for v in params[name]]
    tasks = []
    for i, combo in enumerate(grid):
        raw = cfg.to_dict()
        for name, v in zip(names, combo):
            _set_path(raw, name, v)
        parse_config(raw)
        tasks.append((raw, str(out / f"point_{i:03d}")))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    summary = {"parameters": names,
               "points": [{"values": dict(zip(names, combo)), **res} for combo, res in zip(grid, results)]}
    atomic_write_json(out / "sweep.json", summary)
    return summary


# ---------------------------------------------------------------------------
# rate verification

_SPEC_OF = {
    "P": lambda r: dt.P(r.kI),
    "AccelP": lambda r: dt.AccelP(r.kI, r.rho),
    "PI": lambda r: dt.PI(r.kI, r.kp, r.rho),
    "AccelPI": lambda r: dt.AccelPI(r.kI, r.kp, r.rho),
}
VARIANTS = tuple(_SPEC_OF)


def dt_spec_from_gains(rep: dt.GainReport):
    return _SPEC_OF[rep.variant](rep)


def rate_table(lam_r: np.ndarray) -> np.ndarray:
    return np.array([[dt.optimal_rho(v, x) for v in VARIANTS] for x in lam_r])


def verify_rates(out_dir: str | Path | None = None, n_graphs: int = 50, seed: int = 0,
                 graphs: list[WeightedDigraph] | None = None, sweep_points: int = 200,
                 tol: float = 1e-8) -> dict:
    """Check closed-loop radii against the optimal-rate formulas on a graph suite."""
    rng = np.random.default_rng(seed)
    if graphs is None:
        graphs = [random_connected_graph(int(rng.integers(4, 13)), rng) for _ in range(n_graphs)] + [GRAPH_B]
    rows = []
    worst = 0.0
    for gi, g in enumerate(graphs):
        if not (g.is_undirected() or is_weight_balanced(g)):
            raise ConfigError(f"graph {gi} is neither undirected nor weight-balanced")
        _, lam_hat = spectrum(g)
        L = laplacian(g)
        for v in VARIANTS:
            rep = dt.gains(v, lam_hat[1], lam_hat[-1])
            radius = dt.closed_loop_disagreement_radius(dt_spec_from_gains(rep), L)
            diff = abs(radius - rep.rho)
            worst = max(worst, diff)
            rows.append({"graph": gi, "n": g.n, "variant": v, "rho": rep.rho, "radius": radius, "abs_diff": diff})
    lam_r = np.linspace(1.0 / sweep_points, 1.0, sweep_points)
    table = rate_table(lam_r)
    report = {"graphs": len(graphs), "seed": seed, "tolerance": tol, "max_abs_diff": worst,
              "passed": bool(worst <= tol), "rows": rows}
    if out_dir is not None:
        out = Path(out_dir)
        atomic_write_json(out / "verify_rates.json", report)
        lines = ["lambda_r," + ",".join(f"rho_{v}" for v in VARIANTS)]
        lines += [f"{x:.17g}," + ",".join(f"{r:.17g}" for r in row) for x, row in zip(lam_r, table)]
        atomic_write(out / "rate_curves.csv", "\n".join(lines) + "\n")
    return report
