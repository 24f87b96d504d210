"""
Experiment harness: build an instance and a communication schedule from a
JSON config, run a list of algorithms on it and write one CSV trace per
algorithm, a ``summary.json`` and a ``convergence.svg``.

Example config::

    {
      "name": "dsm-desk",
      "instance": {"generator": "dsm", "params": {"N": 20, "T": 24}, "seed": 0},
      "schedule": {"kind": "static", "graph": "geometric", "seed": 0},
      "algorithms": [
        {"tag": "pdp", "solver": {"step_a": 0.1, "rho1": 0.001, "rho2": 0.001, "max_iters": 500}},
        {"tag": "pd",  "solver": {"step_a": 15, "max_iters": 500}},
        {"tag": "dds", "solver": {"step_a": 0.05, "max_iters": 500}}
      ],
      "output_dir": "out/dsm",
      "oracle": true
    }

A run is a pure function of the config contents and the seeds in it.
"""

import copy
import json
import os
import warnings
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from ..baselines import centralized_run, dds_run
from ..errors import ConfigError, ConfigWarning
from ..families import problem_from_dict, random_qp
from ..network import (CyclicEdgeSchedule, RandomEdgeSchedule, StaticSchedule, check_assumption4,
                       complete_graph, erdos_renyi_graph, path_graph, random_geometric_graph, ring_graph)
from ..solver import SolverConfig, run, theorem_warnings
from . import dsm, sparse
from .svg import line_chart

ALGORITHMS = ("pdp", "pd", "dds", "centralized_pdp", "centralized_pd")

_SOLVER_PROPS = {
    "step_a": {"type": "number", "exclusiveMinimum": 0},
    "step_b": {"type": "number", "minimum": 0},
    "rho1": {"type": "number", "minimum": 0},
    "rho2": {"type": "number", "minimum": 0},
    "d_lambda": {"type": ["number", "null"], "exclusiveMinimum": 0},
    "mode": {"enum": ["gradient", "proximal", None]},
    "max_iters": {"type": "integer", "minimum": 1},
    "average_kind": {"enum": ["weighted", "uniform"]},
    "record_centralized_diagnostics": {"type": "boolean"},
    "rng_seed": {"type": "integer"},
    "early_stop_tol": {"type": ["number", "null"], "exclusiveMinimum": 0},
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["instance", "algorithms"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "instance": {
            "type": "object",
            "oneOf": [
                {"required": ["generator"], "not": {"required": ["file"]}},
                {"required": ["file"], "not": {"required": ["generator"]}},
            ],
            "properties": {
                "generator": {"enum": ["dsm", "sparse", "qp"]},
                "params": {"type": "object"},
                "seed": {"type": "integer"},
                "file": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["static", "random", "cyclic"]},
                "graph": {"enum": ["geometric", "ring", "path", "complete", "erdos_renyi", "custom"]},
                "adjacency": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
                "seed": {"type": "integer"},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "edge_prob": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "Q": {"type": "integer", "minimum": 1},
            },
        },
        "algorithms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["tag"],
                "additionalProperties": False,
                "properties": {
                    "tag": {"type": "string"},
                    "label": {"type": "string"},
                    "solver": {"type": "object", "properties": _SOLVER_PROPS, "additionalProperties": False},
                },
            },
        },
        "output_dir": {"type": "string"},
        "plot": {"type": "boolean"},
        "log_gap": {"type": "boolean"},
        "oracle": {"type": "boolean"},
        "workers": {"type": "integer", "minimum": 1},
    },
}


@dataclass
class ExperimentConfig:
    instance: dict
    algorithms: list
    schedule: dict = field(default_factory=lambda: {"kind": "static", "graph": "geometric"})
    output_dir: str = "out"
    plot: bool = True
    log_gap: bool = False
    oracle: bool = False
    workers: int = 1
    name: str = "experiment"
    base_dir: str = "."

    def labels(self):
        return [a.get("label", a["tag"]) for a in self.algorithms]

    def solver_config(self, algo):
        return SolverConfig(**algo.get("solver", {}))


def _field_path(err):
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _line_of(text, err):
    """Best-effort line number of the offending field in the JSON source."""
    keys = [p for p in err.absolute_path if isinstance(p, str)]
    if not keys:
        return None
    needle = f'"{keys[-1]}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def parse_config(text, base_dir="."):
    """
    Parse and validate a config document.

    Raises
    ------
    ConfigError
        With one message per problem, each naming the line and/or field.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        line = _line_of(text, err)
        where = f"line {line}, " if line else ""
        problems.append(f"{where}field {_field_path(err)}: {err.message}")
    if not problems:
        labels = set()
        for i, algo in enumerate(doc["algorithms"]):
            if algo["tag"] not in ALGORITHMS:
                problems.append(f"field algorithms[{i}].tag: unknown algorithm {algo['tag']!r} "
                                f"(expected one of {', '.join(ALGORITHMS)})")
            label = algo.get("label", algo["tag"])
            if label in labels:
                problems.append(f"field algorithms[{i}].label: duplicate label {label!r}")
            labels.add(label)
            try:
                SolverConfig(**algo.get("solver", {}))
            except (TypeError, ValueError) as exc:
                problems.append(f"field algorithms[{i}].solver: {exc}")
            if algo["tag"] == "dds" and doc["instance"].get("generator") != "dsm":
                if not doc["instance"].get("file"):
                    problems.append(f"field algorithms[{i}].tag: dds needs a DSM instance")
    if problems:
        raise ConfigError(problems)
    cfg = ExperimentConfig(**{k: v for k, v in doc.items() if k in ExperimentConfig.__dataclass_fields__})
    cfg.base_dir = base_dir
    return cfg


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


# --------------------------------------------------------------------------
# instance and schedule construction

@dataclass
class Instance:
    spec: object
    dsm: object = None

    def report_objective(self):
        return dsm.dsm_cost_reporter(self.dsm) if self.dsm is not None else self.spec.objective


def _resolve(cfg, path):
    return path if os.path.isabs(path) else os.path.join(cfg.base_dir, path)


def build_instance(cfg):
    src = cfg.instance
    if "file" in src:
        with open(_resolve(cfg, src["file"])) as fh:
            doc = json.load(fh)
        if doc.get("format") == "pdpopt-dsm/1":
            inst = dsm.dsm_instance_from_dict(doc["instance"])
            return Instance(dsm.dsm_problem(inst), inst)
        return Instance(problem_from_dict(doc))
    params = dict(src.get("params", {}))
    seed = src.get("seed", 0)
    if src["generator"] == "dsm":
        inst, spec = dsm.generate_dsm(params.get("N", 20), params.get("T", 24), seed,
                                      params.get("polyhedral", False))
        return Instance(spec, inst)
    if src["generator"] == "sparse":
        return Instance(sparse.generate_sparse_regression(params.get("N", 5), params.get("K", 4),
                                                          params.get("M", 40), seed, params.get("l1_budget")))
    return Instance(random_qp(params.get("N", 5), params.get("K", 2), params.get("M", 2), seed,
                              curvature=params.get("curvature", 1.0)))


def build_schedule(cfg, n):
    sc = {"kind": "static", "graph": "geometric", **cfg.schedule}
    seed = sc.get("seed", 0)
    graph = sc["graph"]
    if graph == "custom":
        A = np.array(sc["adjacency"], dtype=bool)
        if A.shape != (n, n):
            raise ConfigError([f"field schedule.adjacency: expected a {n}x{n} matrix"])
    elif graph == "geometric":
        A = random_geometric_graph(n, sc.get("radius"), seed)
    elif graph == "ring":
        A = ring_graph(n)
    elif graph == "path":
        A = path_graph(n)
    elif graph == "complete":
        A = complete_graph(n)
    else:
        A = erdos_renyi_graph(n, sc.get("edge_prob", 0.3), seed)
    if sc["kind"] == "random":
        return RandomEdgeSchedule(A, sc.get("edge_prob", 0.5), seed, sc.get("Q", 10))
    if sc["kind"] == "cyclic":
        return CyclicEdgeSchedule(A, sc.get("Q", 2), seed)
    return StaticSchedule.from_adjacency(A, sc.get("Q", 1))


# --------------------------------------------------------------------------
# checking and running

def check_config(path):
    """
    Validate a config file without running it.

    Returns
    -------
    ok : bool
        False on schema problems or a failed connectivity check.
    lines : list of str
        Human-readable report (errors, warnings and the effective dual radius).
    """
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        return False, [f"error: {p}" for p in exc.problems]
    lines, ok = [], True
    inst = build_instance(cfg)
    spec = inst.spec
    lines.append(f"instance {spec.name}: N={spec.num_agents} K={spec.dims.primal_dim} "
                 f"M={spec.dims.map_dim} P={spec.dims.constraint_dim}")
    try:
        schedule = build_schedule(cfg, spec.num_agents)
    except (ConfigError, ValueError) as exc:
        msgs = exc.problems if isinstance(exc, ConfigError) else [str(exc)]
        return False, lines + [f"error: {m}" for m in msgs]
    horizon = max(4 * schedule.connectivity_window, 50)
    report = check_assumption4(schedule, horizon)
    lines.append(f"communication schedule over {horizon} rounds:")
    lines.extend("  " + ln for ln in str(report).splitlines())
    if not report.ok:
        ok = False
        lines.append("error: the communication schedule fails the mixing assumptions")
    for algo, label in zip(cfg.algorithms, cfg.labels()):
        sc = cfg.solver_config(algo)
        if algo["tag"] in ("pdp", "centralized_pdp"):
            for msg in theorem_warnings(spec, sc):
                lines.append(f"warning: {label}: {msg}")
        d = sc.d_lambda if sc.d_lambda is not None else spec.d_lambda
        lines.append(f"{label}: effective D_lambda = {d:.6g}")
    if ok:
        lines.append("OK")
    return ok, lines


def _reference_value(inst):
    if inst.dsm is not None:
        return dsm.dsm_optimal_cost(inst.dsm)[1]
    from ..oracle import solve_reference

    return solve_reference(inst.spec).objective


def run_algorithm(algo, inst, schedule, workers=1):
    """Run one configured algorithm; returns its RunTrace."""
    sc = SolverConfig(**algo.get("solver", {}))
    report = inst.report_objective()
    tag = algo["tag"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConfigWarning)
        if tag == "pdp":
            return run(inst.spec, sc, schedule, report_objective=report, workers=workers)[1]
        if tag == "pd":
            return run(inst.spec, sc, schedule, report_objective=report, perturb=False, workers=workers)[1]
        if tag == "centralized_pdp":
            return centralized_run(inst.spec, sc, report_objective=report)[2]
        if tag == "centralized_pd":
            return centralized_run(inst.spec, sc, perturb=False, report_objective=report)[2]
    if inst.dsm is None:
        raise ConfigError(["dds needs a DSM instance"])
    return dds_run(inst.dsm, sc, schedule)[1]


def run_experiment(cfg, output_dir=None):
    """
    Run every algorithm in ``cfg`` and write the artifacts.

    Returns
    -------
    str
        The output directory.
    """
    out = output_dir or _resolve(cfg, cfg.output_dir)
    os.makedirs(out, exist_ok=True)
    inst = build_instance(cfg)
    schedule = build_schedule(cfg, inst.spec.num_agents)
    f_star = _reference_value(inst) if cfg.oracle else None
    summary = {"name": cfg.name, "instance": inst.spec.name, "algorithms": {}}
    if inst.dsm is not None:
        summary["unscheduled_cost"] = inst.dsm.unscheduled_cost()
    if f_star is not None:
        summary["reference_objective"] = f_star
    traces = {}
    for algo, label in zip(cfg.algorithms, cfg.labels()):
        trace = run_algorithm(algo, inst, schedule, cfg.workers)
        trace.to_csv(os.path.join(out, f"{label}.csv"))
        traces[label] = trace
        last = trace[-1]
        entry = {"iterations": int(last["k"]), "objective": last["obj_avg"],
                 "violation": last["viol"], "complementary_slackness": last["compl_slack"]}
        if f_star is not None:
            entry["oracle_gap"] = last["obj_avg"] - f_star
        summary["algorithms"][label] = entry
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True, allow_nan=True)
    if cfg.plot:
        write_plot(traces, os.path.join(out, "convergence.svg"), f_star if cfg.log_gap else None,
                   title=cfg.name)
    return out


def write_plot(traces, path, f_star=None, title=""):
    """Objective at the running average against iteration, one line per trace."""
    series = {}
    for label, tr in traces.items():
        y = tr.column("obj_avg")
        if f_star is not None:
            y = np.abs(y - f_star)
        series[label] = (tr.column("k"), y)
    ylabel = "|objective - reference|" if f_star is not None else "objective (running average)"
    with open(path, "w") as fh:
        fh.write(line_chart(series, title=title, ylabel=ylabel, log_y=f_star is not None))


def compare(directory):
    """Table of final metrics for every trace CSV in ``directory``."""
    from ..solver import RunTrace

    summary_path = os.path.join(directory, "summary.json")
    summary = {}
    if os.path.exists(summary_path):
        with open(summary_path) as fh:
            summary = json.load(fh)
    f_star = summary.get("reference_objective")
    rows = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".csv"):
            continue
        tr = RunTrace.from_csv(os.path.join(directory, name))
        if len(tr) == 0:
            continue
        last = tr[-1]
        gap = "" if f_star is None else f"{last['obj_avg'] - f_star:.4e}"
        rows.append((name[:-4], int(last["k"]), f"{last['obj_avg']:.6g}", f"{last['viol']:.3e}",
                     f"{last['dual_disagree']:.3e}", gap))
    header = ("algorithm", "iters", "objective", "violation", "dual_disagree", "gap")
    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header)] + [fmt.format(*r) for r in rows]
    if "unscheduled_cost" in summary:
        lines.append(f"unscheduled cost: {summary['unscheduled_cost']:.6g}")
    return "\n".join(lines)


def config_to_text(cfg):
    doc = copy.deepcopy({k: getattr(cfg, k) for k in ExperimentConfig.__dataclass_fields__ if k != "base_dir"})
    return json.dumps(doc, indent=1)


__all__ = ["CONFIG_SCHEMA", "ExperimentConfig", "parse_config", "load_config", "check_config",
           "build_instance", "build_schedule", "run_experiment", "run_algorithm", "compare",
           "write_plot", "config_to_text"]
