import json

import numpy as np
import pytest

from pdpopt.apps import dsm
from pdpopt.apps.experiment import (ExperimentConfig, build_instance, build_schedule, check_config, compare,
                                    config_to_text, parse_config, run_experiment)
from pdpopt.apps.sparse import generate_sparse_regression
from pdpopt.apps.svg import line_chart
from pdpopt.errors import ConfigError
from pdpopt.oracle import solve_reference
from pdpopt.problem import PerturbationMode, validate_problem
from pdpopt.projections import Polyhedron


# --- demand-side management -------------------------------------------------

def test_dsm_desk_instance_validates():
    inst, spec = dsm.generate_dsm(20, 24, seed=0)
    rep = validate_problem(spec, num_samples=100)
    assert rep.ok, str(rep)
    assert rep.measured["G_Fbar"] <= spec.global_grad_lipschitz
    assert spec.dims.num_agents == 21 and spec.dims.primal_dim == 24


def test_dsm_reformulation_matches_cost():
    inst, spec = dsm.generate_dsm(6, 10, seed=4)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = np.array([s(rng.uniform(0, 1, 10)) for s in inst.local_sets])
        stacked = inst.stack_with_slack(x)
        assert spec.objective(stacked) == pytest.approx(inst.cost(x), rel=1e-12, abs=1e-12)
        assert np.all(spec.constraint_sum(stacked) <= 1e-12)


def test_dsm_cost_gradient_and_optimum():
    from pdpopt.oracle import fd_check

    inst = dsm.generate_dsm_instance(5, 8, seed=2)
    rng = np.random.default_rng(1)
    pts = [rng.uniform(0, 1, size=(5, 8)) for _ in range(5)]
    err = fd_check(lambda v: inst.cost(v.reshape(5, 8)), lambda v: inst.cost_gradient(v.reshape(5, 8)).ravel(),
                   [p.ravel() for p in pts])
    assert err < 1e-5
    x_opt, f_opt = dsm.dsm_optimal_cost(inst)
    assert f_opt <= inst.unscheduled_cost()
    for p in pts:
        assert f_opt <= inst.cost(np.array([s(q) for s, q in zip(inst.local_sets, p)])) + 1e-9


def test_dsm_dual_radius_covers_oracle_dual():
    inst, spec = dsm.generate_dsm(4, 6, seed=0)
    assert spec.slater.dual_lower_bound == 0.0
    ref = solve_reference(spec, tol=1e-5)
    assert np.linalg.norm(ref.lambda_star) <= spec.d_lambda


def test_dsm_generator_deterministic_and_roundtrip():
    a = dsm.generate_dsm_instance(5, 12, seed=9)
    b = dsm.generate_dsm_instance(5, 12, seed=9)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    c = dsm.dsm_instance_from_dict(json.loads(json.dumps(a.to_dict())))
    x = a.unscheduled()
    assert c.cost(x) == a.cost(x)


def test_dsm_polyhedral_sets():
    inst = dsm.generate_dsm_instance(3, 8, seed=1, polyhedral=True)
    assert all(isinstance(s, Polyhedron) for s in inst.local_sets)
    assert validate_problem(dsm.dsm_problem(inst)).ok


def test_dsm_rejects_bad_sizes():
    with pytest.raises(ValueError):
        dsm.generate_dsm_instance(1, 24)


# --- sparse regression ------------------------------------------------------

def test_sparse_instance():
    spec = generate_sparse_regression(4, 3, 20, seed=1)
    assert spec.mode is PerturbationMode.PROXIMAL
    assert spec.meta["budget"] == pytest.approx(np.abs(spec.meta["signal"]).sum())
    assert validate_problem(spec).ok
    with pytest.raises(ValueError):
        generate_sparse_regression(0, 3, 20)


def test_sparse_subgradient_is_deterministic_sign():
    spec = generate_sparse_regression(1, 3, 5)
    g = spec.agents[0].constraint_subgradient(np.array([0.0, -2.0, 1e-30]))
    assert g.tolist() == [[0.0, -1.0, 1.0]]


# --- svg -------------------------------------------------------------------

def test_line_chart():
    svg = line_chart({"a": ([1, 2, 3], [1.0, 0.1, 0.01]), "b<": ([1, 2], [0.0, 1.0])}, title="t", log_y=True)
    assert svg.startswith("<svg") and svg.endswith("</svg>")
    assert "b&lt;" in svg and svg.count("<polyline") == 2
    assert "no data" in line_chart({"a": ([1], [np.nan])})


# --- experiment harness -------------------------------------------------------

QP_CONFIG = {
    "name": "qp-small",
    "instance": {"generator": "qp", "seed": 1},
    "schedule": {"kind": "static", "graph": "ring"},
    "algorithms": [{"tag": "pdp", "solver": {"step_a": 1, "rho1": 0.01, "rho2": 0.01, "max_iters": 50}},
                   {"tag": "centralized_pd", "solver": {"max_iters": 50}}],
    "oracle": True,
    "log_gap": True,
}


def test_parse_config_errors_name_line_and_field():
    text = json.dumps({"instance": {"generator": "qp"},
                       "algorithms": [{"tag": "pdp", "solver": {"max_iters": -3}}]}, indent=1)
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = exc.value.problems[0]
    assert "line" in msg and "algorithms[0].solver.max_iters" in msg
    with pytest.raises(ConfigError) as exc:
        parse_config('{"instance": ')
    assert "line 1" in exc.value.problems[0]
    with pytest.raises(ConfigError):
        parse_config(json.dumps({**QP_CONFIG, "algorithms": [{"tag": "dds"}]}))
    with pytest.raises(ConfigError):
        parse_config(json.dumps({**QP_CONFIG, "algorithms": [{"tag": "newton"}]}))


def test_config_text_roundtrip():
    cfg = parse_config(json.dumps(QP_CONFIG))
    again = parse_config(config_to_text(cfg))
    assert again.algorithms == cfg.algorithms and again.instance == cfg.instance


def test_build_instance_and_schedule():
    cfg = ExperimentConfig(instance={"generator": "dsm", "params": {"N": 4, "T": 6}, "seed": 2},
                           algorithms=[{"tag": "dds"}],
                           schedule={"kind": "cyclic", "graph": "complete", "Q": 3})
    inst = build_instance(cfg)
    assert inst.dsm is not None and inst.spec.num_agents == 5
    sched = build_schedule(cfg, 5)
    assert sched.connectivity_window == 3
    bad = ExperimentConfig(instance={}, algorithms=[], schedule={"graph": "custom", "adjacency": [[0]]})
    with pytest.raises(ConfigError):
        build_schedule(bad, 3)


def test_run_experiment_writes_artifacts(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(QP_CONFIG))
    ok, lines = check_config(str(path))
    assert ok and lines[-1] == "OK"
    cfg = parse_config(json.dumps(QP_CONFIG), str(tmp_path))
    out = run_experiment(cfg, str(tmp_path / "out"))
    names = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert names == ["centralized_pd.csv", "convergence.svg", "pdp.csv", "summary.json"]
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert set(summary["algorithms"]) == {"pdp", "centralized_pd"}
    assert "reference_objective" in summary
    table = compare(out)
    assert "pdp" in table and "centralized_pd" in table


def test_dsm_experiment_with_dds(tmp_path):
    cfg = ExperimentConfig(instance={"generator": "dsm", "params": {"N": 4, "T": 6}, "seed": 0},
                           algorithms=[{"tag": "pdp", "solver": {"step_a": 0.1, "max_iters": 20}},
                                       {"tag": "dds", "solver": {"step_a": 0.05, "max_iters": 20}}],
                           oracle=True)
    out = run_experiment(cfg, str(tmp_path))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["unscheduled_cost"] > 0
    assert "unscheduled cost" in compare(out)
