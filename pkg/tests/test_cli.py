import json
import subprocess
import sys

import pytest

from pdpopt.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main


def write(path, doc):
    path.write_text(json.dumps(doc, indent=1))
    return str(path)


QP = {
    "name": "cli-qp",
    "instance": {"generator": "qp", "seed": 0},
    "schedule": {"kind": "random", "graph": "complete", "edge_prob": 0.6, "seed": 1, "Q": 8},
    "algorithms": [{"tag": "pdp", "solver": {"step_a": 1, "rho1": 0.01, "rho2": 0.01, "max_iters": 60}},
                   {"tag": "pd", "solver": {"max_iters": 60}}],
}


def test_run_and_compare(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", QP)
    assert main(["run", cfg, "-o", str(tmp_path / "out")]) == EXIT_OK
    assert (tmp_path / "out" / "pdp.csv").exists()
    assert main(["compare", str(tmp_path / "out")]) == EXIT_OK
    assert "pdp" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path / "c.json", QP)
    main(["run", cfg, "-o", str(tmp_path / "a")])
    main(["run", cfg, "-o", str(tmp_path / "b"), "-j", "3"])
    for name in ("pdp.csv", "pd.csv", "summary.json", "convergence.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_check_config_ok(tmp_path, capsys):
    assert main(["check-config", write(tmp_path / "c.json", QP)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.rstrip().endswith("OK") and "effective D_lambda" in out


def test_check_config_rho_warning(tmp_path, capsys):
    doc = json.loads(json.dumps(QP))
    doc["algorithms"][0]["solver"]["rho1"] = 100.0
    assert main(["check-config", write(tmp_path / "c.json", doc)]) == EXIT_OK
    assert "warning: pdp: rho1=100 exceeds" in capsys.readouterr().out


def test_check_config_disconnected_graph(tmp_path, capsys):
    doc = dict(QP, schedule={"kind": "static", "graph": "custom",
                             "adjacency": [[0, 1, 0, 0, 0], [1, 0, 0, 0, 0], [0, 0, 0, 1, 0],
                                           [0, 0, 1, 0, 1], [0, 0, 0, 1, 0]]})
    assert main(["check-config", write(tmp_path / "c.json", doc)]) == EXIT_INVALID
    assert "not strongly connected" in capsys.readouterr().out


def test_invalid_config_exit_1(tmp_path, capsys):
    doc = dict(QP, algorithms=[{"tag": "pdp", "solver": {"step_a": -1}}])
    assert main(["run", write(tmp_path / "c.json", doc)]) == EXIT_INVALID
    assert "algorithms[0].solver.step_a" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_INVALID


def test_runtime_failure_exit_2(tmp_path, capsys):
    (tmp_path / "broken.json").write_text(json.dumps({"format": "pdpopt-problem/1", "cost": {"kind": "cubic"},
                                                      "agents": [], "slater": {"point": []}}))
    doc = dict(QP, instance={"file": "broken.json"})
    assert main(["run", write(tmp_path / "c.json", doc)]) == EXIT_RUNTIME
    assert "unknown cost kind" in capsys.readouterr().err


def test_generate_and_run_from_file(tmp_path):
    inst = tmp_path / "dsm.json"
    assert main(["generate", "dsm", "--N", "4", "--T", "6", "--seed", "3", "-o", str(inst)]) == EXIT_OK
    doc = {"instance": {"file": "dsm.json"},
           "algorithms": [{"tag": "dds", "solver": {"step_a": 0.05, "max_iters": 10}}]}
    assert main(["run", write(tmp_path / "c.json", doc), "-o", str(tmp_path / "out")]) == EXIT_OK
    sp = tmp_path / "sparse.json"
    assert main(["generate", "sparse", "--N", "2", "--K", "2", "--M", "10", "-o", str(sp)]) == EXIT_OK
    assert json.loads(sp.read_text())["format"] == "pdpopt-problem/1"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pdpopt", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "check-config" in res.stdout


def test_missing_subcommand():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
