import copy
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from vhrd.cli import main, read_csv
from vhrd.scenario import load_scenario, parse_scenario

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def config(name):
    return json.loads((CONFIGS / f"{name}.json").read_text())


def write(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def run(tmp_path, command, raw, out="out"):
    cfg = write(tmp_path, raw)
    code = main([command, "--config", str(cfg), "--out", str(tmp_path / out)])
    return code, tmp_path / out


def small(raw, n=31):
    raw = copy.deepcopy(raw)
    raw["grid"]["n"] = [n]
    return raw


class TestScenario:
    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
    def test_roundtrip_idempotent(self, path):
        once = load_scenario(path).dumps()
        twice = parse_scenario(json.loads(once)).dumps()
        assert once == twice

    def test_shipped_configs_are_canonical(self):
        for path in CONFIGS.glob("*.json"):
            assert load_scenario(path).dumps() == path.read_text(), path.name

    @pytest.mark.parametrize("mutate, field", [
        (lambda r: r["coefficients"].update(mu={"profile": "constant", "value": -1.0}), "coefficients.mu"),
        (lambda r: r.update(version=2), "version"),
        (lambda r: r["coefficients"].pop("beta"), "coefficients"),
        (lambda r: r["grid"].update(n=[2]), "grid"),
        (lambda r: r["solver"].update(horizon=0), "solver.horizon"),
        (lambda r: r.update(extra=1), "extra"),
        (lambda r: r["initial"].update(v_i={"profile": "constant", "value": -0.1}), "initial.v_i"),
        (lambda r: r.update(sweep={"parameter": "sigma1", "values": []}), "sweep.values"),
        (lambda r: r.update(sweep={"parameter": "gamma", "values": [1.0]}), "sweep.parameter"),
    ])
    def test_validation_names_field(self, tmp_path, capsys, mutate, field):
        raw = config("constant_r0_2")
        mutate(raw)
        code, _ = run(tmp_path, "r0", raw)
        assert code == 2
        assert field in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["r0", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        assert main(["r0", "--config", str(path), "--out", str(tmp_path)]) == 2


class TestCommands:
    def test_r0_report(self, tmp_path, capsys):
        code, out = run(tmp_path, "r0", small(config("constant_r0_2")))
        assert code == 0
        assert "r0_direct = 2.000000" in capsys.readouterr().out
        header, data = read_csv(out / "r0.csv")
        row = dict(zip(header, data[0]))
        assert row["kappa0"] > 0
        assert row["local_r_min"] == row["local_r_max"] == pytest.approx(2.0)

    def test_equilibria_and_verify(self, tmp_path):
        code, out = run(tmp_path, "equilibria", small(config("constant_r0_2")))
        assert code == 0
        header, data = read_csv(out / "equilibria.csv")
        assert header == ["x", "vhat", "h_i_hat", "v_u_hat", "v_i_hat"]
        assert np.abs(data[:, 2:] - [2.0, 0.5, 0.5]).max() < 1e-8
        assert json.loads((out / "equilibria.json").read_text())["equilibria"] == ["E0", "E1", "E2"]
        code, _ = run(tmp_path, "verify", small(config("constant_r0_2")))
        assert code == 0

    def test_equilibria_below_threshold(self, tmp_path):
        code, out = run(tmp_path, "equilibria", small(config("constant_r0_half")))
        assert code == 0
        header, _ = read_csv(out / "equilibria.csv")
        assert header == ["x", "vhat"]

    def test_verify_detects_tampering(self, tmp_path):
        raw = small(config("constant_r0_2"))
        run(tmp_path, "equilibria", raw)
        path = tmp_path / "out" / "equilibria.csv"
        lines = path.read_text().splitlines()
        cells = lines[5].split(",")
        cells[2] = format(float(cells[2]) + 1e-3, ".16e")
        lines[5] = ",".join(cells)
        path.write_text("\n".join(lines) + "\n")
        code, _ = run(tmp_path, "verify", raw)
        assert code == 3

    def test_verify_without_equilibria(self, tmp_path):
        code, _ = run(tmp_path, "verify", small(config("constant_r0_2")))
        assert code == 2

    @pytest.mark.parametrize("name, verdict", [("constant_r0_2", "E2"), ("constant_r0_half", "E1")])
    def test_simulate_verdict(self, tmp_path, name, verdict):
        code, out = run(tmp_path, "simulate", small(config(name)))
        assert code == 0
        text = (out / "trajectory.csv").read_text()
        assert text.splitlines()[0] == "t,h_i_max,v_u_max,v_i_max,v_dev"
        assert text.splitlines()[-1] == f"# verdict: {verdict}"

    def test_simulate_snapshots(self, tmp_path):
        code, out = run(tmp_path, "simulate", small(config("constant_r0_2")))
        assert code == 0
        snaps = sorted(out.glob("snapshot_*.csv"))
        assert len(snaps) == 3
        assert snaps[0].read_text().splitlines()[-1] == "# t: 0.0000000000000000e+00"

    def test_simulate_needs_initial(self, tmp_path):
        raw = small(config("constant_r0_2"))
        del raw["initial"]
        code, _ = run(tmp_path, "simulate", raw)
        assert code == 2

    def test_simulate_deterministic(self, tmp_path):
        raw = small(config("constant_r0_2"))
        run(tmp_path, "simulate", raw, out="a")
        run(tmp_path, "simulate", raw, out="b")
        for f in ("trajectory.csv", "snapshot_001.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_sweep_threshold_flip(self, tmp_path, monkeypatch):
        raw = config("sigma1_sweep")
        monkeypatch.setenv("VHRD_THREADS", "3")
        code, out = run(tmp_path, "sweep", raw)
        assert code == 0
        lines = [ln.split(",") for ln in (out / "sweep.csv").read_text().splitlines()[1:] if not ln.startswith("#")]
        verdicts = [row[3] for row in lines]
        r0 = np.array([float(row[1]) for row in lines])
        assert np.allclose([float(row[0]) for row in lines], raw["sweep"]["values"])
        assert sum(a != b for a, b in zip(verdicts, verdicts[1:])) == 1
        assert all(v == ("E2" if r > 1 else "E1") for v, r in zip(verdicts, r0))

    def test_sweep_parallel_matches_serial(self, tmp_path, monkeypatch):
        raw = small(config("diffusion_sweep"), n=41)
        monkeypatch.setenv("VHRD_THREADS", "1")
        run(tmp_path, "sweep", raw, out="serial")
        monkeypatch.setenv("VHRD_THREADS", "4")
        run(tmp_path, "sweep", raw, out="parallel")
        assert (tmp_path / "serial" / "sweep.csv").read_bytes() == (tmp_path / "parallel" / "sweep.csv").read_bytes()

    def test_sweep_bad_threads(self, tmp_path, monkeypatch):
        monkeypatch.setenv("VHRD_THREADS", "zero")
        code, _ = run(tmp_path, "sweep", small(config("diffusion_sweep"), n=21))
        assert code == 2

    def test_sweep_requires_block(self, tmp_path):
        code, _ = run(tmp_path, "sweep", small(config("constant_r0_2")))
        assert code == 2

    def test_ode(self, tmp_path):
        code, out = run(tmp_path, "ode", config("constant_r0_2"))
        assert code == 0
        header, data = read_csv(out / "ode_trajectory.csv")
        assert header == ["t", "h_i", "v_u", "v_i", "v_dev"]
        assert np.abs(data[-1, 1:4] - [2.0, 0.5, 0.5]).max() < 1e-6
        assert (out / "ode_trajectory.csv").read_text().splitlines()[-1] == "# verdict: ss2"

    def test_ode_heterogeneous_needs_params(self, tmp_path):
        code, _ = run(tmp_path, "ode", config("heterogeneous"))
        assert code == 2

    def test_solver_failure_exit(self, tmp_path, monkeypatch):
        from vhrd import cli
        from vhrd.errors import ConvergenceError

        def boom(*args, **kwargs):
            raise ConvergenceError("forced")
        monkeypatch.setattr(cli, "spectral_report", boom)
        code, _ = run(tmp_path, "r0", small(config("constant_r0_2")))
        assert code == 3

    def test_console_entry(self, tmp_path):
        cfg = write(tmp_path, small(config("constant_r0_2"), n=11))
        proc = subprocess.run([sys.executable, "-m", "vhrd.cli", "r0", "--config", str(cfg),
                               "--out", str(tmp_path / "o")], capture_output=True, text=True)
        assert proc.returncode == 0 and "r0_direct" in proc.stdout
