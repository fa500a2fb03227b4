import csv
import json

import numpy as np
import pytest

from telesim.cli import main
from telesim.engine import TimeSeriesLog
from telesim.sysid import SecondOrderModel, bode, model_from_file, read_key_values, step_response, write_key_values

SPRING_RUN = """\
duration: 10.0
transmission: {type: rigid, parasitic_damping: 0.005}
environment: {type: torsion_spring, stiffness_mnm_per_deg: 4}
operator: {type: chirp, amplitude: 0.1, f0: 0.1, f1: 10.0, duration: 10.0}
"""

FREE_SPACE_RUN = """\
duration: 10.0
environment: {type: free_space}
operator: {type: step, amplitude: 0.05, onset: 0.1}
"""


def _write(path, text):
    path.write_text(text)
    return str(path)


def _simulate(tmp_path, text, name="sim"):
    cfg = _write(tmp_path / f"{name}.yaml", text)
    out = tmp_path / name
    assert main(["simulate", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    return out


def test_simulate_writes_log_and_manifest(tmp_path):
    out = _simulate(tmp_path, "duration: 0.5\n")
    log = TimeSeriesLog.from_csv(out / "log.csv")
    assert len(log) == 501
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["seed"] == 0
    assert manifest["config"]["duration"] == 0.5


def test_free_space_minimal_config_is_all_zero(tmp_path):
    out = _simulate(tmp_path, """\
duration: 0.5
environment: {type: free_space}
operator: {type: step, amplitude: 0.0}
sensors: {torque_noise_std: 0.0}
""")
    log = TimeSeriesLog.from_csv(out / "log.csv")
    assert np.all(log.as_array()[:, 1:] == 0.0)


def test_missing_field_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.yaml", "dt: 0.001\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "duration" in capsys.readouterr().err


def test_unknown_key_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.yaml", "duration: 1.0\nduraton: 2.0\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "duraton" in err and "line 2" in err


def test_divergence_exits_3(tmp_path, capsys):
    cfg = _write(tmp_path / "stiff.yaml", """\
duration: 1.0
transmission: {type: spring_damper, stiffness: 5000.0, damping: 0.0}
sensors: {torque_noise_std: 0.0, angle_from_quantized: false}
""")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "tick" in capsys.readouterr().err


def test_seed_override(tmp_path):
    cfg = _write(tmp_path / "c.yaml", "duration: 0.2\n")
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "3", "--quiet"])
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 3


def test_identify_spring_run(tmp_path):
    out = _simulate(tmp_path, SPRING_RUN)
    fit = tmp_path / "fit"
    assert main(["identify", str(out / "log.csv"), "--out", str(fit), "--quiet"]) == 0
    for system in ("participant", "environment"):
        values = read_key_values(fit / f"{system}_model.txt")
        assert float(values["percent_fit"]) >= 99.0
        assert float(values["fpe"]) >= float(values["mse"])
    p = read_key_values(fit / "participant_model.txt")
    e = read_key_values(fit / "environment_model.txt")
    assert float(p["damping_ratio"]) > float(e["damping_ratio"])


def test_identify_free_space_reports_environment_error(tmp_path, capsys):
    out = _simulate(tmp_path, FREE_SPACE_RUN)
    fit = tmp_path / "fit"
    assert main(["identify", str(out / "log.csv"), "--out", str(fit), "--quiet"]) == 0
    assert (fit / "participant_model.txt").exists()
    assert read_key_values(fit / "environment_error.txt")["error"] == "RankDeficientError"
    assert "RankDeficient" in capsys.readouterr().err


def test_identify_truncated_csv_exits_2(tmp_path):
    out = _simulate(tmp_path, "duration: 0.2\n")
    text = (out / "log.csv").read_text().splitlines()
    text[-1] = text[-1].rsplit(",", 2)[0]
    bad = _write(tmp_path / "bad.csv", "\n".join(text) + "\n")
    assert main(["identify", bad, "--out", str(tmp_path / "fit")]) == 2


def test_identify_all_failures_exit_3(tmp_path):
    out = _simulate(tmp_path, FREE_SPACE_RUN)
    code = main(["identify", str(out / "log.csv"), "--system", "environment",
                 "--out", str(tmp_path / "fit"), "--quiet"])
    assert code == 3


def _model_file(path, system, model):
    write_key_values(path, {"system": system, "gain": model.gain,
                            "natural_frequency": model.natural_frequency,
                            "damping_ratio": model.damping_ratio})
    return str(path)


def test_figures_from_two_models(tmp_path):
    env = SecondOrderModel(4.36, 65.0, 0.06)
    part = SecondOrderModel(4.36, 22.5, 0.27)
    files = [_model_file(tmp_path / "e.txt", "environment", env), _model_file(tmp_path / "p.txt", "participant", part)]
    out = tmp_path / "figs"
    assert main(["figures", *files, "--out", str(out), "--quiet"]) == 0
    with open(out / "step_response.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["time", "environment", "participant"]
    t, y = step_response(env, 1.0, 1e-3)
    assert [float(r[1]) for r in rows[1:]] == y.tolist()
    with open(out / "bode.csv") as fh:
        rows = list(csv.reader(fh))
    omega = np.array([float(r[0]) for r in rows[1:]])
    mag, phase = bode(part, omega)
    assert [float(r[3]) for r in rows[1:]] == mag.tolist()
    assert [float(r[4]) for r in rows[1:]] == phase.tolist()
    for name in ("bode.svg", "step_response.svg"):
        svg = (out / name).read_text()
        # environment red-dashed, participant blue-solid
        assert "#d62728" in svg and "#1f77b4" in svg and "stroke-dasharray" in svg


def test_figures_single_model(tmp_path):
    f = _model_file(tmp_path / "m.txt", "participant", SecondOrderModel(1.0, 10.0, 0.5))
    out = tmp_path / "figs"
    assert main(["figures", f, "--out", str(out), "--quiet"]) == 0
    header = (out / "step_response.csv").read_text().splitlines()[0]
    assert header == "time,participant"


def test_figures_from_log(tmp_path):
    out = _simulate(tmp_path, SPRING_RUN)
    figs = tmp_path / "figs"
    assert main(["figures", str(out / "log.csv"), "--out", str(figs), "--quiet"]) == 0
    assert (figs / "step_response.svg").exists() and (figs / "bode.svg").exists()


def test_figures_invalid_model_file(tmp_path):
    bad = _write(tmp_path / "m.txt", "gain = 1.0\n")
    assert main(["figures", bad, "--out", str(tmp_path / "figs")]) == 2


PSYCH_CS = """\
paradigm: constant_stimuli
seed: 3
observer: {type: psychometric, threshold_mu: 0.05, slope_sigma: 0.02, lapse_rate: 0.02}
constant_stimuli:
  levels: [-0.03, 0.0, 0.03, 0.06, 0.09, 0.12, 0.15]
  trials_per_level: 20
"""

PSYCH_FLOOR = """\
paradigm: staircase
observer: {type: always_correct}
staircase: {start_level: 1.0, step_size: 0.1, floor: 0.3, max_trials: 40}
"""


def test_psych_constant_stimuli_rows(tmp_path):
    cfg = _write(tmp_path / "p.yaml", PSYCH_CS)
    out = tmp_path / "psych"
    assert main(["psych", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    lines = (out / "trials.csv").read_text().splitlines()
    assert len(lines) == 141
    summary = read_key_values(out / "summary.txt")
    assert summary["n_trials"] == "140"
    assert abs(float(summary["threshold_mu"]) - 0.05) < 0.02


def test_psych_always_correct_reaches_floor(tmp_path):
    cfg = _write(tmp_path / "p.yaml", PSYCH_FLOOR)
    out = tmp_path / "psych"
    assert main(["psych", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    summary = read_key_values(out / "summary.txt")
    assert summary["reached_floor"] == "True"
    assert float(summary["final_level"]) == pytest.approx(0.3)


def test_psych_bad_paradigm(tmp_path):
    cfg = _write(tmp_path / "p.yaml", "paradigm: yes_no\n")
    assert main(["psych", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_psych_teleoperated_observer(tmp_path):
    cfg = _write(tmp_path / "p.yaml", """\
paradigm: constant_stimuli
reference: 0.2
observer:
  type: teleoperated
  slope_sigma: 0.02
  lapse_rate: 0.0
  simulation:
    duration: 5.0
    operator: {type: chirp, amplitude: 0.1, f0: 0.1, f1: 10.0, duration: 5.0}
constant_stimuli: {levels: [-0.05, 0.05], trials_per_level: 5}
""")
    out = tmp_path / "psych"
    assert main(["psych", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    assert len((out / "trials.csv").read_text().splitlines()) == 11


def test_sweep(tmp_path):
    cfg = _write(tmp_path / "s.yaml", """\
simulation:
  duration: 10.0
  environment: {type: torsion_spring, stiffness_mnm_per_deg: 4}
  operator: {type: chirp, amplitude: 0.1, f0: 0.1, f1: 10.0, duration: 10.0}
parameter: transmission.parasitic_damping
values: [0.005, 0.01, 0.02, 0.04]
""")
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    zetas = [float(r["participant_damping_ratio"]) for r in rows]
    assert all(b > a for a, b in zip(zetas, zetas[1:]))


def test_sweep_bad_path(tmp_path):
    cfg = _write(tmp_path / "s.yaml", "simulation: {duration: 0.1}\nparameter: transmission.nope\nvalues: [1]\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_manifest_for_other_command_rejected(tmp_path):
    out = _simulate(tmp_path, "duration: 0.1\n")
    cfg = _write(tmp_path / "p.yaml", PSYCH_FLOOR)
    main(["psych", "--config", cfg, "--out", str(tmp_path / "psych"), "--quiet"])
    code = main(["simulate", "--config", str(tmp_path / "psych" / "manifest.json"), "--out", str(out)])
    assert code == 2
