import json
import subprocess
import sys
from pathlib import Path

import pytest

from momentctl.cli import main
from momentctl.errors import DescriptorError
from momentctl.pipeline import JobDescriptor, Overall, run

JOBS = Path(__file__).resolve().parent.parent / "jobs"


def load(name, **overrides):
    data = json.loads((JOBS / f"{name}.json").read_text())
    data.update(overrides)
    return data


def test_two_atom_constructed():
    v = run(JobDescriptor.from_json(load("two_atom")))
    assert v.overall is Overall.REPRESENTING_MEASURE_CONSTRUCTED and v.exit_code == 0
    for r in v.per_index:
        assert r.support_ok and r.moment_match <= 1e-6 and len(r.measure) == 2


def test_not_psd_table():
    v = run(JobDescriptor.from_json(load("not_psd")))
    assert v.overall is Overall.NECESSARY_CONDITION_FAILED and v.exit_code == 2
    assert v.per_index[0].psd_reports[0]["min_eigenvalue"] == pytest.approx(-1.0)


def test_gaussian_conditions_certified():
    v = run(JobDescriptor.from_json(load("gaussian")))
    assert v.overall is Overall.CONDITIONS_CERTIFIED and v.exit_code == 0
    assert v.split.carleman_part.ids == (1, 2) and v.tightness.verdict.value == "certified"


def test_command_gating():
    job = JobDescriptor.from_json(load("two_atom"))
    check = run(job, "check")
    assert check.overall is Overall.INCONCLUSIVE and check.per_index[0].measure is None
    solve = run(job, "solve")
    assert solve.family is not None and solve.family.sealed and solve.tightness is None
    assert solve.overall is Overall.INCONCLUSIVE


def test_index_list_is_closed():
    v = run(JobDescriptor.from_json(load("gaussian", index_list=[[1], [2]])), "check")
    assert [r.variables.ids for r in v.per_index] == [(1,), (2,), (1, 2)]
    assert "closed under union" in v.notes[0]


def test_localizing_violation_fails_necessary_condition():
    # an atom at x1 = -1.25 lies outside {1 - x1^2 >= 0}
    data = load("two_atom", module=["1 - x1^2"])
    v = run(JobDescriptor.from_json(data))
    assert v.overall is Overall.NECESSARY_CONDITION_FAILED


@pytest.mark.parametrize("patch", [{"degree_budget": 0}, {"index_list": []}, {"epsilon": 2.0},
                                   {"command": "explode"}, {"module": ["x1 +"]}, {"tolerances": {"psd": -1}},
                                   {"tolerances": {"bogus": 1}}])
def test_descriptor_validation(patch):
    with pytest.raises(DescriptorError):
        JobDescriptor.from_json(load("gaussian", **patch))


def test_threads_do_not_change_output():
    job = JobDescriptor.from_json(load("two_atom"))
    assert run(job, seed=5).dumps() == run(job, seed=5, threads=4).dumps()


def test_cli_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["report", "--job", str(JOBS / "two_atom.json"), "--out", str(out), "--dump-matrices"])
    assert code == 0
    assert "representing_measure_constructed" in capsys.readouterr().out
    for name in ("verdict.json", "report.txt", "summary.csv", "family/manifest.json"):
        assert (out / name).exists()
    assert sorted(p.name for p in (out / "matrices").iterdir()) == ["1_2_loc1_n2.csv", "1_2_moment_n3.csv",
                                                                    "1_moment_n3.csv"]
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["overall"] == "representing_measure_constructed" and verdict["exit_code"] == 0


def test_cli_input_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["verify", "--job", str(bad), "--out", str(tmp_path)]) == 1
    assert "invalid job" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "momentctl", "check", "--job", str(JOBS / "not_psd.json"),
                           "--out", str(tmp_path), "--quiet"], capture_output=True, text=True)
    assert proc.returncode == 2
