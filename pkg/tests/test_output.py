import csv
import json

import pytest

from clusterdet.config import config_from_dict, scenario1
from clusterdet.errors import OutputError
from clusterdet.output import emit, result_from_json, result_to_json
from clusterdet.studies import STUDIES, run_case_study_1, run_case_study_2, run_case_study_3


@pytest.fixture(scope="module")
def study3():
    return run_case_study_3(scenario1(trials=4, iterations=6))


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def test_ser_csv_schema(tmp_path, study3):
    paths = emit(study3, tmp_path)
    assert tmp_path / "result.json" in paths
    rows = _read_csv(tmp_path / "ser_gs_proposed.csv")
    assert rows[0] == ["iteration", "ser", "stderr", "method"]
    assert len(rows) == 1 + 7
    curve = study3.curve("GS-proposed")
    # shortest round-trip repr parses back to the identical double
    assert [float(r[1]) for r in rows[1:]] == list(curve.ser)
    assert [float(r[2]) for r in rows[1:]] == list(curve.stderr)
    assert {r[3] for r in rows[1:]} == {"GS-proposed"}
    raw = (tmp_path / "ser_gs_proposed.csv").read_bytes()
    assert b"\r\n" not in raw and raw.endswith(b"\n")


def test_cdf_and_heatmap_csv(tmp_path):
    emit(run_case_study_2(scenario1(trials=5)), tmp_path / "s2")
    rows = _read_csv(tmp_path / "s2" / "cdf_kappa_psi.csv")
    assert rows[0] == ["value", "probability", "matrix"] and len(rows) == 6
    assert float(rows[-1][1]) == 1.0 and rows[1][2] == "kappa_Psi"
    emit(run_case_study_1(scenario1()), tmp_path / "s1")
    rows = _read_csv(tmp_path / "s1" / "heatmap.csv")
    assert rows[0] == ["row", "col", "db"] and len(rows) == 1 + 256


def test_json_is_canonical_and_round_trips(tmp_path, study3):
    emit(study3, tmp_path, formats=("json",))
    text = (tmp_path / "result.json").read_text(encoding="utf-8")
    obj = json.loads(text)
    assert obj["schema_version"] == "1" and obj["study"] == "study3"
    assert list(obj) == sorted(obj)
    assert result_from_json(text).to_dict() == study3.to_dict()
    assert not list(tmp_path.glob("*.csv"))


def test_config_echo_reproduces_payload(study3):
    cfg = config_from_dict(study3.config)
    assert STUDIES[study3.study](cfg).numeric_payload() == study3.numeric_payload()


def test_unknown_format_rejected(tmp_path, study3):
    with pytest.raises(ValueError):
        emit(study3, tmp_path, formats=("xml",))


def test_io_failure_names_path(tmp_path, study3):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError, match="file"):
        emit(study3, blocker / "out")
    (tmp_path / "out").mkdir()
    (tmp_path / "out" / "result.json").mkdir()
    with pytest.raises(OutputError, match="result.json"):
        emit(study3, tmp_path / "out")


def test_result_json_rejects_nan(study3):
    bad = study3.__class__(**{**study3.__dict__, "summary": {"x": float("nan")}})
    with pytest.raises(ValueError):
        result_to_json(bad)
