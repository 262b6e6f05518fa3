import numpy as np
import pytest

from compdyn import cli, pipeline
from compdyn.config import parse_config
from compdyn.structure import DichotomyVerdict, VerdictTag

SMALL = """
[scenario]
name = "linear2"

[pipeline]
depth_schedule = [2, 4]
"""


def _write(tmp_path, text):
    path = tmp_path / "cfg.ini"
    path.write_text(text)
    return str(path)


def test_malformed_cone_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL + "\n[cone]\nmatrix = [[1, 0], [0]]\n")
    assert cli.main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_singular_cone_exit_2(tmp_path):
    cfg = _write(tmp_path, SMALL + "\n[cone]\nmatrix = [[1, 1], [1, 1]]\n")
    assert cli.main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_wrong_cone_dimension_exit_2(tmp_path):
    cfg = _write(tmp_path, SMALL + "\n[cone]\nmatrix = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]\n")
    assert cli.main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_missing_config_exit_2(tmp_path):
    assert cli.main(["recurrent", "--config", str(tmp_path / "absent.ini")]) == 2


def test_unknown_subcommand_exit_2():
    assert cli.main(["frobnicate"]) == 2


def test_classify_clean_exit_0(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["classify", "--config", _write(tmp_path, SMALL), "--out", str(out)]) == 0
    rows = (out / "components.csv").read_text().splitlines()
    assert rows[0] == "label,boxes,certified,verdict,margin,resolution"
    assert rows[1].split(",")[3] == "SingletonTrivial"
    assert (out / "flags.txt").read_text() == "no flags\n"
    written = parse_config((out / "config.ini").read_text())
    assert written.run.out == "." and written.scenario.name == "linear2"


def test_classify_violation_exit_1(tmp_path, monkeypatch):
    def fake(cone, points, *a, **kw):
        pts = np.atleast_2d(points)
        return DichotomyVerdict(VerdictTag.VIOLATION, 0.0, None, (pts[0], pts[0] + 1))
    monkeypatch.setattr(pipeline, "classify_component", fake)
    out = tmp_path / "o"
    assert cli.main(["classify", "--config", _write(tmp_path, SMALL), "--out", str(out)]) == 1
    assert "dichotomy component=0" in (out / "flags.txt").read_text()


def test_recurrent_artifacts_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL)
    for name in ("a", "b"):
        assert cli.main(["recurrent", "--config", cfg, "--out", str(tmp_path / name),
                         "--seed", "3"]) == 0
    for f in ("cover.csv", "edges.txt", "components.csv", "history.csv", "config.ini"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_depth_override(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["recurrent", "--config", _write(tmp_path, SMALL), "--out", str(out),
                     "--depth", "5"]) == 0
    assert parse_config((out / "config.ini").read_text()).pipeline.depth_schedule == [2, 4, 5]


@pytest.mark.parametrize("flag", ["--seed", "--depth"])
def test_non_integer_flags_exit_2(flag):
    assert cli.main(["recurrent", flag, "abc"]) == 2
