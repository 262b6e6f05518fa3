"""Acceptance suite: the shipped default config through ``compdyn verify``, twice.

The first run supplies criteria 1-11 (parsed from verify_summary.txt); the
second run, same seed, checks criterion 12 by comparing every artifact byte
for byte.  Expect roughly twice the full-pipeline runtime.
"""

import filecmp
import os

import pytest

from compdyn import cli
from compdyn.acceptance import TITLES


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("verify")
    codes = {}
    for name in ("first", "second"):
        codes[name] = cli.main(["verify", "--out", str(base / name), "--seed", "0"])
    return base, codes


def _summary(base):
    lines = (base / "first" / "verify_summary.txt").read_text().splitlines()
    out = {}
    for line in lines:
        _, num, verdict, rest = line.split(None, 3)
        out[int(num)] = (verdict == "PASS", line)
    return out


@pytest.mark.parametrize("number", range(1, 12))
def test_criterion(runs, number):
    base, _ = runs
    passed, line = _summary(base)[number]
    print(line)
    assert passed, line


def test_criterion_12_determinism(runs):
    base, _ = runs
    a, b = base / "first", base / "second"
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b))
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    ok = not mismatch and not errors
    print(f"criterion 12 {'PASS' if ok else 'FAIL'}  {TITLES[12]}: "
          f"{len(names)} artifacts compared, mismatched {mismatch + errors}")
    assert ok


def test_verify_exit_code(runs):
    _, codes = runs
    assert codes["first"] == codes["second"]
    assert codes["first"] == 0
