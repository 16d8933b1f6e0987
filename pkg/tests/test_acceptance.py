"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import subprocess
import sys

import pytest

import conftest
from omlevy.validation import CRITERIA, criterion_determinism

SEED = 0
_done = {}


def _check(number, **kw):
    if number == 11:
        result = criterion_determinism(SEED, _done)
    else:
        result = CRITERIA[number](SEED, **kw)
    _done[number] = result
    line = result.line()
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert result.passed, line


def test_criterion_01_small_jump_mean():
    _check(1)


def test_criterion_02_global_velocities():
    _check(2)


def test_criterion_03_action_floor():
    _check(3)


def test_criterion_04_oracle_equivalence():
    _check(4)


def test_criterion_05_hp_el_consistency():
    _check(5)


def test_criterion_06_action_lower_bound():
    _check(6)


def test_criterion_07_gradient():
    _check(7)


def test_criterion_08_jump_law():
    _check(8)


def test_criterion_09_tube_ratio():
    _check(9, threads=2)


def test_criterion_10_bridge_band():
    _check(10, threads=2)


def test_criterion_11_determinism():
    _check(11)


def _validate(*args):
    cmd = [sys.executable, "-m", "omlevy", "--seed", str(SEED), "validate", *args]
    return subprocess.run(cmd, capture_output=True, check=False)


@pytest.mark.parametrize("threads", ["1", "3"])
def test_validate_reports_are_byte_identical(threads):
    only = "--only=1,2,3,4,5,6,7,8,10,11"
    first = _validate(only)
    second = _validate(only, "--threads", threads)
    assert first.returncode == 0, first.stdout.decode() + first.stderr.decode()
    assert first.stdout == second.stdout
