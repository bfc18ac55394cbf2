import functools

import numpy as np
import pytest

from gvstar.acm import build_acm
from gvstar.chart import Grid
from gvstar.geometry import frenet
from gvstar.scenario import load_scenario


@functools.lru_cache(maxsize=None)
def scenario(name):
    return load_scenario(name)


@functools.lru_cache(maxsize=None)
def frame(name, n):
    sc = scenario(name)
    return frenet(sc.metric(), sc.reeb(), Grid.make(sc.box, n), k_cut=sc.k_cut, unit_tol=1e-8)


@functools.lru_cache(maxsize=None)
def structure(name, n):
    return build_acm(frame(name, n))


def interior(F, fraction=0.15):
    return F.grid.box_mask(F.grid.box.shrink(fraction))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def _criterion_key(line):
    label = line.split()[1].rstrip(":")
    digits = label.rstrip("abcdefghijklmnopqrstuvwxyz")
    return int(digits), label[len(digits):]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_key):
            terminalreporter.write_line(line)
