from __future__ import annotations

import numpy as np
import pytest

from visco_emc import tensors as T
from visco_emc.materials import EquilibriumModel, MaterialParams, ViscoBranch


def random_sym(rng, scale=1.0):
    A = scale * rng.standard_normal((3, 3))
    return T.from_matrix(0.5 * (A + A.T))


def random_F(rng, scale=0.2):
    while True:
        F = np.eye(3) + scale * rng.standard_normal((3, 3))
        if np.linalg.det(F) > 0.2:
            return F


def random_spd(rng, scale=0.2):
    return T.gram(random_F(rng, scale))


def lblock_material(kind="HS"):
    E = 25000.0
    c1 = c2 = E / 6.0
    return MaterialParams(1000.0, EquilibriumModel(c1, c2), (ViscoBranch(kind, c1, 0.1 * c1, 1.0),))


def shear_material():
    E = 625.72e3
    mu = 536.224e3
    return MaterialParams(1000.0, EquilibriumModel(E / 6, E / 6), (ViscoBranch("HS", mu, 0.5 * mu),))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list = []


def record_verdict(name: str, ok: bool, detail: str) -> None:
    line = f"{name}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
