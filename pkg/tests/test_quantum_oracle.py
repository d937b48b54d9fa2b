import math

import numpy as np
import pytest

from bell_lab.errors import CorrelationRangeError
from bell_lab.prob_core import (
    PAIRS,
    conditional_second_given_first,
    conditional_under_exchangeability,
    joint_from_moments,
)
from bell_lab.quantum_oracle import (
    Direction,
    SettingPair,
    chsh_value,
    fold_angle,
    singlet_conditional,
    singlet_correlation,
    singlet_joint,
    singlet_marginal,
    singlet_moments,
)
from helpers import THETA_GRID

# independent route: projective spin measurements on the singlet state vector
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SINGLET = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)


def projector(angle, outcome):
    n_sigma = math.cos(angle) * SZ + math.sin(angle) * SX
    return 0.5 * (np.eye(2) + outcome * n_sigma)


def state_vector_joint(a, b, r, q):
    op = np.kron(projector(a, r), projector(b, q))
    return float(np.real(SINGLET.conj() @ op @ SINGLET))


def test_direction_folding():
    assert Direction(-1.0).angle == pytest.approx(2 * math.pi - 1)
    assert Direction(2 * math.pi).angle == 0.0
    assert 0 <= fold_angle(-1e-300) < 2 * math.pi
    assert SettingPair(Direction(0.1), Direction(2 * math.pi - 0.1)).theta_ab == pytest.approx(0.2)
    assert SettingPair.from_theta(-1.0).theta_ab == pytest.approx(1.0)


@pytest.mark.parametrize("theta, r, q, expected", [
    (0.0, 1, 1, 0.0),
    (math.pi / 2, 1, -1, 0.25),
    (math.pi, 1, 1, 0.5),
])
def test_singlet_joint_examples(theta, r, q, expected):
    assert singlet_joint(SettingPair.from_theta(theta), r, q) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("a, b", [(0.0, 0.3), (1.2, 0.4), (2.0, 5.5), (0.0, math.pi)])
def test_singlet_joint_matches_state_vector(a, b):
    s = SettingPair(a, b)
    for r, q in PAIRS:
        assert singlet_joint(s, r, q) == pytest.approx(state_vector_joint(a, b, r, q), abs=1e-12)


@pytest.mark.parametrize("theta, m12", [(0.0, -1.0), (math.pi / 2, 0.0), (math.pi / 3, -0.5)])
def test_singlet_moments_examples(theta, m12):
    m = singlet_moments(SettingPair.from_theta(theta))
    assert (m.m1, m.m2) == (0.0, 0.0)
    assert m.m12 == pytest.approx(m12, abs=1e-15)


def test_singlet_marginals():
    assert singlet_marginal(1, 1) == 0.5
    assert singlet_marginal(2, -1) == 0.5
    assert singlet_marginal(1, 1) + singlet_marginal(1, -1) == 1.0
    with pytest.raises(ValueError):
        singlet_marginal(3, 1)


@pytest.mark.parametrize("theta, r, q, expected", [
    (0.0, 1, -1, 1.0),
    (math.pi / 2, 1, 1, 0.5),
    (math.pi / 2, -1, 1, 0.5),
    (math.pi / 3, 1, 1, 0.25),
])
def test_singlet_conditional_examples(theta, r, q, expected):
    assert singlet_conditional(SettingPair.from_theta(theta), r, q) == pytest.approx(expected, abs=1e-15)


def test_grid_coherence():
    worst = 0.0
    for theta in THETA_GRID:
        s = SettingPair.from_theta(theta)
        m = singlet_moments(s)
        j = joint_from_moments(m)
        for r, q in PAIRS:
            worst = max(worst, abs(singlet_joint(s, r, q) - j[r, q]))
            worst = max(worst, abs(singlet_conditional(s, r, q) - conditional_second_given_first(m, r, q)))
            worst = max(worst, abs(singlet_conditional(s, r, q) - conditional_under_exchangeability(m, r, q)))
    assert worst <= 1e-12


def test_symmetries():
    for theta in np.linspace(0, math.pi, 37):
        s = SettingPair.from_theta(theta)
        swapped = SettingPair(s.b, s.a)
        for r, q in PAIRS:
            assert singlet_joint(s, r, q) == singlet_joint(s, -r, -q)
            assert singlet_joint(s, r, q) == singlet_joint(swapped, q, r)


def test_chsh_examples():
    val = chsh_value(0, math.pi / 2, math.pi / 4, 3 * math.pi / 4, singlet_correlation)
    assert val == pytest.approx(-2 * math.sqrt(2), abs=1e-12)
    assert chsh_value(0, 1, 2, 3, lambda s: 0.0) == 0.0
    assert chsh_value(0, 1, 2, 3, lambda s: 1.0) == 2.0
    with pytest.raises(CorrelationRangeError):
        chsh_value(0, 1, 2, 3, lambda s: 1.5)


def test_chsh_sweep_peaks_at_tsirelson():
    # a = 0, a' = 2x, b = x, b' = 3x covers the standard family
    xs = np.linspace(0, math.pi, 721)
    vals = [abs(chsh_value(0, 2 * x, x, 3 * x, singlet_correlation)) for x in xs]
    assert max(vals) == pytest.approx(2 * math.sqrt(2), abs=1e-5)
    assert max(vals) <= 2 * math.sqrt(2) + 1e-12
