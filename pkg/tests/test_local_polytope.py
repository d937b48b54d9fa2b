import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bell_lab.errors import CorrelationRangeError, ModelFileError, TooManySettingsError, WrongArityError
from bell_lab.hv_models import ModelKind, expectation_over_lambda
from bell_lab.local_polytope import (
    CorrelationTable,
    anticorrelation_table,
    chsh_local_max,
    enumerate_strategies,
    is_local,
    load_table,
    singlet_table,
    strategy_matrix,
    table_from_dict,
    zero_table,
)
from bell_lab.quantum_oracle import SettingPair

angles = st.floats(0, 2 * math.pi, allow_nan=False, exclude_max=True)


def reconstruct(result):
    """Contract the certificate against the strategy rows directly (no design matrix)."""
    t = result.table
    n1 = len(t.settings1)
    S = result.strategies.astype(float)
    w = result.weights
    got = {k: float(w @ (S[:, k[0]] * S[:, n1 + k[1]])) for k in t.entries}
    m1 = [float(w @ S[:, i]) for i in range(n1)]
    m2 = [float(w @ S[:, n1 + j]) for j in range(len(t.settings2))]
    return got, m1, m2


def assert_certificate(result, tol=1e-9):
    assert result.local
    w = result.weights
    assert w.min() >= 0 and math.fsum(w) == pytest.approx(1.0, abs=1e-12)
    got, m1, m2 = reconstruct(result)
    t = result.table
    for k, v in t.entries.items():
        assert abs(got[k] - v) <= tol
    assert np.abs(np.subtract(m1, t.means1)).max() <= tol
    assert np.abs(np.subtract(m2, t.means2)).max() <= tol


@pytest.mark.parametrize("n1, n2, count", [(1, 1, 4), (2, 2, 16), (3, 3, 64)])
def test_strategy_counts(n1, n2, count):
    strategies = enumerate_strategies(range(n1), range(n2))
    assert len(strategies) == count
    rows = {s.as_row() for s in strategies}
    assert len(rows) == count
    assert rows == {tuple(r) for r in itertools.product((1, -1), repeat=n1 + n2)}


def test_enumeration_bound():
    with pytest.raises(TooManySettingsError):
        strategy_matrix(13, 12)
    with pytest.raises(TooManySettingsError):
        is_local(zero_table(range(13), range(12)))


def test_singlet_chsh_table_is_nonlocal():
    res = is_local(singlet_table())
    assert not res.local and res.weights is None
    assert res.chsh_witness["value"] == pytest.approx(-2 * math.sqrt(2), abs=1e-12)
    with pytest.raises(ValueError):
        res.to_model()


def test_anticorrelation_table_is_local():
    res = is_local(anticorrelation_table())
    assert_certificate(res)
    # independent construction: uniform over s in {+-1}^n with wing 2 = -s
    n = len(res.table.settings1)
    S = np.array(list(itertools.product((1, -1), repeat=n)), dtype=float)
    E12 = -(S.T @ S) / len(S)
    np.testing.assert_allclose(np.diag(E12), -1.0)
    assert S.mean(axis=0).tolist() == [0.0] * n


def test_zero_table_uniform():
    res = is_local(zero_table())
    assert_certificate(res)
    np.testing.assert_allclose(res.weights, 1 / 16)


def test_nonzero_means_are_targets():
    # E1 = E2 = 1 forces every outcome to +1, hence E12 = +1 everywhere
    ok = CorrelationTable((0.0,), (1.0,), {(0, 0): 1.0}, (1.0,), (1.0,))
    assert_certificate(is_local(ok))
    bad = CorrelationTable((0.0,), (1.0,), {(0, 0): -1.0}, (1.0,), (1.0,))
    res = is_local(bad)
    assert not res.local and res.residual > 0.5


def test_table_validation():
    with pytest.raises(CorrelationRangeError):
        CorrelationTable((0.0,), (0.0,), {(0, 0): 1.2})
    with pytest.raises(ValueError):
        CorrelationTable((0.0,), (0.0,), {(1, 0): 0.0})


def test_certificate_round_trips_through_hv_models(rng):
    for _ in range(10):
        w = rng.dirichlet(np.ones(16))
        S = strategy_matrix(2, 2).astype(float)
        s1, s2 = (0.0, 1.0), (0.4, 2.5)
        entries = {(i, j): float(w @ (S[:, i] * S[:, 2 + j])) for i in range(2) for j in range(2)}
        table = CorrelationTable(s1, s2, entries, [float(w @ S[:, i]) for i in range(2)],
                                 [float(w @ S[:, 2 + j]) for j in range(2)])
        res = is_local(table)
        assert_certificate(res)
        model = res.to_model()
        assert model.kind is ModelKind.DETERMINISTIC
        for (i, j), v in entries.items():
            got = expectation_over_lambda(model, "E12", SettingPair(s1[i], s2[j]))
            assert got == pytest.approx(v, abs=1e-9)
        for i in range(2):
            assert expectation_over_lambda(model, "E1", s1[i]) == pytest.approx(table.means1[i], abs=1e-9)


def test_monotone_under_restriction():
    grid = (0.0, math.pi / 4, math.pi / 2)
    full = singlet_table(grid, grid)
    assert not is_local(full).local
    local = anticorrelation_table((0.0, 0.7, 1.9, 3.0))
    assert is_local(local).local
    for k1 in range(1, 5):
        for keep1 in itertools.combinations(range(4), k1):
            for keep2 in ((0,), (1, 3), (0, 2, 3)):
                sub = is_local(local.restrict(keep1, keep2))
                assert_certificate(sub)
    # single-setting-per-wing singlet tables are always local
    for i, j in itertools.product(range(3), repeat=2):
        assert_certificate(is_local(full.restrict([i], [j])))


def test_chsh_local_max_examples():
    assert chsh_local_max((0, math.pi / 2), (math.pi / 4, 3 * math.pi / 4)) == 2.0
    assert chsh_local_max((0.3, 0.3), (1.0, 1.0)) == 2.0
    with pytest.raises(WrongArityError):
        chsh_local_max((0, 1, 2), (0, 1))


@given(angles, angles, angles, angles)
@settings(max_examples=100)
def test_chsh_local_max_property(a, a2, b, b2):
    assert chsh_local_max((a, a2), (b, b2)) == 2.0


def test_table_file(tmp_path):
    doc = {
        "settings": {"wing1": [0.0, math.pi / 2], "wing2": [math.pi / 4, 3 * math.pi / 4]},
        "correlations": [
            {"a": e["a"], "b": e["b"], "value": e["value"]}
            for e in singlet_table().to_dict()["correlations"]
        ],
    }
    path = tmp_path / "t.json"
    path.write_text(json.dumps(doc))
    table = load_table(path)
    assert table.means1 == (0.0, 0.0)
    assert not is_local(table).local
    with pytest.raises(ModelFileError):
        table_from_dict(dict(doc, bogus=1))
    bad = json.loads(json.dumps(doc))
    bad["correlations"][0]["a"] = 0.1
    with pytest.raises(ModelFileError):
        table_from_dict(bad)
    with pytest.raises(ModelFileError):
        load_table(tmp_path / "missing.json")


def test_result_dict():
    doc = is_local(zero_table()).to_dict()
    assert doc["verdict"] == "local"
    assert len(doc["certificate"]) == 16
    json.dumps(doc)
    doc = is_local(singlet_table()).to_dict()
    assert doc["verdict"] == "nonlocal" and "certificate" not in doc
    assert abs(doc["witness"]["value"]) == pytest.approx(2 * math.sqrt(2))
