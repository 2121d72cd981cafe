import json
import math

import numpy as np
import pytest

import shiftlab

PAIR = {
    "points": ["a", "b"],
    "p_tr": [0.5, 0.5],
    "p_te": [0.9, 0.1],
    "f_tr": [0, 0],
    "f_te": [0, 1],
    "label_count": 2,
}


@pytest.fixture
def pair():
    return shiftlab.pair_from_json(json.dumps(PAIR))


def test_exact_metrics(pair):
    loss = shiftlab.LossFunction.zero_one()
    h = shiftlab.enumerate_all_labelings(2, 2)
    assert len(h) == 4
    assert h.labels() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert shiftlab.exact_discrepancy(pair, h, loss) == pytest.approx(0.4, abs=1e-12)
    assert shiftlab.prop1_discrepancy(pair, 1.0) == pytest.approx(0.4, abs=1e-12)
    assert shiftlab.l1_distance(pair) == pytest.approx(0.8, abs=1e-12)
    lo, hi = shiftlab.exact_concept_shift(pair, loss)
    assert (lo, hi) == (pytest.approx(0.1), pytest.approx(0.5))
    report = shiftlab.exact_shift_report(pair, h, loss)
    assert report["method_tag"] == "exact"
    assert report["m_cov"] == pytest.approx(0.4)


def test_losses():
    tv = shiftlab.LossFunction.total_variation()
    assert tv([0.7, 0.3], [0.3, 0.7]) == pytest.approx(0.4)
    zo = shiftlab.LossFunction.parse("zero-one", 2.0)
    assert zo([1.0, 0.0], [0.0, 1.0]) == 2.0
    with pytest.raises(ValueError):
        tv([0.5, 0.5], [1.0, 0.0, 0.0])


def test_bad_pair_is_a_value_error():
    bad = dict(PAIR, p_tr=[0.5, 0.6])
    with pytest.raises(shiftlab.ValidationError):
        shiftlab.pair_from_json(json.dumps(bad))


def test_kl_decomposition_sums_to_total():
    tr = np.array([[0.4, 0.1], [0.1, 0.4]])
    te = np.full((2, 2), 0.25)
    d = shiftlab.kl_decomposition(tr, te)
    direct = float(np.sum(tr * np.log(tr / te)))
    assert d["total_kl"] == pytest.approx(direct, abs=1e-12)
    assert d["concept_kl"] + d["covariate_kl"] == pytest.approx(d["total_kl"], abs=1e-12)
    with pytest.raises(shiftlab.ComputationError):
        shiftlab.kl_decomposition(tr, np.array([[0.5, 0.0], [0.25, 0.25]]))


def test_rademacher_two_points_all_binary_functions():
    values = [[0, 0], [0, 1], [1, 0], [1, 1]]
    est = shiftlab.empirical_rademacher(values, draws=10, seed=3)
    assert est["exact"] is True
    assert est["value"] == 1.5


def test_bounds_and_metrics():
    up = shiftlab.population_upper_bound(0.1, 0.4, 0.1)
    assert up["bound_value"] == pytest.approx(0.6)
    lo = shiftlab.population_lower_bound(0.0, 0.1, 0.5)
    assert lo["bound_value"] == pytest.approx(0.4)
    residual = shiftlab.empirical_residual(10000, 10000, 1.0, 0.05)
    assert residual == pytest.approx(9 * math.sqrt(math.log(120) / 20000), abs=1e-12)
    assert residual == pytest.approx(0.1393, abs=1e-4)
    m = shiftlab.dg_metrics([80.95, 79.96, 73.30, 76.27])
    assert abs(m["average"] - 77.62) <= 0.005
    assert abs(m["std_population"] - 3.05) <= 0.01


def test_verify_bounds(pair):
    v = shiftlab.verify_bounds(pair, shiftlab.enumerate_all_labelings(2, 2), shiftlab.LossFunction.zero_one())
    assert v["violations"] == []
    assert v["hypotheses_checked"] == 4


def test_cli_round_trip(tmp_path):
    path = tmp_path / "pair.json"
    path.write_text(json.dumps(PAIR))
    code, out, err = shiftlab.run_cli(["shift-exact", "--pair", str(path)])
    assert code == 0, err
    assert json.loads(out)["results"]["m_cpt_max"] == pytest.approx(0.5)
    code, _, err = shiftlab.run_cli(["shift-exact", "--pair", str(tmp_path / "missing.json")])
    assert code == 1
    assert "missing.json" in err
