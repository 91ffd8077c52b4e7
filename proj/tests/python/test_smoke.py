import json
import math

import numpy as np
import pytest

import idmfit


def closed_form(a01, a02, a12, d):
    p00 = math.exp(-(a01 + a02) * d)
    p01 = a01 / (a01 + a02 - a12) * (math.exp(-a12 * d) - p00)
    return p00, p01


def test_constant_hazards_match_closed_form():
    m = idmfit.constant_hazard_model(0.04, 0.02, 0.10)
    p00, p01, p02 = idmfit.transition_probabilities(m, 60.0, 70.0)
    e00, e01 = closed_form(0.04, 0.02, 0.10, 10.0)
    assert p00 == pytest.approx(e00, rel=1e-8)
    assert p01 == pytest.approx(e01, rel=1e-6)
    assert p00 + p01 + p02 == pytest.approx(1.0, abs=1e-12)

    risk = idmfit.risk_curve(m, [70.0])["estimate"][0]
    assert risk == pytest.approx(0.04 / 0.06 * (1 - e00), rel=1e-6)
    prev = idmfit.prevalence_curve(m, [70.0])["estimate"][0]
    assert prev == pytest.approx(e01 / (e00 + e01), rel=1e-6)


def test_spline_basis_properties():
    g = idmfit.KnotGrid.equidistant(60.0, 100.0, 5)
    assert g.size == 9
    ts = np.linspace(60.0, 100.0, 41)
    for t in ts:
        i = np.asarray(idmfit.ispline_basis(g, float(t)))
        assert np.all(i >= -1e-15) and np.all(i <= 1 + 1e-12)
    assert np.allclose(idmfit.ispline_basis(g, 60.0), 0.0, atol=1e-12)
    assert np.allclose(idmfit.ispline_basis(g, 100.0), 1.0, atol=1e-12)
    # each M-spline integrates to one
    fine = np.linspace(60.0, 100.0, 4001)
    m = np.array([idmfit.mspline_basis(g, float(t)) for t in fine])
    assert np.allclose(np.trapezoid(m, fine, axis=0), 1.0, atol=1e-4)
    p = idmfit.penalty_matrix(g)
    assert p.shape == (9, 9)
    assert np.allclose(p, p.T)


def test_model_json_round_trip():
    m = idmfit.constant_hazard_model(0.01, 0.02, 0.05)
    again = idmfit.Model.from_json(m.to_json())
    assert again.to_json() == m.to_json()


def test_errors_are_python_exceptions():
    with pytest.raises(idmfit.ConfigError):
        idmfit.Model.from_json("{")
    with pytest.raises(idmfit.Error):
        idmfit.simulate(json.dumps({"n": 10}))  # seed missing


def test_simulate_fit_predict():
    cfg = {
        "n": 300,
        "seed": 5,
        "covariates": [{"name": "x", "distribution": "bernoulli", "p": 0.5, "hr": {"01": 2, "02": 1, "12": 1}}],
        "conclusive_at_death": 0.25,
    }
    sim = idmfit.simulate(json.dumps(cfg))
    assert sim["exams_csv"].startswith("subject_id,")
    rerun = idmfit.simulate(json.dumps(cfg))
    assert rerun["exams_csv"] == sim["exams_csv"]
    assert rerun["records_csv"] == sim["records_csv"]

    fitted = idmfit.fit_records_csv(sim["records_csv"], covariates=["x"], knots=3)
    assert fitted.gradient_check_error < 1e-3
    hrs = fitted.hazard_ratios()
    assert [h["transition"] for h in hrs] == ["01", "02", "12"]
    assert 1.0 < hrs[0]["hr"] < 4.0

    again = idmfit.FittedModel.from_json(fitted.to_json())
    assert again.loglik == fitted.loglik

    ages = list(range(60, 91, 5))
    curve = fitted.curve_with_bands("risk", ages, draws=200, seed=1, profile={"x": 1.0})
    est, lo, hi = (np.asarray(curve[k]) for k in ("estimate", "lo95", "hi95"))
    assert np.all(np.diff(est) >= -1e-12)
    assert np.all(lo <= est + 1e-12) and np.all(est <= hi + 1e-12)
    base = idmfit.risk_curve(fitted.model, ages)["estimate"]
    assert est[-1] > base[-1]  # x=1 raises onset

    p = idmfit.conditional_probability(fitted.model, 70.0, years=10.0)
    assert 0.0 < p < 1.0
