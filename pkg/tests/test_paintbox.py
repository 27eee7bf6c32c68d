import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cannings_asg import (ConstantY, DirichletType, GammaY, PopulationParams, SymmetricDirichlet,
                          UniformY, WrightFisher, parse_weight_model, rho_squared)
from cannings_asg.paintbox import (analytic_moment, check_regularity, empirical_moment,
                                   h_sequence, sample_first_weight, sample_weights)
from cannings_asg.stats import ParameterError, derive_stream


@pytest.mark.parametrize("text", ["wf", "dirichlet:1", "dirichlet:0.25",
                                  "dirichlet-type:const:3", "dirichlet-type:gamma:2:1.5",
                                  "dirichlet-type:uniform:1:2"])
def test_grammar_roundtrip(text):
    model = parse_weight_model(text)
    assert str(model) == text
    assert parse_weight_model(str(model)) == model
    assert parse_weight_model(re.sub(r":1(?=:|$)", ":1.0", text)) == model


@pytest.mark.parametrize("text", ["", "dirichlet", "dirichlet:-1", "dirichlet-type:gamma:0:1",
                                  "dirichlet-type:uniform:2:1", "beta:1"])
def test_grammar_rejects(text):
    with pytest.raises(ParameterError):
        parse_weight_model(text)


def test_population_params():
    p = PopulationParams.from_exponent(10_000, 0.6)
    assert p.s == pytest.approx(10_000 ** -0.6)
    assert p.b == pytest.approx(0.6)
    for bad in [(1, 0.1), (10, 1.0), (10, -0.1)]:
        with pytest.raises(ParameterError):
            PopulationParams(*bad)


def test_deterministic_weights():
    rng = np.random.default_rng(0)
    assert sample_weights(WrightFisher(), 4, rng) == pytest.approx([0.25] * 4)
    assert sample_weights(DirichletType(ConstantY(3)), 5, rng) == pytest.approx([0.2] * 5)


def test_dirichlet_first_coordinate_uniform():
    rng = derive_stream(9, 0)
    x = np.array([sample_weights(SymmetricDirichlet(1.0), 2, rng)[0] for _ in range(100_000)])
    se = x.std() / np.sqrt(x.size)
    assert abs(x.mean() - 0.5) <= 3 * se


@given(st.sampled_from(["dirichlet:0.3", "dirichlet:5", "dirichlet-type:gamma:2:0.5",
                        "dirichlet-type:uniform:0.5:3"]), st.integers(2, 60),
       st.integers(0, 2 ** 32))
def test_weights_on_simplex(text, n, seed):
    w = sample_weights(parse_weight_model(text), n, np.random.default_rng(seed))
    assert w.shape == (n,) and np.all(w >= 0)
    assert abs(w.sum() - 1) <= 1e-12


def test_analytic_moments():
    assert analytic_moment(WrightFisher(), 10, 2) == pytest.approx(0.01)
    assert analytic_moment(SymmetricDirichlet(1.0), 2, 2) == pytest.approx(1 / 3)
    for a, n in [(0.5, 7), (2.0, 30)]:
        assert analytic_moment(SymmetricDirichlet(a), n, 2) == pytest.approx(
            (a + 1) / (n * (n * a + 1)))
    assert analytic_moment(DirichletType(UniformY(1, 2)), 5, 2) is None


def test_empirical_moments():
    r = empirical_moment(WrightFisher(), 10, 3, 100, derive_stream(0, 0))
    assert r.point == pytest.approx(1e-3) and r.stderr == 0
    r = empirical_moment(SymmetricDirichlet(1.0), 2, 2, 10 ** 6, derive_stream(0, 1))
    assert abs(r.point - 1 / 3) <= 3 * r.stderr
    r = empirical_moment(DirichletType(GammaY(2, 1)), 100, 1, 10 ** 4, derive_stream(0, 2))
    assert abs(r.point - 0.01) <= 3 * r.stderr


def test_beta_shortcut_matches_full_vector():
    # marginal from the Beta shortcut vs the first coordinate of full vectors
    rng = derive_stream(4, 0)
    model = SymmetricDirichlet(0.8)
    fast = sample_first_weight(model, 6, 20_000, rng)
    slow = np.array([sample_weights(model, 6, rng)[0] for _ in range(20_000)])
    from scipy.stats import ks_2samp
    assert ks_2samp(fast, slow).pvalue > 1e-3


def test_rho_squared():
    assert rho_squared(WrightFisher()) == 1
    assert rho_squared(SymmetricDirichlet(1.0)) == 2
    assert rho_squared(DirichletType(GammaY(2, 1))) == pytest.approx(1.5)
    assert rho_squared(DirichletType(UniformY(1, 3))) == pytest.approx((13 / 3) / 4)


def test_h_sequence():
    assert h_sequence(2) == 1
    assert h_sequence(10 ** 6) == 3


def test_regularity_wf_and_dirichlet():
    rep = check_regularity(WrightFisher(), [100, 1000])
    assert [r.m2_scaled for r in rep.rows] == pytest.approx([1.0, 1.0])
    assert all(r.moment_bound_ok for r in rep.rows)
    rep = check_regularity(SymmetricDirichlet(1.0), [1000])
    assert rep.rows[0].m2_scaled == pytest.approx(2 * 1000 / 1001)
    rep = check_regularity(SymmetricDirichlet(1.0), [100, 1000, 10_000])
    mohle = [r.mohle for r in rep.rows]
    assert mohle == sorted(mohle, reverse=True) and mohle[-1] < 1e-3


def test_regularity_empirical_gamma_like():
    rep = check_regularity(DirichletType(UniformY(1, 2)), [500], rng=derive_stream(1, 0))
    row = rep.rows[0]
    assert row.source == "empirical"
    assert row.m2_scaled == pytest.approx(rho_squared(DirichletType(UniformY(1, 2))), rel=0.02)
    assert rep.k_min == row.k_min
