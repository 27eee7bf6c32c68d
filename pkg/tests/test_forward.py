import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from cannings_asg import PopulationParams, SymmetricDirichlet, parse_weight_model
from cannings_asg.exact import forward_transition_matrix
from cannings_asg.forward import (Outcome, estimate_fixation_forward, frequency_after,
                                  run_to_absorption, sample_frequency_after, step_frequency,
                                  wildtype_success_prob)
from cannings_asg.stats import ParameterError, chisquare_pvalue, derive_stream


def test_success_prob_examples():
    w = np.array([0.2, 0.3, 0.5])
    assert wildtype_success_prob(0, w, 0.3) == 0
    assert wildtype_success_prob(3, w, 0.3) == 1
    assert wildtype_success_prob(1, np.array([0.5, 0.5]), 0.5) == pytest.approx(1 / 3)
    with pytest.raises(ParameterError):
        wildtype_success_prob(1, np.array([0.7, 0.7]), 0.1)


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=20), st.floats(0, 0.99))
def test_success_prob_monotone(raw, s):
    w = np.array(raw) / sum(raw)
    probs = [wildtype_success_prob(k, w, s) for k in range(len(w) + 1)]
    assert all(0 <= p <= 1 for p in probs)
    assert all(a <= b + 1e-15 for a, b in zip(probs, probs[1:]))
    # selection only ever hurts the wildtype
    neutral = [wildtype_success_prob(k, w, 0.0) for k in range(len(w) + 1)]
    assert all(p <= q + 1e-15 for p, q in zip(probs, neutral))


def test_step_boundaries():
    p = PopulationParams(5, 0.3)
    rng = np.random.default_rng(0)
    assert step_frequency(0, p, rng) == 0
    assert step_frequency(5, p, rng) == 5


def test_one_step_law_n2():
    p = PopulationParams(2, 0.5)
    k1 = frequency_after(p, 1, 1, 10 ** 6, derive_stream(1, 0))
    hat = np.mean(k1 == 0)
    assert abs(hat - 4 / 9) <= 3 * np.sqrt(hat * (1 - hat) / k1.size)
    rng = derive_stream(1, 1)
    slow = np.array([step_frequency(1, p, rng) for _ in range(20_000)])
    assert chisquare_pvalue(np.bincount(slow, minlength=3), [4 / 9, 4 / 9, 1 / 9]) > 1e-3


def test_absorption_trivial():
    p = PopulationParams(4, 0.2)
    rng = np.random.default_rng(0)
    assert run_to_absorption(p, 0, 10, rng).state is Outcome.BENEFICIAL_FIXED
    out = run_to_absorption(p, 4, 10, rng)
    assert out.state is Outcome.BENEFICIAL_LOST and out.generations == 0


def test_absorption_literal_loop_n2():
    p = PopulationParams(2, 0.5)
    rng = derive_stream(3, 0)
    runs = [run_to_absorption(p, 1, 10 ** 6, rng).state for _ in range(20_000)]
    hat = np.mean([r is Outcome.BENEFICIAL_FIXED for r in runs])
    assert abs(hat - 0.8) <= 3 * np.sqrt(0.16 / len(runs))


def test_estimate_n2():
    r = estimate_fixation_forward(PopulationParams(2, 0.5), 1, 10 ** 6, 10 ** 6, seed=4)
    assert r.ci95[0] <= 0.8 <= r.ci95[1]
    assert r.details["censored"] == 0


def test_estimate_trivial_start():
    r = estimate_fixation_forward(PopulationParams(50, 0.1), 0, 10, seed=0)
    assert r.point == 1.0 and r.stderr == 0


def wf_absorption_dense(n, s, k0):
    """Independent oracle: dense Binomial matrix and a linear solve."""
    k = np.arange(1, n)
    p = (1 - s) * k / ((1 - s) * k + (n - k))
    q = sps.binom.pmf(np.arange(n + 1)[None, :], n, p[:, None])
    a = np.eye(n - 1) - q[:, 1:n]
    return np.linalg.solve(a, q[:, 0])[k0 - 1]


def test_estimate_against_dense_solve():
    n, s = 1000, 0.05
    ref = wf_absorption_dense(n, s, n - 1)
    r = estimate_fixation_forward(PopulationParams(n, s), n - 1, 10 ** 5, seed=8)
    assert abs(r.point - ref) <= 3 * r.stderr
    assert not r.details["unreliable"]


def test_censoring_is_reported():
    r = estimate_fixation_forward(PopulationParams(30, 0.01), 15, 2000, max_gens=20, seed=0)
    assert r.details["censored"] > 0.01 * 2000 and r.details["unreliable"]


def test_dirichlet_kernel_matches_quadrature_matrix():
    p = PopulationParams(5, 0.2, SymmetricDirichlet(0.5))
    row = np.linalg.matrix_power(forward_transition_matrix(p).entries, 3)[2]
    k3 = sample_frequency_after(p, 2, 3, 200_000, seed=6)
    obs = np.bincount(k3, minlength=6)
    assert chisquare_pvalue(obs, row) > 1e-3


def test_uniform_y_kernel_matches_literal_steps():
    p = PopulationParams(6, 0.25, parse_weight_model("dirichlet-type:uniform:0.5:2"))
    fast = sample_frequency_after(p, 3, 2, 40_000, seed=2)
    rng = derive_stream(2, 99)
    slow = []
    for _ in range(20_000):
        k = 3
        for _ in range(2):
            k = step_frequency(k, p, rng)
        slow.append(k)
    table = np.array([np.bincount(fast, minlength=7), np.bincount(slow, minlength=7)])
    table = table[:, table.sum(axis=0) > 0]
    assert sps.chi2_contingency(table).pvalue > 1e-3


def test_thread_count_does_not_change_results():
    p = PopulationParams(200, 0.05, SymmetricDirichlet(1.0))
    a = estimate_fixation_forward(p, 199, 20_000, seed=11, threads=1)
    b = estimate_fixation_forward(p, 199, 20_000, seed=11, threads=4)
    assert a == b
    assert np.array_equal(sample_frequency_after(p, 100, 4, 9000, 3, threads=1),
                          sample_frequency_after(p, 100, 4, 9000, 3, threads=3))
