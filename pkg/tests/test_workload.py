import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmqueue.errors import EmptyProbInconsistent, NotCritical, Unstable
from mmqueue.service import Deterministic, Exponential, HyperExponential, moments
from mmqueue.workload import (
    HtModelSpec,
    ht_mean_workload,
    ht_model,
    ht_parametrize,
    ht_workload_law,
    make_model,
    mean_workload,
    offset_vector,
    qa_rhs,
    traffic_intensity,
)
from oracles import pollaczek_khinchine


def mm1(lam, dist=Exponential(1.0), c=1.0):
    return make_model([[0.0]], [lam], [c], [dist])


def test_mm1_traffic():
    assert traffic_intensity(mm1(0.8)) == pytest.approx(0.8)


def test_two_state_traffic(two_state_model):
    m = make_model([[-1, 1], [2, -2]], [0.9, 1.2], [1, 2], [Exponential(2.0)] * 2)
    assert traffic_intensity(m) == pytest.approx(0.375, rel=1e-14)
    # the hyperexponential fixture shares the same first moments
    np.testing.assert_allclose(two_state_model.h1, 0.5)
    assert traffic_intensity(two_state_model) == pytest.approx(0.375, rel=1e-14)


def test_identical_states_match_single_state():
    d = HyperExponential((0.4, 0.6), (1.0, 3.0))
    single = mm1(0.7, d, 1.5)
    rep = make_model([[-2, 2], [5, -5]], [0.7, 0.7], [1.5, 1.5], [d, d])
    assert traffic_intensity(rep) == pytest.approx(traffic_intensity(single), rel=1e-14)
    np.testing.assert_allclose(qa_rhs(rep), 0.0, atol=1e-15)
    assert ht_mean_workload(ht_model(rep)) == pytest.approx(ht_mean_workload(ht_model(single)), rel=1e-12)


def test_ht_parametrize_example():
    m10 = ht_parametrize(mm1(0.5), 10)
    assert m10.lam[0] == pytest.approx(0.9)
    assert traffic_intensity(m10) == pytest.approx(0.9, rel=1e-12)


def test_ht_parametrize_boundaries(two_state_model):
    assert np.all(ht_parametrize(two_state_model, 1).lam == 0)
    assert traffic_intensity(ht_parametrize(two_state_model, math.inf)) == pytest.approx(1.0, abs=1e-12)
    # idempotent on an already critical model
    hm = ht_model(two_state_model)
    assert traffic_intensity(ht_parametrize(hm.base, math.inf)) == pytest.approx(1.0, abs=1e-12)


def test_ht_parametrize_unstable_base():
    m = make_model([[-1, 1], [2, -2]], [3.0, 5.0], [1, 2], [Exponential(1.0)] * 2)
    assert traffic_intensity(m) > 1
    assert traffic_intensity(ht_parametrize(m, 20)) == pytest.approx(0.95, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10**6))
def test_ht_parametrize_load(N):
    m = make_model([[-1, 1], [2, -2]], [0.9, 1.2], [1, 2],
                   [Exponential(2.0), Deterministic(0.7)])
    assert abs(traffic_intensity(ht_parametrize(m, N)) - (1 - 1 / N)) <= 1e-12


def test_qa_rhs_single_state():
    assert qa_rhs(mm1(0.6)).tolist() == [0.0]


def test_qa_rhs_orthogonal(two_state_model):
    b = qa_rhs(two_state_model)
    assert np.any(np.abs(b) > 0.1)
    assert abs(two_state_model.pi @ b) <= 1e-12


@pytest.mark.parametrize("rho", [0.3, 0.7, 0.9])
@pytest.mark.parametrize(
    "dist", [Exponential(1.5), Deterministic(0.8), HyperExponential((0.2, 0.8), (0.5, 4.0))]
)
def test_single_state_reduction(rho, dist):
    h1, h2 = moments(dist)
    c = 1.7
    lam = rho * c / h1
    ew = mean_workload(mm1(lam, dist, c), [1 - rho])
    assert ew == pytest.approx(pollaczek_khinchine(lam, h1, h2, c), rel=1e-12)


def test_mm1_examples():
    assert mean_workload(mm1(0.8), [0.2]) == pytest.approx(4.0, rel=1e-12)
    assert mean_workload(mm1(0.8, Deterministic(1.0)), [0.2]) == pytest.approx(2.0, rel=1e-12)


def test_mean_workload_errors():
    with pytest.raises(Unstable):
        mean_workload(mm1(1.2), [0.0])
    with pytest.raises(EmptyProbInconsistent):
        mean_workload(mm1(0.8), [0.3])


def test_shift_invariance(two_state_model):
    m = two_state_model
    rho = traffic_intensity(m)
    # any p0 satisfying the empty-probability identity exactly
    p0 = np.array([0.5, 0.0])
    p0[1] = (m.c_inf * (1 - rho) - p0[0] * m.c[0]) / m.c[1]
    a = offset_vector(m)
    base = mean_workload(m, p0, a=a)

    def bracket(vec):
        return np.sum(vec * (m.pi * (m.lam * m.h1 - m.c) + p0 * m.c))

    for r in (1.0, -3.0):
        assert abs(bracket(a + r) - bracket(a)) <= 1e-9
        assert mean_workload(m, p0, a=a + r) == pytest.approx(base, rel=1e-9)


def test_ht_single_state():
    assert ht_mean_workload(ht_model(mm1(0.4))) == pytest.approx(1.0, rel=1e-12)
    assert ht_mean_workload(ht_model(mm1(0.4, Deterministic(1.0)))) == pytest.approx(0.5, rel=1e-12)
    law = ht_workload_law(ht_model(mm1(0.4)))
    assert law.mean == pytest.approx(1.0)


def test_ht_two_state_value(two_state_model):
    # hand evaluation: lam_hat = lam / 0.375, a solves Qa = c - lam_hat h1
    m = two_state_model
    lam_hat = np.array([0.9, 1.2]) / 0.375
    b = np.array([1.0, 2.0]) - lam_hat * 0.5
    a = np.array([0.0, b[0]])  # first row of Qa = b with a_1 = 0
    h2 = m.h2
    pi = np.array([2 / 3, 1 / 3])
    expected = np.sum(pi * (lam_hat * h2 / 2 + a * (lam_hat * 0.5 - [1.0, 2.0]))) / (4 / 3)
    assert ht_mean_workload(ht_model(m)) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.67, rel=1e-12)


def test_ht_linear_in_second_moment():
    # same h1 for every variant, so a stays fixed and E W_hat is affine in h2
    Q = [[-1, 1], [2, -2]]
    variants = [
        (Exponential(2.0), Exponential(2.0)),
        (Deterministic(0.5), HyperExponential((0.5, 0.5), (1.5, 3.0))),
    ]
    pts = []
    for s0, s1 in variants:
        hm = ht_model(make_model(Q, [0.9, 1.2], [1, 2], [s0, s1]))
        pts.append((hm.base.h2.copy(), ht_mean_workload(hm)))
    (h2a, ea), (h2b, eb) = pts
    pi = np.array([2 / 3, 1 / 3])
    lam_hat = np.array([0.9, 1.2]) / 0.375
    slope = np.sum(pi * lam_hat * (h2a - h2b) / 2) / (4 / 3)
    assert ea - eb == pytest.approx(slope, rel=1e-12)


def test_law_variance(two_state_model):
    law = ht_workload_law(ht_model(two_state_model))
    assert law.variance == pytest.approx(law.mean**2)


def test_ht_spec_rejects_subcritical(two_state_model):
    with pytest.raises(NotCritical):
        HtModelSpec(two_state_model)
