import numpy as np
import pytest
from hypothesis import given, strategies as st

from pehsense import anomaly


def test_fit_hand_values():
    m = anomaly.fit([1.0, 2.0, 3.0])
    assert m.mu == 2.0 and m.sigma == 1.0 and m.z_threshold == 3.0


def test_fit_sampling_bounds():
    e = np.random.default_rng(0).normal(10.0, 2.0, 100)
    m = anomaly.fit(e)
    assert abs(m.mu - 10) <= 0.6 and abs(m.sigma - 2) <= 0.5


def test_fit_errors():
    with pytest.raises(anomaly.AnomalyError):
        anomaly.fit([5.0, 5.0, 5.0])
    with pytest.raises(anomaly.AnomalyError):
        anomaly.fit([1.0, 2.0])
    with pytest.raises(anomaly.AnomalyError):
        anomaly.GaussianAnomalyModel(1.0, 0.0)


def test_score_examples():
    m = anomaly.GaussianAnomalyModel(10.0, 2.0)
    assert anomaly.score(m, 10.0) == 0.0
    assert anomaly.score(m, 16.0) == 3.0
    assert anomaly.score(m, 4.0) == -3.0


def test_classify_boundary():
    m = anomaly.GaussianAnomalyModel(10.0, 2.0)
    assert anomaly.classify(m, 16.0) == anomaly.HEALTHY
    assert anomaly.classify(m, 4.0) == anomaly.HEALTHY
    assert anomaly.classify(m, 10.0 + 3.01 * 2.0) == anomaly.ANOMALOUS
    out = anomaly.classify(m, np.array([10.0, 17.0]))
    assert out.tolist() == [anomaly.HEALTHY, anomaly.ANOMALOUS]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_separated_faults_detected(seed):
    rng = np.random.default_rng(seed)
    mu, sd = 5e-6, 4e-7
    fit_set = rng.normal(mu, sd, 100)
    m = anomaly.fit(fit_set)
    healthy = rng.normal(mu, sd, 500)
    faulty = mu + sd * rng.uniform(10, 12, 500) * rng.choice([-1, 1], 500)
    assert np.all(faulty > 0)
    s = anomaly.evaluate(m, healthy, faulty)
    # two-sided 3 sigma tail is 0.27%, widened by the 100-sample spread estimate
    assert s.false_alarm_rate <= 0.02 and s.detections == 500


@given(alpha=st.floats(1e-6, 1e6), d=st.floats(-50, 50))
def test_scale_and_symmetry(alpha, d):
    base = np.array([1.0, 2.0, 4.0, 3.5])
    m = anomaly.fit(base)
    ma = anomaly.fit(alpha * base)
    x = m.mu + d * m.sigma
    assert anomaly.classify(m, x) == anomaly.classify(ma, alpha * x)
    assert anomaly.classify(m, m.mu + d) == anomaly.classify(m, m.mu - d)


def test_monotone():
    m = anomaly.GaussianAnomalyModel(0.0, 1.0)
    xs = np.linspace(0, 10, 1001)
    flags = anomaly.is_anomalous(m, xs)
    first = np.argmax(flags)
    assert np.all(flags[first:])
