import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pehsense import ml
from pehsense.dataset import EnergyFeatureTable, kfold_split


def table(X, y):
    X = np.asarray(X, dtype=float)
    return EnergyFeatureTable(np.arange(len(y)), y, X.reshape(len(y), -1))


def separated(n_per=20, seed=0):
    """Disjoint per-label energy ranges: label L lives in [L, L + 0.5)."""
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(1, 11), n_per)
    X = y + 0.5 * rng.uniform(size=y.size)
    return table(X, y)


# --- KNN --------------------------------------------------------------------

def brute_knn(Xtr, ytr, Xq, k):
    mu, sd = Xtr.mean(0), Xtr.std(0)
    sd[sd == 0] = 1
    A, Q = (Xtr - mu) / sd, (Xq - mu) / sd
    out = []
    for q in Q:
        d = [(float(np.sum((a - q) ** 2)), i) for i, a in enumerate(A)]
        d.sort()
        votes = {}
        for _, i in d[:k]:
            votes[ytr[i]] = votes.get(ytr[i], 0) + 1
        best = max(votes.values())
        out.append(min(lab for lab, c in votes.items() if c == best))
    return np.array(out)


def test_knn_k1_exact_point():
    X = np.array([[0.0], [1.0], [5.0]])
    m = ml.KNNClassifier(1).fit(X, [1, 2, 3])
    assert m.predict([[5.0]])[0] == 3


def test_knn_hand_built_k3():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0]])
    y = np.array([1, 1, 2, 2, 2])
    q = np.array([[0.4, 0.4], [5.5, 4.0]])
    pred = ml.KNNClassifier(3).fit(X, y).predict(q)
    assert pred.tolist() == brute_knn(X, y, q, 3).tolist() == [1, 2]


def test_knn_brute_force_100_points(rng):
    X = rng.standard_normal((100, 5))
    y = rng.integers(1, 4, 100)
    Q = rng.standard_normal((50, 5))
    for k in (1, 3, 5, 7):
        assert np.array_equal(ml.KNNClassifier(k).fit(X, y).predict(Q), brute_knn(X, y, Q, k))


def test_knn_scale_invariance(rng):
    X = rng.standard_normal((60, 3))
    y = rng.integers(1, 5, 60)
    Q = rng.standard_normal((30, 3))
    a = ml.KNNClassifier(5).fit(X, y).predict(Q)
    S = np.array([1.0, 1e4, 1e-3])
    b = ml.KNNClassifier(5).fit(X * S, y).predict(Q * S)
    assert np.array_equal(a, b)


def test_knn_tie_goes_to_smallest_label():
    X = np.array([[-1.0], [1.0]])
    assert ml.KNNClassifier(2).fit(X, [4, 2]).predict([[0.0]])[0] == 2


# --- Gaussian NB ------------------------------------------------------------

def test_nb_means():
    X = np.array([[0.0], [0.0], [0.0], [10.0], [10.0], [10.0]])
    m = ml.GaussianNBClassifier().fit(X, [1, 1, 1, 2, 2, 2])
    assert m.theta_[:, 0].tolist() == [0.0, 10.0]


def test_nb_midpoint_posterior():
    X = np.array([[-1.0], [1.0], [3.0], [5.0]])
    m = ml.GaussianNBClassifier().fit(X, [1, 1, 2, 2])
    _, scores = ml.predict(m, [[2.0]])
    assert scores[0] == pytest.approx([0.5, 0.5])


def test_nb_against_hand_log_posterior(rng):
    a = rng.normal(0.0, 1.0, 30)
    b = rng.normal(2.0, 2.0, 50)
    X = np.concatenate([a, b])[:, None]
    y = np.array([1] * 30 + [2] * 50)
    m = ml.GaussianNBClassifier().fit(X, y)
    q = np.linspace(-4, 8, 200)

    def logpost(x, s, prior):
        mu, var = s.mean(), s.var()
        return np.log(prior) - 0.5 * np.log(2 * np.pi * var) - (x - mu) ** 2 / (2 * var)

    expected = np.where(logpost(q, a, 30 / 80) >= logpost(q, b, 50 / 80), 1, 2)
    assert np.array_equal(m.predict(q[:, None]), expected)


def test_nb_zero_variance_floor():
    X = np.array([[1.0, 0.0], [1.0, 5.0], [2.0, 0.0], [2.0, 5.0]])
    m = ml.GaussianNBClassifier().fit(X, [1, 1, 2, 2])
    assert np.all(m.var_ > 0)
    assert m.predict([[1.0, 0.0], [2.0, 5.0]]).tolist() == [1, 2]


def test_nb_prior_shift_invariance(rng):
    X = rng.standard_normal((80, 2))
    y = rng.integers(1, 4, 80)
    m = ml.GaussianNBClassifier().fit(X, y)
    Q = rng.standard_normal((40, 2))
    before = m.predict(Q)
    m.log_prior_ = m.log_prior_ + 17.0
    assert np.array_equal(m.predict(Q), before)


# --- random forest ----------------------------------------------------------

def test_rf_single_stump_separable():
    X = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    y = np.array([1, 1, 1, 2, 2, 2])
    m = ml.RandomForestClassifier(n_trees=1, max_depth=1, bootstrap=False).fit(X, y)
    assert np.array_equal(m.predict(X), y)


def test_rf_determinism(rng):
    X = rng.standard_normal((80, 4))
    y = rng.integers(1, 4, 80)
    a = ml.RandomForestClassifier(n_trees=15, seed=3).fit(X, y)
    b = ml.RandomForestClassifier(n_trees=15, seed=3).fit(X, y)
    assert np.array_equal(a.scores(X), b.scores(X))


# --- linear SVM -------------------------------------------------------------

def test_svm_separable_2d():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal([0, 0], 0.3, (30, 2)), rng.normal([3, 0], 0.3, (30, 2)),
                   rng.normal([0, 3], 0.3, (30, 2))])
    y = np.repeat([1, 2, 3], 30)
    m = ml.LinearSVMClassifier().fit(X, y)
    assert np.mean(m.predict(X) == y) == 1.0


# --- shared behaviour -------------------------------------------------------

@pytest.mark.parametrize("kind", ml.KINDS)
def test_single_class_rejected(kind):
    with pytest.raises(ValueError):
        ml.make(kind).fit(np.ones((5, 1)), [3] * 5)


@pytest.mark.parametrize("kind", ml.KINDS)
def test_dimension_mismatch(kind):
    m = ml.make(kind).fit(np.random.default_rng(0).standard_normal((20, 2)), [1, 2] * 10)
    with pytest.raises(ValueError):
        m.predict(np.ones((1, 3)))


@pytest.mark.parametrize("kind", ml.KINDS)
def test_only_seen_labels(kind):
    rng = np.random.default_rng(1)
    m = ml.make(kind).fit(rng.standard_normal((30, 2)), [2, 5, 9] * 10)
    assert set(m.predict(rng.standard_normal((50, 2)) * 10).tolist()) <= {2, 5, 9}


def test_unknown_kind():
    with pytest.raises(ValueError):
        ml.make("mlp")


# --- cross validation -------------------------------------------------------

class AlwaysOne:
    def fit(self, X, y):
        return self

    def predict(self, X):
        return np.ones(len(X), dtype=int)


def test_always_one_baseline():
    t = separated(n_per=10)
    res = ml.cross_validate(AlwaysOne, t, kfold_split(t, 5, 0))
    assert res.accuracy == 0.1
    assert res.confusion.counts.sum(axis=1).tolist() == [10] * 10


@pytest.mark.parametrize("kind", ml.KINDS)
def test_perfectly_separated(kind):
    t = separated()
    hp = {"n_trees": 20} if kind == ml.RANDOM_FOREST else None
    # the linear one-vs-rest model needs classes in convex position, so place them on a circle
    if kind == ml.LINEAR_SVM:
        ang = 2 * np.pi * t.labels / 10 + 0.02 * (t.features[:, 0] - t.labels)
        t = table(1 + np.column_stack([np.cos(ang), np.sin(ang)]), t.labels)
    res = ml.cross_validate(kind, t, kfold_split(t, 5, 0), hp)
    assert res.accuracy == 1.0


def test_confusion_rows_and_csv(tmp_path):
    t = separated(n_per=7)
    res = ml.cross_validate(ml.KNN, t, kfold_split(t, 5, 0))
    cm = res.confusion
    assert cm.counts.sum(axis=1).tolist() == [7] * 10
    assert cm.total == len(t)
    assert cm.accuracy == pytest.approx(np.trace(cm.counts) / cm.total)
    ml.write_confusion_csv(cm, tmp_path / "cm.csv")
    back = ml.read_confusion_csv(tmp_path / "cm.csv")
    assert np.array_equal(back.counts, cm.counts) and np.array_equal(back.labels, cm.labels)


def test_model_dump_is_versioned_json():
    import json

    m = ml.train(ml.GAUSSIAN_NB, separated())
    doc = json.loads(ml.dump_model(m))
    assert doc["version"] == ml.DUMP_VERSION and doc["kind"] == "gaussian_nb"
    rf = ml.make(ml.RANDOM_FOREST, {"n_trees": 2}).fit(separated().features, separated().labels)
    assert json.loads(ml.dump_model(rf))["state"]["trees_"][0]["feature"]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(1, 9))
def test_knn_property_brute(seed, k):
    r = np.random.default_rng(seed)
    X = r.standard_normal((25, 3))
    y = r.integers(1, 5, 25)
    Q = r.standard_normal((10, 3))
    assert np.array_equal(ml.KNNClassifier(k).fit(X, y).predict(Q), brute_knn(X, y, Q, k))
