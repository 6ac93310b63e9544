import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wrongevent.datagen import (
    Dataset,
    TransitionMatrix,
    apply_transition,
    asymmetric_noise_matrix,
    cluster_centers,
    instance_flip_distribution,
    instance_noise,
    load_csv,
    make_gaussian_clusters,
    save_csv,
    symmetric_noise_matrix,
)
from wrongevent.errors import ParameterError, ParseError, SchemaError
from wrongevent.net import ce_loss_and_grad, forward, init_model, sgd_init, sgd_step


def test_dataset_invariants():
    ds = Dataset(np.zeros((3, 2)), [0, 1, 2], [0, 2, 2], 3)
    assert list(ds.noise_mask) == [False, True, False]
    assert ds.noise_rate == pytest.approx(1 / 3)
    with pytest.raises(ParameterError):
        Dataset(np.zeros((3, 2)), [0, 1], [0, 1, 2], 3)
    with pytest.raises(ParameterError):
        Dataset(np.zeros((2, 2)), [0, 3], [0, 1], 3)


def test_tiny_spread_samples_sit_on_their_centers():
    ds = make_gaussian_clusters(2, 1, 2, 10.0, 1e-9, 0)
    centers = cluster_centers(2, 2, 10.0)
    nearest = np.argmin(((ds.features[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    assert np.array_equal(nearest, ds.true_labels)
    assert np.array_equal(ds.given_labels, ds.true_labels)


@pytest.mark.parametrize("K,d", [(2, 2), (4, 2), (7, 3), (10, 5)])
def test_centers_are_separated(K, d):
    c = cluster_centers(K, d, 3.0)
    dist = np.sqrt(((c[:, None] - c[None]) ** 2).sum(-1))
    assert dist[~np.eye(K, dtype=bool)].min() >= 3.0 - 1e-9


def test_clusters_deterministic_and_sized():
    a = make_gaussian_clusters(4, 50, 2, 6, 1, 7)
    b = make_gaussian_clusters(4, 50, 2, 6, 1, 7)
    assert a.features.tobytes() == b.features.tobytes()
    assert np.array_equal(a.true_labels, b.true_labels)
    assert len(a) == 200 and np.bincount(a.true_labels).tolist() == [50] * 4


@pytest.mark.parametrize("args", [(1, 5, 2, 1, 1), (3, 0, 2, 1, 1), (3, 5, 1, 1, 1), (3, 5, 2, 0, 1), (3, 5, 2, 1, -1)])
def test_cluster_parameter_errors(args):
    with pytest.raises(ParameterError):
        make_gaussian_clusters(*args, seed=0)


def test_linear_classifier_separates_clean_clusters():
    # reference classifier: linear softmax trained by full-batch gradient descent
    ds = make_gaussian_clusters(4, 500, 2, 6, 1, 0)
    model = init_model((2, 4), 0)
    state = sgd_init(model)
    for _ in range(200):
        _, g = ce_loss_and_grad(model, ds.features, ds.true_labels)
        sgd_step(model, g, 0.1, 0.9, state)
    acc = np.mean(forward(model, ds.features).argmax(1) == ds.true_labels)
    assert acc > 0.95


def test_symmetric_matrix_values():
    T = symmetric_noise_matrix(4, 0.4)
    off = T.entries[~np.eye(4, dtype=bool)]
    assert np.allclose(off, 0.1) and np.allclose(np.diag(T.entries), 0.7)
    assert np.array_equal(symmetric_noise_matrix(10, 0.0).entries, np.eye(10))
    assert np.allclose(symmetric_noise_matrix(3, 0.6).entries.sum(1), 1.0, atol=1e-12)


def test_asymmetric_matrix_values():
    T = asymmetric_noise_matrix(4, 0.4).entries
    assert T[0, 1] == 0.4 and T[0, 0] == 0.6 and T[0, 2] == 0 and T[0, 3] == 0
    assert T[3, 0] == 0.4
    assert np.allclose(asymmetric_noise_matrix(2, 0.4).entries, [[0.6, 0.4], [0.4, 0.6]])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.floats(0, 1))
def test_generated_matrices_are_row_stochastic(K, eta):
    for T in (symmetric_noise_matrix(K, eta), asymmetric_noise_matrix(K, eta)):
        assert np.all(np.abs(T.entries.sum(1) - 1.0) <= 1e-12)
        assert np.all((T.entries >= 0) & (T.entries <= 1))


@pytest.mark.parametrize("eta", [-0.1, 1.1, float("nan")])
def test_noise_rate_errors(eta):
    with pytest.raises(ParameterError):
        symmetric_noise_matrix(4, eta)
    with pytest.raises(ParameterError):
        asymmetric_noise_matrix(4, eta)


def test_transition_matrix_validation():
    with pytest.raises(ParameterError):
        TransitionMatrix(np.array([[0.5, 0.4], [0.5, 0.5]]), 0.5)
    with pytest.raises(ParameterError):
        TransitionMatrix(np.array([[1.2, -0.2], [0.5, 0.5]]), 0.5)


def test_identity_transition_leaves_labels():
    ds = make_gaussian_clusters(3, 40, 2, 5, 1, 1)
    out = apply_transition(ds, symmetric_noise_matrix(3, 0.0), 9)
    assert np.array_equal(out.given_labels, ds.given_labels)
    assert not out.noise_mask.any()


def test_symmetric_flip_rate_matches_matrix():
    ds = make_gaussian_clusters(4, 2500, 2, 6, 1, 2)
    T = symmetric_noise_matrix(4, 0.4)
    out = apply_transition(ds, T, 3)
    assert T.expected_flip_rate() == pytest.approx(0.3)
    assert abs(out.noise_rate - 0.3) < 0.02
    assert out.noise_mask.sum() == np.count_nonzero(out.given_labels != out.true_labels)
    assert np.array_equal(out.true_labels, ds.true_labels) and len(out) == len(ds)


def test_flip_rate_within_three_standard_errors():
    ds = make_gaussian_clusters(5, 3000, 2, 6, 1, 4)
    for T in (symmetric_noise_matrix(5, 0.5), asymmetric_noise_matrix(5, 0.3)):
        p = T.expected_flip_rate()
        out = apply_transition(ds, T, 5)
        se = np.sqrt(p * (1 - p) / len(ds))
        assert abs(out.noise_rate - p) < 3 * se


def test_asymmetric_flip_rate_over_seeds():
    ds = make_gaussian_clusters(4, 250, 2, 6, 1, 6)
    rates = [apply_transition(ds, asymmetric_noise_matrix(4, 0.4), s).noise_rate for s in range(10)]
    assert abs(np.mean(rates) - 0.4) < 0.02
    out = apply_transition(ds, asymmetric_noise_matrix(4, 0.4), 0)
    flipped = out.noise_mask
    assert np.array_equal(out.given_labels[flipped], (out.true_labels[flipped] + 1) % 4)


def test_transition_dimension_mismatch():
    ds = make_gaussian_clusters(3, 5, 2, 5, 1, 0)
    with pytest.raises(ParameterError):
        apply_transition(ds, symmetric_noise_matrix(4, 0.2), 0)


def test_instance_noise_rate_and_zero():
    ds = make_gaussian_clusters(4, 2500, 2, 6, 1, 7)
    assert not instance_noise(ds, 0.0, 1).noise_mask.any()
    rates = [instance_noise(ds, 0.4, s).noise_rate for s in range(10)]
    assert abs(np.mean(rates) - 0.4) < 0.03
    with pytest.raises(ParameterError):
        instance_noise(ds, 1.0, 0)


def test_identical_inputs_get_identical_flip_distributions():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(6, 3))
    X[3] = X[0]
    y = np.array([1, 0, 2, 1, 2, 0])
    q = np.array([0.3, 0.5, 0.1, 0.3, 0.2, 0.4])
    W = rng.normal(size=(3, 3, 3))
    P = instance_flip_distribution(X, y, q, W)
    assert np.array_equal(P[0], P[3])
    assert np.allclose(P.sum(1), 1.0)
    assert np.allclose(P[np.arange(6), y], 1 - q)


def test_instance_noise_is_seeded():
    base = make_gaussian_clusters(3, 200, 2, 6, 1, 8)
    a = instance_noise(base, 0.3, 11)
    b = instance_noise(base, 0.3, 11)
    assert np.array_equal(a.given_labels, b.given_labels)
    assert not np.array_equal(a.given_labels, instance_noise(base, 0.3, 12).given_labels)


def test_csv_round_trip(tmp_path):
    ds = apply_transition(make_gaussian_clusters(3, 4, 2, 5, 1, 0), symmetric_noise_matrix(3, 0.5), 1)
    path = tmp_path / "d.csv"
    save_csv(ds, path)
    back = load_csv(path, 3)
    assert back.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(back.given_labels, ds.given_labels)
    assert np.array_equal(back.true_labels, ds.true_labels)
    assert back.has_oracle
    assert path.read_text().splitlines()[0] == "f0,f1,given,true"


def test_csv_small_and_without_true(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("f0,f1,given,true\n0.1,0.2,0,0\n1,2,1,0\n3,4,1,1\n")
    assert len(load_csv(p)) == 3
    q = tmp_path / "b.csv"
    q.write_text("f0,f1,given\n0.1,0.2,0\n1,2,1\n")
    ds = load_csv(q)
    assert not ds.noise_mask.any() and not ds.has_oracle


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("f0,f1,given,true\n0.1,0.2,0,0\n0.3,abc,1,1\n")
    with pytest.raises(ParseError, match=":3:"):
        load_csv(p)
    p.write_text("f0,f1,given,true\n0.1,0.2,0,0\n0.3,1,1\n")
    with pytest.raises(SchemaError):
        load_csv(p)
    p.write_text("x,y,given\n0.1,0.2,0\n")
    with pytest.raises(SchemaError):
        load_csv(p)
    p.write_text("")
    with pytest.raises(SchemaError):
        load_csv(p)
