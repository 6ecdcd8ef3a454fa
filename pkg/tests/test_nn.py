import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from aisprop.dataset import EncodedSet
from aisprop.errors import (
    ConfigError, DivergedError, EmptyBatch, EmptyInput, FormatError, LengthMismatch,
    NonFiniteGradient, ShapeMismatch, StaleCache,
)
from aisprop.nn import ModelConfig, ParameterStore, adam_step, backward, forward, init_params, predict
from aisprop.nn.checkpoint import dumps_arrays, load_arrays, loads_arrays, save_arrays
from aisprop.nn.gradcheck import check_model_gradients, relative_error
from aisprop.nn.optim import clip_gradients
from aisprop.nn.train import TrainReport, mae_loss, train

TINY = dict(embed_dim=4, hidden_size=4, attention_heads=2, max_len=8, dropout=0.0)

VARIANTS = {
    "birecurrent": ModelConfig(**TINY, encoder="birecurrent"),
    "birecurrent_2layer_first_tanh": ModelConfig(**TINY, encoder="birecurrent", num_layers=2,
                                                 pooling="first", head_hidden=3),
    "attention_sinusoidal_bilstm": ModelConfig(**TINY, encoder="selfattention"),
    "attention_learned_2layer": ModelConfig(**TINY, encoder="selfattention", positional="learned",
                                            recurrent_head=False, num_layers=2),
    "attention_learned_bilstm_first": ModelConfig(**TINY, encoder="selfattention", positional="learned",
                                                  pooling="first"),
    "bagoftokens": ModelConfig(**TINY, encoder="bagoftokens", head_hidden=3),
}

IDS = np.array([[1, 5, 6, 4, 2, 0], [1, 4, 4, 2, 0, 0], [1, 6, 2, 0, 0, 0]])
LENGTHS = np.array([5, 4, 3])
VOCAB = 7


def _setup(config, seed=0):
    params = init_params(config, VOCAB, seed=seed)
    rng = np.random.default_rng(seed + 10)
    for v in params.values.values():
        v += rng.normal(scale=0.1, size=v.shape)
    return params


class TestGradients:
    @pytest.mark.parametrize("name", sorted(VARIANTS))
    def test_every_group_matches_finite_differences(self, name):
        errors = check_model_gradients(VARIANTS[name], VOCAB, IDS, LENGTHS, seed=3)
        worst = max(errors, key=errors.get)
        assert errors[worst] < 1e-4, (worst, errors[worst])

    def test_relative_error_floor(self):
        assert relative_error(np.zeros(3), np.full(3, 1e-12)) < 1e-6
        assert relative_error(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == 1.0

    @pytest.mark.parametrize("name", sorted(VARIANTS))
    def test_zero_upstream_gives_zero_gradients(self, name):
        params = _setup(VARIANTS[name])
        _, cache = forward(params, VARIANTS[name], IDS, LENGTHS)
        grads = backward(params, cache, np.zeros(3))
        assert all(not g.any() for g in grads.values())

    @pytest.mark.parametrize("name", sorted(VARIANTS))
    def test_absent_tokens_get_no_embedding_gradient(self, name):
        params = _setup(VARIANTS[name])
        _, cache = forward(params, VARIANTS[name], IDS, LENGTHS)
        g = backward(params, cache, np.ones(3))["embed"]
        # id 3 never occurs, id 0 only as padding
        assert not g[3].any() and not g[0].any()
        assert g[5].any()

    def test_stale_after_update(self):
        cfg = VARIANTS["birecurrent"]
        params = _setup(cfg)
        _, cache = forward(params, cfg, IDS, LENGTHS)
        backward(params, cache, np.ones(3))
        adam_step(params, 1e-3)
        with pytest.raises(StaleCache):
            backward(params, cache, np.ones(3))

    def test_stale_after_input_mutation(self):
        cfg = VARIANTS["birecurrent"]
        params = _setup(cfg)
        ids = IDS.copy()
        _, cache = forward(params, cfg, ids, LENGTHS)
        ids[0, 1] = 6
        with pytest.raises(StaleCache):
            backward(params, cache, np.ones(3))

    def test_upstream_shape_checked(self):
        cfg = VARIANTS["bagoftokens"]
        params = _setup(cfg)
        _, cache = forward(params, cfg, IDS, LENGTHS)
        with pytest.raises(ShapeMismatch):
            backward(params, cache, np.ones(2))


class TestForward:
    @pytest.mark.parametrize("name", sorted(VARIANTS))
    def test_padding_content_is_ignored(self, name):
        cfg = VARIANTS[name]
        params = _setup(cfg)
        base, _ = forward(params, cfg, IDS, LENGTHS)
        junk = IDS.copy()
        junk[1, 4:] = 6
        junk[2, 3:] = 5
        wide = np.hstack([junk, np.full((3, 2), 4)])
        assert np.allclose(forward(params, cfg, wide, LENGTHS)[0], base, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("name", sorted(VARIANTS))
    def test_rows_are_independent(self, name):
        cfg = VARIANTS[name]
        params = _setup(cfg)
        base, _ = forward(params, cfg, IDS, LENGTHS)
        perm = np.array([2, 0, 1])
        assert np.allclose(forward(params, cfg, IDS[perm], LENGTHS[perm])[0], base[perm], rtol=0, atol=1e-12)
        single = [forward(params, cfg, IDS[i:i + 1], LENGTHS[i:i + 1])[0][0] for i in range(3)]
        assert np.allclose(single, base, rtol=0, atol=1e-12)

    def test_identical_rows_identical_predictions(self):
        cfg = VARIANTS["attention_sinusoidal_bilstm"]
        params = _setup(cfg)
        pred, _ = forward(params, cfg, np.repeat(IDS[:1], 4, axis=0), np.repeat(LENGTHS[:1], 4))
        assert np.ptp(pred) == 0.0

    @pytest.mark.parametrize("name", ["birecurrent_2layer_first_tanh", "attention_learned_bilstm_first"])
    def test_first_position_sees_later_tokens(self, name):
        cfg = VARIANTS[name]
        params = _setup(cfg)
        changed = IDS.copy()
        changed[0, 3] = 6
        a = forward(params, cfg, IDS, LENGTHS)[0]
        b = forward(params, cfg, changed, LENGTHS)[0]
        assert a[0] != b[0] and a[1] == b[1]

    def test_positions_matter_for_attention_only(self):
        rev = IDS.copy()
        rev[0, 1:4] = rev[0, 1:4][::-1]
        for name, sensitive in [("attention_learned_2layer", True), ("bagoftokens", False)]:
            cfg = VARIANTS[name]
            params = _setup(cfg)
            diff = abs(forward(params, cfg, IDS, LENGTHS)[0][0] - forward(params, cfg, rev, LENGTHS)[0][0])
            assert bool(diff > 1e-9) == sensitive

    def test_dropout_only_in_training(self):
        cfg = ModelConfig(**{**TINY, "dropout": 0.5}, encoder="birecurrent")
        params = _setup(cfg)
        a = forward(params, cfg, IDS, LENGTHS)[0]
        assert np.array_equal(a, forward(params, cfg, IDS, LENGTHS, rng=np.random.default_rng(0))[0])
        b = forward(params, cfg, IDS, LENGTHS, train=True, rng=np.random.default_rng(0))[0]
        assert not np.allclose(a, b)

    def test_predict_chunks_match_forward(self):
        cfg = VARIANTS["birecurrent"]
        params = _setup(cfg)
        assert np.allclose(predict(params, cfg, IDS, LENGTHS, batch_size=2),
                           forward(params, cfg, IDS, LENGTHS)[0], rtol=0, atol=1e-12)

    @pytest.mark.parametrize("ids,lengths", [
        (np.zeros((2, 3, 1), int), [1, 1]),
        (np.zeros((2, 3)), [1, 1]),
        (np.zeros((2, 3), int), [1, 1, 1]),
        (np.zeros((2, 3), int), [0, 1]),
        (np.zeros((2, 3), int), [4, 1]),
        (np.full((2, 3), 7), [3, 3]),
        (np.zeros((2, 9), int), [3, 3]),
        (np.zeros((0, 3), int), np.zeros(0, int)),
    ])
    def test_shape_errors(self, ids, lengths):
        cfg = VARIANTS["bagoftokens"]
        with pytest.raises(ShapeMismatch):
            forward(init_params(cfg, VOCAB), cfg, ids, np.asarray(lengths))

    def test_init_is_seeded(self):
        cfg = VARIANTS["attention_learned_2layer"]
        a, b, c = init_params(cfg, VOCAB, 1), init_params(cfg, VOCAB, 1), init_params(cfg, VOCAB, 2)
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert not np.array_equal(a["embed"], c["embed"])

    def test_parameter_count(self):
        cfg = VARIANTS["bagoftokens"]
        # embed 7x4, head 4x3+3, output 3+1
        assert init_params(cfg, VOCAB).num_parameters() == 28 + 15 + 4


class TestConfig:
    def test_all_problems_listed(self):
        with pytest.raises(ConfigError) as info:
            ModelConfig(learning_rate=0, dropout=1.0, epochs=-1, hidden_size=6, attention_heads=4)
        text = str(info.value)
        for key in ("learning_rate", "dropout", "epochs", "hidden_size"):
            assert key in text

    def test_odd_hidden_with_recurrence(self):
        with pytest.raises(ConfigError):
            ModelConfig(encoder="birecurrent", hidden_size=5)
        ModelConfig(encoder="bagoftokens", hidden_size=5)

    def test_unknown_enum_value(self):
        with pytest.raises(ValueError):
            ModelConfig(encoder="transformerxl")


class TestLoss:
    def test_example(self):
        loss, grad = mae_loss(np.array([1.0, 2.0]), np.array([0.0, 4.0]))
        assert loss == 1.5
        assert grad.tolist() == [0.5, -0.5]

    def test_zero_residual_has_zero_subgradient(self):
        assert mae_loss([1.0, 1.0], [1.0, 3.0])[1].tolist() == [0.0, -0.5]

    def test_empty(self):
        with pytest.raises(EmptyBatch):
            mae_loss([], [])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            mae_loss([1.0], [1.0, 2.0])

    @given(hnp.arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e3, 1e3)),
           st.floats(-1e3, 1e3))
    def test_shift_invariance(self, y, shift):
        pred = y[::-1].copy()
        assert math.isclose(mae_loss(pred, y)[0], mae_loss(pred + shift, y + shift)[0], rel_tol=1e-9, abs_tol=1e-9)


def _scalar_adam(theta, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2.0 * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return theta


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        store = ParameterStore({"w": np.array([1.0, -2.0])})
        adam_step(store, 0.1)
        assert store["w"].tolist() == [1.0, -2.0]

    def test_quadratic_matches_scalar_recurrence(self):
        store = ParameterStore({"w": np.array([1.0])})
        for _ in range(200):
            store.grads["w"][:] = 2.0 * store["w"]
            adam_step(store, 0.1)
        assert abs(store["w"][0]) < 1e-2
        assert store["w"][0] == pytest.approx(_scalar_adam(1.0, 200, 0.1), abs=1e-12)

    def test_first_step_moves_by_learning_rate(self):
        store = ParameterStore({"w": np.array([3.0, -3.0])})
        store.grads["w"][:] = [5.0, -0.01]
        adam_step(store, 0.01)
        assert np.allclose(store["w"], [2.99, -2.99], atol=1e-7)

    def test_non_finite_gradient_rejected_without_update(self):
        store = ParameterStore({"w": np.array([1.0]), "u": np.array([1.0])})
        store.grads["w"][:] = np.nan
        store.grads["u"][:] = 1.0
        with pytest.raises(NonFiniteGradient):
            adam_step(store, 0.1)
        assert store["u"][0] == 1.0 and store.step == 0

    def test_clipping(self):
        store = ParameterStore({"a": np.zeros(1), "b": np.zeros(1)})
        store.grads["a"][:] = 3.0
        store.grads["b"][:] = 4.0
        assert clip_gradients(store, 1.0) == 5.0
        assert np.allclose([store.grads["a"][0], store.grads["b"][0]], [0.6, 0.8])


def _bag_task(n, seed):
    rng = np.random.default_rng(seed)
    weights = np.zeros(10)
    weights[4:] = rng.uniform(-0.1, 0.1, 6)
    lengths = rng.integers(1, 9, n)
    ids = np.zeros((n, 8), dtype=np.int64)
    for i, k in enumerate(lengths):
        ids[i, :k] = rng.integers(4, 10, k)
    mask = np.arange(8)[None, :] < lengths[:, None]
    y = (weights[ids] * mask).sum(axis=1) + 0.5
    return EncodedSet(ids, lengths, y), weights


class TestTraining:
    def test_bag_of_tokens_learns_additive_target(self):
        tr, _ = _bag_task(600, 0)
        va, _ = _bag_task(100, 0)
        te, _ = _bag_task(200, 0)
        # the target is exactly linear in token counts: least squares recovers it
        counts = np.stack([np.bincount(r[:k], minlength=10) for r, k in zip(tr.ids, tr.lengths)])
        X = np.hstack([counts[:, 4:], np.ones((len(counts), 1))])
        coef, *_ = np.linalg.lstsq(X, tr.targets, rcond=None)
        assert np.max(np.abs(X @ coef - tr.targets)) < 1e-10
        cfg = ModelConfig(encoder="bagoftokens", embed_dim=8, hidden_size=8, epochs=30,
                          learning_rate=1e-2, batch_size=32, max_len=8, dropout=0.0)
        _, report = train(cfg, 10, tr, va, te)
        assert report.test_metrics["mae"] < 0.02

    def _small(self):
        rng = np.random.default_rng(5)
        ids = rng.integers(4, VOCAB, (40, 6))
        lengths = rng.integers(2, 7, 40)
        y = (ids == 5).sum(axis=1) / 6.0
        return EncodedSet(ids, lengths, y)

    def test_zero_epochs(self):
        data = self._small()
        cfg = VARIANTS["birecurrent"].with_(epochs=0)
        params, report = train(cfg, VOCAB, data, data, data)
        assert report.epochs == [] and report.best_epoch is None
        assert all(math.isfinite(v) for v in report.test_metrics.values())
        assert params["head.b"][0] == np.median(data.targets)

    def test_loss_decreases_and_report_is_deterministic(self):
        data = self._small()
        cfg = VARIANTS["attention_sinusoidal_bilstm"].with_(epochs=10, learning_rate=1e-2, batch_size=8)
        _, a = train(cfg, VOCAB, data, data, data, prop="qed", representation="ais")
        _, b = train(cfg, VOCAB, data, data, data, prop="qed", representation="ais")
        assert a.to_json() == b.to_json()
        assert a.epochs[-1].train_loss < a.epochs[0].train_loss
        assert TrainReport.from_json(a.to_json()).to_json() == a.to_json()

    def test_best_epoch_weights_are_restored(self):
        data = self._small()
        cfg = VARIANTS["birecurrent"].with_(epochs=4, learning_rate=5e-2)
        params, report = train(cfg, VOCAB, data, data)
        best = min(report.epochs, key=lambda r: r.valid_mae)
        assert report.best_epoch == best.epoch
        pred = predict(params, cfg, data.ids, data.lengths)
        assert np.mean(np.abs(pred - data.targets)) == pytest.approx(best.valid_mae, abs=1e-12)

    def test_empty_train_set(self):
        empty = EncodedSet(np.zeros((0, 4), int), np.zeros(0, int), np.zeros(0))
        with pytest.raises(EmptyInput):
            train(VARIANTS["birecurrent"], VOCAB, empty)

    def test_divergence_detected(self):
        data = self._small()
        bad = EncodedSet(data.ids, data.lengths, np.where(np.arange(40) == 3, np.inf, data.targets))
        with pytest.raises(DivergedError):
            train(VARIANTS["birecurrent"].with_(epochs=1), VOCAB, bad)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = init_params(VARIANTS["attention_learned_2layer"], VOCAB)
        save_arrays(params.values, tmp_path / "p.ckpt")
        back = load_arrays(tmp_path / "p.ckpt")
        assert sorted(back) == sorted(params.values)
        assert all(np.array_equal(back[k], params[k]) for k in back)

    def test_bytes_independent_of_insertion_order(self):
        a = {"x": np.ones(2), "y": np.zeros((1, 3))}
        assert dumps_arrays(a) == dumps_arrays(dict(reversed(list(a.items()))))

    @pytest.mark.parametrize("mutate", [
        lambda b: b"XXXX" + b[4:], lambda b: b[:-3], lambda b: b + b"\0", lambda b: b[:10],
    ])
    def test_corruption_detected(self, mutate):
        data = dumps_arrays({"w": np.arange(6.0).reshape(2, 3)})
        with pytest.raises(FormatError):
            loads_arrays(mutate(data))

    @settings(max_examples=50, deadline=None)
    @given(st.dictionaries(st.text(min_size=1, max_size=8),
                           hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4)),
                           max_size=4))
    def test_arbitrary_arrays(self, arrays):
        back = loads_arrays(dumps_arrays(arrays))
        assert back.keys() == arrays.keys()
        for k, v in arrays.items():
            assert back[k].shape == v.shape
            assert np.array_equal(back[k], v, equal_nan=True)
