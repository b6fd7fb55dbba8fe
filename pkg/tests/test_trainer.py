import numpy as np
import pytest

from autodiff.tape import Tape, backward
from core.config import ModelConfig, TrainConfig
from core.exceptions import GraphDataError, NumericalError
from core.helper import derive_seed
from data.data_loader import build_features, make_splits, to_graph_tensors
from model.gahne import ModelParams, forward, init_params
from training.trainer import HISTORY_COLUMNS, AdamState, _batches, adam_step, masked_cross_entropy, train


@pytest.fixture
def setup(synth_graph):
    tensors = to_graph_tensors(synth_graph, build_features(synth_graph, "onehot-id"))
    split = make_splits(synth_graph, 30, 15, seed=0)
    model_config = ModelConfig(hidden_dims=[8, 8], attention_dim=4)
    return tensors, synth_graph.label_array(), split, model_config


def _params(**tensors):
    return ModelParams({k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()}, 1, 1, 1)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self):
        params = _params(**{"classifier.theta": [[1.0, -1.0]]})
        state = AdamState.fresh(params)
        adam_step(params, {"classifier.theta": np.array([[0.5, -3.0]])}, state, lr=0.1)
        np.testing.assert_allclose(params["classifier.theta"], [[0.9, -0.9]], atol=1e-7)
        assert state.step == 1

    def test_weight_decay_skips_biases(self):
        params = _params(**{"fusion.W": [[2.0]], "fusion.b": [[2.0]]})
        state = AdamState.fresh(params)
        zero = {"fusion.W": np.zeros((1, 1)), "fusion.b": np.zeros((1, 1))}
        adam_step(params, zero, state, lr=0.1, weight_decay=0.5)
        assert params["fusion.W"][0, 0] < 2.0
        assert params["fusion.b"][0, 0] == 2.0

    def test_non_finite_gradient(self):
        params = _params(**{"fusion.W": [[1.0]]})
        with pytest.raises(NumericalError):
            adam_step(params, {"fusion.W": np.array([[np.nan]])}, AdamState.fresh(params), lr=0.1)


def test_loss_mask_rejects_unlabeled_nodes():
    tape = Tape()
    probs = tape.input(np.full((3, 2), 0.5))
    with pytest.raises(GraphDataError):
        masked_cross_entropy(tape, probs, np.array([0, -1, 1]), np.array([0, 1]))


class TestMaskedCrossEntropy:
    @staticmethod
    def _loss(probs, labels, mask_ids):
        tape = Tape()
        node = masked_cross_entropy(tape, tape.input(np.array(probs)), np.array(labels), np.array(mask_ids))
        return tape.value(node)[0, 0]

    def test_confident_correct_row_costs_nothing(self):
        assert self._loss([[1.0, 0.0, 0.0]], [0], [0]) <= 1e-11

    def test_uniform_row_costs_ln_c(self):
        assert self._loss([[0.25] * 4], [2], [0]) == pytest.approx(np.log(4), abs=1e-9)

    def test_sums_over_masked_rows(self):
        probs = [[0.5, 0.5], [0.75, 0.25], [0.9, 0.1], [0.01, 0.99]]
        expected = -(np.log(0.5) + np.log(0.25) + np.log(0.9))
        assert self._loss(probs, [0, 1, 0, 0], [0, 1, 2]) == pytest.approx(expected, abs=1e-6)
        assert expected == pytest.approx(2.184802, abs=1e-6)


def test_batches_cover_the_training_set():
    ids = np.arange(10, 33)
    batches = _batches(ids, 5, seed=1, epoch=3)
    assert [len(b) for b in batches] == [5, 5, 5, 5, 3]
    np.testing.assert_array_equal(np.sort(np.concatenate(batches)), ids)
    assert len(_batches(ids, 0, seed=1, epoch=3)) == 1


class TestTrain:
    def test_validation_loss_improves(self, setup):
        tensors, labels, split, model_config = setup
        model_config = model_config.model_copy(update={"dropout_rate": 0.0})
        config = TrainConfig(max_epochs=30, patience=30, seed=1)
        _, history = train(tensors, labels, split, model_config, config)
        frame = history.to_frame()
        assert list(frame.columns) == HISTORY_COLUMNS
        assert frame["val_loss"].min() < frame["val_loss"].iloc[0]
        assert history.best_record().val_loss == frame["val_loss"].min()

    def test_zero_learning_rate_stops_after_patience(self, setup):
        tensors, labels, split, model_config = setup
        config = TrainConfig(learning_rate=0.0, max_epochs=20, patience=3, seed=1)
        _, history = train(tensors, labels, split, model_config, config)
        assert len(history) == 4
        assert history.best_epoch == 1
        assert history.stop_reason == "early_stop"
        assert len(set(history.to_frame()["val_loss"])) == 1

    def test_same_seed_same_run(self, setup):
        tensors, labels, split, model_config = setup
        config = TrainConfig(max_epochs=5, patience=5, batch_size=10, seed=4)
        params_a, history_a = train(tensors, labels, split, model_config, config)
        params_b, history_b = train(tensors, labels, split, model_config, config)
        assert history_a.to_frame().equals(history_b.to_frame())
        for name in params_a.names():
            np.testing.assert_array_equal(params_a[name], params_b[name])

    def test_history_csv(self, setup, tmp_path):
        tensors, labels, split, model_config = setup
        _, history = train(tensors, labels, split, model_config, TrainConfig(max_epochs=2, patience=2))
        history.to_csv(tmp_path / "history.csv")
        lines = (tmp_path / "history.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,val_acc"
        assert len(lines) == 3

    def test_empty_training_split(self, setup, synth_graph):
        tensors, labels, _, model_config = setup
        split = make_splits(synth_graph, 0, 5, seed=0)
        with pytest.raises(GraphDataError):
            train(tensors, labels, split, model_config, TrainConfig(max_epochs=2, patience=2))


def test_small_step_descends(setup):
    tensors, labels, split, model_config = setup
    model_config = model_config.model_copy(update={"dropout_rate": 0.0})
    params = init_params(model_config, tensors.num_channels, tensors.input_dim, 3, seed=2)

    def loss_and_grads():
        output = forward(tensors, params, model_config)
        node = masked_cross_entropy(output.tape, output.prob_node, labels, split.train_ids)
        grads = backward(output.tape, node)
        return float(output.tape.value(node)[0, 0]), {name: grads[i] for name, i in output.param_ids.items()}

    before, grads = loss_and_grads()
    adam_step(params, grads, AdamState.fresh(params), lr=1e-4)
    after, _ = loss_and_grads()
    assert after < before


def test_zero_learning_rate_keeps_initial_parameters(setup):
    tensors, labels, split, model_config = setup
    config = TrainConfig(learning_rate=0.0, max_epochs=3, patience=3, seed=6)
    params, _ = train(tensors, labels, split, model_config, config)
    initial = init_params(
        model_config,
        tensors.num_channels,
        tensors.input_dim,
        3,
        seed=derive_seed(6, "model", "init"),
        score_nodes=tensors.num_nodes,
    )
    for name in initial.names():
        np.testing.assert_array_equal(params[name], initial[name])


def test_dropout_comes_from_the_model_config(setup):
    with pytest.raises(ValueError):
        TrainConfig(dropout=0.0)
    tensors, labels, split, model_config = setup
    config = TrainConfig(max_epochs=2, patience=2, seed=3)
    _, with_dropout = train(tensors, labels, split, model_config, config)
    _, without = train(tensors, labels, split, model_config.model_copy(update={"dropout_rate": 0.0}), config)
    assert with_dropout.records[0].train_loss != without.records[0].train_loss


def test_step_scales_shrink_named_updates():
    params = _params(**{"layer1.attention.q": [[1.0]], "classifier.theta": [[1.0]]})
    grads = {"layer1.attention.q": np.array([[0.5]]), "classifier.theta": np.array([[0.5]])}
    adam_step(params, grads, AdamState.fresh(params), lr=0.1, step_scales={"layer1.attention.q": 0.01})
    np.testing.assert_allclose(params["classifier.theta"], [[0.9]], atol=1e-7)
    np.testing.assert_allclose(params["layer1.attention.q"], [[0.999]], atol=1e-9)


def test_channel_weights_stay_mixed_after_training(setup):
    tensors, labels, split, model_config = setup
    params, _ = train(tensors, labels, split, model_config, TrainConfig(max_epochs=20, patience=20, seed=2))
    for mu in forward(tensors, params, model_config).channel_weights:
        assert mu.min() > 0.2
