"""Classifier mechanics: gradients against finite differences, masking,
training behavior, persistence."""

import numpy as np
import pytest

from posehar.classifier import (
    ClassifierConfig,
    PaddedBatch,
    accuracy,
    batch_loss,
    init_model,
    inverse_frequency_weights,
    load_model,
    loss_and_grad,
    pad_batch,
    predict,
    predict_proba,
    save_model,
    train,
)
from posehar.errors import NumericError, ParseError, ShapeMismatch

TOY = dict(channels=3, classes=3, conv_blocks=((4, 3), (3, 2)), recurrent_units=4,
           dropout=0.0, rng_seed=0)


def toy_batch(rng, lengths=(5, 8, 6), channels=3, classes=3):
    series = [rng.normal(0.0, 1.0, (channels, T)) for T in lengths]
    labels = [int(rng.integers(classes)) for _ in lengths]
    return pad_batch(series, labels)


def test_pad_batch_layout():
    rng = np.random.default_rng(70)
    a = rng.normal(0.0, 1.0, (3, 4))
    b = rng.normal(0.0, 1.0, (3, 7))
    batch = pad_batch([a, b], [0, 2])
    assert batch.series.shape == (2, 3, 7)
    assert batch.mask.shape == (2, 7)
    np.testing.assert_array_equal(batch.series[0, :, :4], a)
    np.testing.assert_array_equal(batch.series[0, :, 4:], 0.0)
    np.testing.assert_array_equal(batch.mask[0], [1, 1, 1, 1, 0, 0, 0])
    np.testing.assert_array_equal(batch.mask[1], 1.0)
    np.testing.assert_array_equal(batch.labels, [0, 2])
    with pytest.raises(ShapeMismatch):
        pad_batch([a, rng.normal(0.0, 1.0, (4, 5))])
    with pytest.raises(ValueError):
        pad_batch([])


def test_init_model_is_seeded():
    config = ClassifierConfig(**TOY)
    a = init_model(config)
    b = init_model(config)
    for key in a.params:
        np.testing.assert_array_equal(a.params[key], b.params[key])
    c = init_model(ClassifierConfig(**{**TOY, "rng_seed": 1}))
    assert not np.array_equal(a.params["conv0_w"], c.params["conv0_w"])
    # forget-gate bias slice starts open
    units = config.recurrent_units
    np.testing.assert_array_equal(a.params["lstm_b"][units : 2 * units], 1.0)
    np.testing.assert_array_equal(a.params["lstm_b"][:units], 0.0)


def relative_error(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


@pytest.mark.parametrize("attention", [True, False])
def test_gradients_match_finite_differences(attention):
    rng = np.random.default_rng(71)
    config = ClassifierConfig(**{**TOY, "attention": attention})
    model = init_model(config)
    batch = toy_batch(rng)
    _, grads, _ = loss_and_grad(model, batch)

    h = 1e-6
    probe = np.random.default_rng(72)
    for key in sorted(grads):
        flat_param = model.params[key].reshape(-1)
        flat_grad = grads[key].reshape(-1)
        picks = probe.permutation(flat_param.size)[: min(6, flat_param.size)]
        for idx in picks:
            keep = flat_param[idx]
            flat_param[idx] = keep + h
            up = batch_loss(model, batch)
            flat_param[idx] = keep - h
            down = batch_loss(model, batch)
            flat_param[idx] = keep
            numeric = (up - down) / (2 * h)
            assert relative_error(numeric, flat_grad[idx]) < 1e-6, \
                f"{key}[{idx}]: analytic {flat_grad[idx]}, numeric {numeric}"


def test_gradients_with_class_weights():
    rng = np.random.default_rng(73)
    model = init_model(ClassifierConfig(**TOY))
    batch = toy_batch(rng)
    weights = np.array([2.0, 0.5, 1.0])
    _, grads, _ = loss_and_grad(model, batch, class_weights=weights)
    h = 1e-6
    flat = model.params["out_w"].reshape(-1)
    for idx in (0, 3, 7):
        keep = flat[idx]
        flat[idx] = keep + h
        up = batch_loss(model, batch, class_weights=weights)
        flat[idx] = keep - h
        down = batch_loss(model, batch, class_weights=weights)
        flat[idx] = keep
        numeric = (up - down) / (2 * h)
        assert relative_error(numeric, grads["out_w"].reshape(-1)[idx]) < 1e-6


def test_padding_cannot_change_anything():
    rng = np.random.default_rng(74)
    model = init_model(ClassifierConfig(**TOY))
    batch = toy_batch(rng, lengths=(5, 7))
    # same samples, four extra all-zero padded steps
    extra = 4
    series = np.concatenate(
        [batch.series, np.zeros((2, 3, extra))], axis=2)
    mask = np.concatenate([batch.mask, np.zeros((2, extra))], axis=1)
    padded = PaddedBatch(series, mask, batch.labels)

    loss_a, grads_a, stats_a = loss_and_grad(model, batch)
    loss_b, grads_b, stats_b = loss_and_grad(model, padded)
    # extra padded steps regroup the reductions, so agreement is to machine
    # precision rather than bitwise
    assert abs(loss_a - loss_b) < 1e-14
    for key in grads_a:
        np.testing.assert_allclose(grads_b[key], grads_a[key], rtol=1e-10, atol=1e-13)
    for (ma, va), (mb, vb) in zip(stats_a, stats_b):
        np.testing.assert_allclose(mb, ma, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(vb, va, rtol=1e-12, atol=1e-15)
    # garbage beyond the mask must be erased by the input masking
    series_junk = series.copy()
    series_junk[:, :, -extra:] = 1e6
    loss_c, _, _ = loss_and_grad(model, PaddedBatch(series_junk, mask, batch.labels))
    assert loss_c == loss_b


def test_eval_outputs_independent_of_batch_padding():
    rng = np.random.default_rng(75)
    config = ClassifierConfig(**TOY)
    model = init_model(config)
    model.running["bn0_mean"] = rng.normal(0.0, 0.1, 4)
    model.running["bn0_var"] = rng.uniform(0.5, 1.5, 4)
    short = rng.normal(0.0, 1.0, (3, 4))
    long = rng.normal(0.0, 1.0, (3, 9))
    together = predict_proba(model, [short, long])
    alone_short = predict_proba(model, [short])
    alone_long = predict_proba(model, [long])
    np.testing.assert_allclose(together[0], alone_short[0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(together[1], alone_long[0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(together.sum(axis=1), 1.0, atol=1e-12)


def separable_dataset(rng, n_per_class=8, channels=3, classes=3):
    data = []
    for y in range(classes):
        for _ in range(n_per_class):
            T = int(rng.integers(6, 12))
            s = rng.normal(0.0, 0.1, (channels, T))
            s[y % channels] += 3.0   # easy class signature
            data.append((s, y))
    return data


def test_train_learns_separable_data_and_restores_best():
    rng = np.random.default_rng(76)
    data = separable_dataset(rng)
    config = ClassifierConfig(**{**TOY, "max_epochs": 30, "patience": 3,
                                 "batch_size": 8, "learning_rate": 5e-3})
    model, history = train(config, data, data[::2])
    best = max(h["val_accuracy"] for h in history)
    assert best > 0.9
    # returned model carries the best-epoch parameters and statistics
    assert accuracy(model, data[::2]) == best
    # early stopping: it either hit the epoch cap or went stale past patience
    if len(history) < config.max_epochs:
        accs = [h["val_accuracy"] for h in history]
        stale = 0
        top = -1.0
        for a in accs:
            if a > top:
                top, stale = a, 0
            else:
                stale += 1
        assert stale == config.patience + 1


def test_train_is_deterministic():
    rng = np.random.default_rng(77)
    data = separable_dataset(rng, n_per_class=4)
    config = ClassifierConfig(**{**TOY, "max_epochs": 3, "batch_size": 6,
                                 "dropout": 0.3})
    a, hist_a = train(config, data, data[:6])
    b, hist_b = train(config, data, data[:6])
    assert hist_a == hist_b
    for key in a.params:
        np.testing.assert_array_equal(a.params[key], b.params[key])
    for key in a.running:
        np.testing.assert_array_equal(a.running[key], b.running[key])


def test_train_validates_inputs():
    rng = np.random.default_rng(78)
    data = separable_dataset(rng, n_per_class=2)
    config = ClassifierConfig(**{**TOY, "max_epochs": 1})
    with pytest.raises(ValueError):
        train(config, [], data)
    bad = [(rng.normal(0.0, 1.0, (5, 6)), 0)]
    with pytest.raises(ShapeMismatch):
        train(config, bad, bad)
    with pytest.raises(ValueError):
        train(config, [(data[0][0], 7)], data)


def test_non_finite_loss_is_reported():
    rng = np.random.default_rng(79)
    data = separable_dataset(rng, n_per_class=3)
    poisoned = [(s.copy(), y) for s, y in data]
    poisoned[0][0][0, 0] = np.nan
    config = ClassifierConfig(**{**TOY, "max_epochs": 4, "batch_size": len(data)})
    with pytest.raises(NumericError):
        with np.errstate(all="ignore"):
            train(config, poisoned, data[:3])


def test_class_weighting_option_runs():
    rng = np.random.default_rng(80)
    data = separable_dataset(rng, n_per_class=4) + separable_dataset(rng, n_per_class=1)
    config = ClassifierConfig(**{**TOY, "max_epochs": 2, "class_weighting": True,
                                 "batch_size": 8})
    model, history = train(config, data, data[:5])
    assert len(history) >= 1
    assert np.isfinite(history[-1]["train_loss"])


def test_inverse_frequency_weights():
    w = inverse_frequency_weights([0, 0, 0, 1], 2)
    np.testing.assert_allclose(w, [4 / 6, 4 / 2])
    w = inverse_frequency_weights([0, 0, 1, 1], 3)
    assert w[2] == 0.0


def test_predict_and_accuracy():
    rng = np.random.default_rng(81)
    model = init_model(ClassifierConfig(**TOY))
    series = [rng.normal(0.0, 1.0, (3, 5)) for _ in range(4)]
    probs = predict_proba(model, series)
    np.testing.assert_array_equal(predict(model, series), probs.argmax(axis=1))
    labels = probs.argmax(axis=1)
    assert accuracy(model, list(zip(series, labels))) == 1.0
    assert accuracy(model, []) == 0.0
    with pytest.raises(ShapeMismatch):
        predict_proba(model, [rng.normal(0.0, 1.0, (4, 5))])


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(82)
    data = separable_dataset(rng, n_per_class=2)
    config = ClassifierConfig(**{**TOY, "max_epochs": 2, "batch_size": 4})
    model, _ = train(config, data, data[:3])
    path = tmp_path / "model.npz"
    save_model(path, model, actions=["still", "wave"])
    back, actions = load_model(path)
    assert actions == ["still", "wave"]
    assert back.config == model.config
    for key in model.params:
        np.testing.assert_array_equal(back.params[key], model.params[key])
    for key in model.running:
        np.testing.assert_array_equal(back.running[key], model.running[key])
    series = [s for s, _ in data[:4]]
    np.testing.assert_array_equal(predict_proba(back, series),
                                  predict_proba(model, series))

    save_model(tmp_path / "anon.npz", model)
    _, no_actions = load_model(tmp_path / "anon.npz")
    assert no_actions is None

    with open(tmp_path / "junk.npz", "wb") as fh:
        np.savez(fh, x=np.zeros(2))
    with pytest.raises(ParseError):
        load_model(tmp_path / "junk.npz")


def test_config_validation():
    with pytest.raises(ValueError):
        ClassifierConfig(channels=0, classes=2)
    with pytest.raises(ValueError):
        ClassifierConfig(channels=3, classes=1)
    with pytest.raises(ValueError):
        ClassifierConfig(channels=3, classes=2, conv_blocks=())
    with pytest.raises(ValueError):
        ClassifierConfig(channels=3, classes=2, dropout=1.0)
    config = ClassifierConfig(channels=3, classes=2)
    assert config.feature_dim == 64 + 32
