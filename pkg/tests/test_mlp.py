from __future__ import annotations

import numpy as np
import pytest

from fdibench.mlp import (
    AdamParams,
    bce_with_logits,
    denormalize,
    fit_normalization,
    huber_component_loss,
    huber_vector_loss,
    init_model,
    input_jacobian,
    load_model,
    min_preactivation_gap,
    normalize,
    predict,
    save_model,
    train_mlp,
    TrainingDiverged,
)
from fdibench.nse import TrainConfig, train_nse


def random_model(rng, sizes=(6, 16, 16, 4), slope=0.01):
    model = init_model(list(sizes), slope, rng)
    model.in_mean = rng.normal(size=sizes[0])
    model.in_scale = rng.uniform(0.5, 2.0, sizes[0])
    model.out_mean = rng.normal(size=sizes[-1])
    model.out_scale = rng.uniform(0.5, 2.0, sizes[-1])
    return model


def test_normalization_round_trip(rng):
    v = rng.normal(size=(40, 7)) * 3 + 1
    mean, scale = fit_normalization(v)
    assert np.all(scale > 0)
    np.testing.assert_allclose(denormalize(normalize(v, mean, scale), mean, scale),
                               v, atol=1e-12)


def test_zero_weights_output_is_out_mean(rng):
    model = random_model(rng)
    for w in model.weights:
        w[:] = 0.0
    out = predict(model, rng.normal(size=6))
    np.testing.assert_allclose(out, model.out_mean, atol=1e-15)


def test_single_layer_identity_plumbing(rng):
    model = init_model([5, 5], 0.01, rng)
    model.weights[0] = np.eye(5)
    model.in_mean = rng.normal(size=5)
    model.in_scale = rng.uniform(0.5, 2, 5)
    model.out_mean = rng.normal(size=5)
    model.out_scale = rng.uniform(0.5, 2, 5)
    z = rng.normal(size=5)
    expected = denormalize(normalize(z, model.in_mean, model.in_scale),
                           model.out_mean, model.out_scale)
    np.testing.assert_allclose(predict(model, z), expected, atol=1e-12)


def fd_jacobian(model, z, eps=1e-6):
    cols = []
    for j in range(len(z)):
        zp, zm = z.copy(), z.copy()
        zp[j] += eps
        zm[j] -= eps
        cols.append((predict(model, zp) - predict(model, zm)) / (2 * eps))
    return np.stack(cols, axis=1)


def test_jacobian_matches_finite_differences(rng):
    checked = 0
    while checked < 20:
        model = random_model(rng)
        z = rng.normal(size=6)
        if min_preactivation_gap(model, z) < 1e-4:
            continue  # too close to a rectifier kink for finite differences
        jac = input_jacobian(model, z)
        fd = fd_jacobian(model, z)
        rel = np.max(np.abs(jac - fd)) / max(np.max(np.abs(fd)), 1e-12)
        assert rel < 1e-4
        checked += 1


def test_jacobian_constant_when_slope_is_one(rng):
    model = random_model(rng, slope=1.0)
    jacs = [input_jacobian(model, rng.normal(size=6) * 5) for _ in range(4)]
    for j in jacs[1:]:
        np.testing.assert_allclose(j, jacs[0], atol=1e-12)


def test_jacobian_is_weight_product_in_linear_region(rng):
    # unit slope keeps every activation in its linear region, so the exact
    # jacobian is the normalized product of the weight matrices
    model = random_model(rng, slope=1.0)
    z = rng.uniform(2.0, 3.0, size=6)
    jac = input_jacobian(model, z)
    expected = (model.out_scale[:, None]
                * (model.weights[2] @ model.weights[1] @ model.weights[0])
                / model.in_scale[None, :])
    np.testing.assert_allclose(jac, expected, atol=1e-10)


def test_huber_vector_gate():
    gamma = 1.0
    small = np.array([[0.2, -0.3]])          # l1 = 0.5 < gamma: quadratic
    losses, grad = huber_vector_loss(small, gamma)
    assert losses[0] == pytest.approx(0.5 * (0.04 + 0.09))
    np.testing.assert_allclose(grad, small)
    big = np.array([[2.0, -1.5]])            # l1 = 3.5 >= gamma: linear
    losses, grad = huber_vector_loss(big, gamma)
    assert losses[0] == pytest.approx(1.0 * (3.5 - 0.5))
    np.testing.assert_allclose(grad, [[1.0, -1.0]])
    # the vector gate differs from the component rule when components are
    # individually small but jointly above gamma
    mixed = np.array([[0.6, 0.6]])
    v_losses, _ = huber_vector_loss(mixed, gamma)
    c_losses, _ = huber_component_loss(mixed, gamma)
    assert v_losses[0] != pytest.approx(c_losses[0])
    assert c_losses[0] == pytest.approx(2 * 0.5 * 0.36)


def test_huber_gradient_is_loss_derivative(rng):
    for loss_fn in (huber_vector_loss, huber_component_loss):
        delta = rng.normal(size=(1, 5))
        if abs(np.sum(np.abs(delta)) - 1.0) < 1e-3:
            delta = delta * 1.1  # keep clear of the gate boundary
        _, grad = loss_fn(delta, 1.0)
        eps = 1e-7
        for j in range(5):
            dp, dm = delta.copy(), delta.copy()
            dp[0, j] += eps
            dm[0, j] -= eps
            fd = (loss_fn(dp, 1.0)[0][0] - loss_fn(dm, 1.0)[0][0]) / (2 * eps)
            assert grad[0, j] == pytest.approx(fd, abs=1e-5)


def test_bce_matches_reference(rng):
    logits = rng.normal(size=(8, 1)) * 3
    labels = (rng.random((8, 1)) < 0.5).astype(float)
    losses, grad = bce_with_logits(logits, labels)
    p = 1 / (1 + np.exp(-logits))
    ref = -(labels * np.log(p) + (1 - labels) * np.log(1 - p)).sum(axis=1)
    np.testing.assert_allclose(losses, ref, atol=1e-10)
    np.testing.assert_allclose(grad, p - labels, atol=1e-12)


def test_training_is_deterministic(rng):
    x = rng.normal(size=(300, 4))
    y = x @ rng.normal(size=(4, 2))
    models = []
    for _ in range(2):
        cfg = TrainConfig(steps=300, batch_size=32, hidden_sizes=(16,), seed=7,
                          dropout_prob=0.2)
        model, _ = train_nse(x, y, cfg)
        models.append(model)
    for w1, w2 in zip(models[0].weights, models[1].weights):
        np.testing.assert_array_equal(w1, w2)
    for b1, b2 in zip(models[0].biases, models[1].biases):
        np.testing.assert_array_equal(b1, b2)


def test_linear_teacher_recovery(rng):
    # network recovers a linear map through 2% label noise: its error against
    # the clean teacher falls below the noise floor
    from fdibench.mlp import predict as mlp_predict
    x = rng.normal(size=(2000, 6))
    a = rng.normal(size=(6, 3))
    noise = 0.02
    y = x @ a + noise * rng.normal(size=(2000, 3))
    cfg = TrainConfig(steps=20_000, batch_size=128, hidden_sizes=(64,),
                      dropout_prob=0.0, seed=3)
    model, report = train_nse(x, y, cfg)
    fresh = rng.normal(size=(500, 6))
    clean_rmse = float(np.sqrt(np.mean((mlp_predict(model, fresh) - fresh @ a) ** 2)))
    assert clean_rmse < noise
    assert report.final_loss < 0.1 * report.first_loss


def test_training_diverges_cleanly(rng):
    # Huber's bounded gradients resist blow-up, so force overflow through an
    # absurd step size: two 1e200-scale layers multiply past float range
    x = rng.normal(size=(100, 3))
    y = rng.normal(size=(100, 2))
    model = init_model([3, 8, 2], 0.01, np.random.default_rng(0))
    with pytest.raises(TrainingDiverged) as err:
        with np.errstate(over="ignore", invalid="ignore"):
            train_mlp(model, x, y, lambda p, t: huber_vector_loss(p - t, 1.0),
                      steps=200, batch_size=32, dropout=0.0,
                      rng=np.random.default_rng(1),
                      adam=AdamParams(learning_rate=1e200))
    assert err.value.step >= 1


def test_model_file_round_trip(tmp_path, rng):
    model = random_model(rng)
    path = tmp_path / "model.bin"
    save_model(model, path)
    again = load_model(path)
    assert again.layer_sizes == model.layer_sizes
    assert again.leaky_slope == model.leaky_slope
    assert again.output_activation == model.output_activation
    for w1, w2 in zip(model.weights, again.weights):
        np.testing.assert_array_equal(w1, w2)
    z = rng.normal(size=6)
    np.testing.assert_array_equal(predict(model, z), predict(again, z))


def test_model_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not a model at all")
    with pytest.raises(ValueError, match="magic"):
        load_model(path)


def test_train_config_defaults_match_recipe():
    cfg = TrainConfig()
    assert cfg.batch_size == 256
    assert cfg.steps == 50_000
    assert cfg.huber_gamma == 1.0
    assert cfg.dropout_prob == 0.2
    assert cfg.hidden_sizes == (512, 512)
    assert cfg.train_fraction == 0.8
