import numpy as np
import pytest

from sonotree.fusion import (
    FusionBatch,
    FusionConfig,
    backward,
    forward,
    gate_fractions,
    init_params,
    load_checkpoint,
    lora_apply,
    predict,
    save_checkpoint,
    train,
)
from sonotree.numerics import ContractViolation, Rng, finite_difference_check

D, DT, RANK = 6, 5, 2
SMALL = dict(d=D, dt=DT, rank=RANK, numeric_raw=4, numeric_hidden=3,
             numeric_embed=4)


def small_params(seed=0, numeric=True, randomize_up=False):
    rng = Rng(seed)
    params = init_params(rng, numeric=numeric, **SMALL)
    if randomize_up:
        # zero-init up-projections hide adapter gradients; give them signal
        for level in "cmf":
            params[f"w_up_{level}"] = rng.normals(params[f"w_up_{level}"].shape) * 0.3
            params[f"b_up_{level}"] = rng.normals(params[f"b_up_{level}"].shape) * 0.1
    return params


def fd_instance(seed):
    """Random instance with O(0.3) weights: gradients large enough that the
    central-difference comparison is not dominated by float roundoff."""
    rng = Rng(seed)
    params = init_params(rng, numeric=True, **SMALL)
    for key, value in params.items():
        params[key] = rng.normals(value.shape) * 0.3
    return params


def small_batch(seed=1, n=1, numeric=True, labels=True):
    rng = Rng(seed)
    visual = {level: rng.normals((n, D)) for level in "cmf"}
    text = rng.normals((n, DT))
    numeric_raw = rng.normals((n, 4)) if numeric else None
    y = np.array([rng.randint(2) for _ in range(n)]) if labels else None
    return FusionBatch(visual=visual, text=text, numeric_raw=numeric_raw, labels=y)


def loss_fn(batch, config):
    def f(params):
        return forward(batch, params, config).loss
    return f


class TestForwardAlgebra:
    def test_zero_lora_numeric_off_gives_twice_text(self):
        config = FusionConfig(use_numeric=False, gate_mode="soft")
        params = small_params(numeric=False)
        for level in "cmf":
            params[f"w_down_{level}"][:] = 0.0
            params[f"b_down_{level}"][:] = 0.0
        batch = small_batch(numeric=False)
        trace = forward(batch, params, config)
        assert np.array_equal(trace.z, 2.0 * trace.t_tilde)
        # hard mode gives the identical result
        hard = forward(batch, params, FusionConfig(use_numeric=False))
        assert np.array_equal(hard.z, 2.0 * hard.t_tilde)

    def test_text_projection_constant_when_weights_zero(self):
        params = small_params()
        params["w_t"][:] = 0.0
        params["b_t"][:] = np.arange(D)
        trace = forward(small_batch(n=3), params, FusionConfig())
        assert np.allclose(trace.t_tilde, np.tile(np.arange(D), (3, 1)))

    def test_lora_zero_up_outputs_bias(self):
        params = small_params()
        params["w_up_c"][:] = 0.0
        params["b_up_c"][:] = 7.0
        out = lora_apply(Rng(3).normals((2, D)), params, "c")
        assert np.allclose(out, 7.0)

    def test_lora_rank_bound(self):
        params = small_params(randomize_up=True)
        jac = params["w_up_c"] @ params["w_down_c"]
        assert np.linalg.matrix_rank(jac, tol=1e-10) <= RANK

    def test_levels_processed_independently(self):
        params = small_params(randomize_up=True)
        config = FusionConfig(gate_mode="soft")
        batch = small_batch(n=2)
        trace = forward(batch, params, config)
        perturbed = FusionBatch(
            visual={**batch.visual, "c": batch.visual["c"] + 1.0},
            text=batch.text, numeric_raw=batch.numeric_raw, labels=batch.labels)
        trace2 = forward(perturbed, params, config)
        assert np.array_equal(trace.h["m"], trace2.h["m"])
        assert np.array_equal(trace.h["f"], trace2.h["f"])
        assert not np.array_equal(trace.h["c"], trace2.h["c"])

    def test_probabilities_on_simplex(self):
        trace = forward(small_batch(n=8), small_params(randomize_up=True),
                        FusionConfig())
        assert np.all(np.abs(trace.y_hat.sum(axis=1) - 1.0) <= 1e-9)


class TestGate:
    def test_zero_gate_uniform_and_first_index(self):
        params = small_params()
        params["w_g"][:] = 0.0
        params["b_g"][:] = 0.0
        trace = forward(small_batch(n=4), params, FusionConfig())
        assert np.allclose(trace.gate.g, 1.0 / 3.0)
        assert np.all(trace.gate.selected == 0)

    def test_bias_selects_level(self):
        params = small_params()
        params["w_g"][:] = 0.0
        params["b_g"][:] = [0.0, 1.0, 0.0]
        trace = forward(small_batch(n=3), params, FusionConfig())
        assert np.all(trace.gate.selected == 1)
        assert trace.gate.selected_level(0) == "m"

    def test_logit_shift_invariance(self):
        params = small_params(randomize_up=True)
        batch = small_batch(n=5)
        base = forward(batch, params, FusionConfig())
        shifted = {k: v.copy() for k, v in params.items()}
        shifted["b_g"] = shifted["b_g"] + 13.5
        after = forward(batch, shifted, FusionConfig())
        assert np.allclose(base.gate.g, after.gate.g, atol=1e-9)
        assert np.array_equal(base.gate.selected, after.gate.selected)

    def test_hard_equals_soft_when_gate_saturated(self):
        params = small_params(randomize_up=True)
        params["w_g"][:] = 0.0
        params["b_g"][:] = [60.0, 0.0, 0.0]
        batch = small_batch(n=4)
        hard = forward(batch, params, FusionConfig(gate_mode="hard"))
        soft = forward(batch, params, FusionConfig(gate_mode="soft"))
        assert np.allclose(hard.z, soft.z, atol=1e-12)

    def test_single_level_bypasses_gate(self):
        params = small_params(randomize_up=True, numeric=False)
        config = FusionConfig(levels=("m",), use_numeric=False)
        trace = forward(small_batch(numeric=False), params, config)
        assert trace.gate.mode == "fixed"
        assert np.array_equal(trace.z, trace.h["m"] + trace.t_tilde)

    def test_empty_levels_rejected(self):
        with pytest.raises(ContractViolation):
            FusionConfig(levels=()).validate()


class TestGradients:
    def test_soft_mode_matches_finite_differences(self):
        config = FusionConfig(gate_mode="soft")
        worst = 0.0
        for seed in range(20):
            params = fd_instance(seed)
            batch = small_batch(seed=100 + seed)
            trace = forward(batch, params, config)
            grads = backward(trace, batch, params, config)
            report = finite_difference_check(loss_fn(batch, config), params,
                                             grads, h=1e-5)
            assert report.ok, report.failures
            worst = max(worst, report.max_rel_err)
        assert worst <= 1e-4

    def test_hard_mode_matches_finite_differences_away_from_boundary(self):
        # gate weights carry an intentional learning surrogate, so the exact
        # finite-difference identity applies to every other parameter
        config = FusionConfig(gate_mode="hard")
        checked = 0
        for seed in range(40):
            params = fd_instance(seed)
            batch = small_batch(seed=200 + seed)
            trace = forward(batch, params, config)
            top2 = np.sort(trace.gate.g[0])[-2:]
            if top2[1] - top2[0] <= 0.1:
                continue
            grads = backward(trace, batch, params, config)
            report = finite_difference_check(loss_fn(batch, config), params,
                                             grads, h=1e-5,
                                             skip=("w_g", "b_g"))
            assert report.ok, report.failures
            assert report.max_rel_err <= 1e-4
            checked += 1
        assert checked >= 10

    def test_perfect_prediction_zero_classifier_gradient(self):
        config = FusionConfig(use_numeric=False)
        params = small_params(numeric=False)
        batch = small_batch(numeric=False, labels=True)
        batch.labels[:] = 0
        trace = forward(batch, params, config)
        # steer logits to saturation for the true class
        params["w_c"][:] = 0.0
        params["b_c"][:] = [60.0, -60.0]
        trace = forward(batch, params, config)
        grads = backward(trace, batch, params, config)
        assert np.linalg.norm(grads["w_c"]) <= 1e-6
        assert np.linalg.norm(grads["b_c"]) <= 1e-6

    def test_duplicate_sample_doubles_gradients(self):
        config = FusionConfig(gate_mode="soft")
        params = small_params(randomize_up=True)
        single = small_batch(seed=5, n=1)
        doubled = FusionBatch(
            visual={k: np.vstack([v, v]) for k, v in single.visual.items()},
            text=np.vstack([single.text, single.text]),
            numeric_raw=np.vstack([single.numeric_raw, single.numeric_raw]),
            labels=np.concatenate([single.labels, single.labels]))
        g1 = backward(forward(single, params, config), single, params, config)
        g2 = backward(forward(doubled, params, config), doubled, params, config)
        for key in g1:
            assert np.allclose(2.0 * g1[key], g2[key], atol=1e-12)

    def test_backward_requires_labels(self):
        config = FusionConfig()
        params = small_params(randomize_up=True)
        batch = small_batch(labels=False)
        trace = forward(batch, params, config)
        with pytest.raises(ContractViolation):
            backward(trace, batch, params, config)


def separable_batch(n=120, seed=9):
    """Linearly separable two-class fixture in all modalities."""
    rng = Rng(seed)
    y = np.array([i % 2 for i in range(n)])
    offsets = np.where(y[:, None] == 1, 1.5, -1.5)
    visual = {level: rng.normals((n, D)) * 0.3 + offsets for level in "cmf"}
    text = rng.normals((n, DT)) * 0.3 + offsets[:, :DT][:, :1] * np.ones(DT)
    numeric = rng.normals((n, 4)) * 0.3 + offsets[:, :4][:, :1]
    return FusionBatch(visual=visual, text=text, numeric_raw=numeric, labels=y)


class TestTraining:
    def test_separable_fixture_reaches_high_accuracy(self):
        batch = separable_batch()
        params = init_params(Rng(0), **SMALL)
        trained, logs = train(batch, params, FusionConfig(), rng=Rng(1),
                              epochs=100)
        assert logs[-1].train_acc >= 0.99

    def test_zero_learning_rate_keeps_params(self):
        batch = separable_batch(n=40)
        params = init_params(Rng(0), **SMALL)
        trained, _ = train(batch, params, FusionConfig(), rng=Rng(1),
                           lr=0.0, epochs=2)
        for key, value in params.items():
            assert np.allclose(trained[key], value, atol=1e-15)

    def test_same_seed_identical_loss_curves(self):
        batch = separable_batch(n=60)
        a_params, a_logs = train(batch, init_params(Rng(0), **SMALL),
                                 FusionConfig(), rng=Rng(1), epochs=10)
        b_params, b_logs = train(batch, init_params(Rng(0), **SMALL),
                                 FusionConfig(), rng=Rng(1), epochs=10)
        assert [l.loss for l in a_logs] == [l.loss for l in b_logs]
        for key in a_params:
            assert np.array_equal(a_params[key], b_params[key])

    def test_loss_mostly_decreasing_early(self):
        batch = separable_batch()
        _, logs = train(batch, init_params(Rng(0), **SMALL), FusionConfig(),
                        rng=Rng(1), epochs=10)
        losses = [l.loss for l in logs]
        increases = sum(1 for i in range(len(losses) - 1)
                        if losses[i + 1] > losses[i] + 1e-12)
        assert increases <= 1

    def test_single_class_rejected(self):
        batch = separable_batch(n=20)
        batch.labels[:] = 0
        with pytest.raises(ContractViolation):
            train(batch, init_params(Rng(0), **SMALL), FusionConfig(), rng=Rng(1))

    def test_lora_off_freezes_adapters(self):
        batch = separable_batch(n=40)
        params = init_params(Rng(0), **SMALL)
        config = FusionConfig(use_lora=False)
        trained, _ = train(batch, params, config, rng=Rng(1), epochs=3)
        for level in "cmf":
            assert np.array_equal(trained[f"w_down_{level}"],
                                  params[f"w_down_{level}"])


class TestPredict:
    def test_symmetric_params_tie_to_class_zero(self):
        params = small_params()
        params["w_c"][:] = 0.0
        params["b_c"][:] = 0.0
        batch = small_batch(n=3, labels=False)
        labels, probs, _ = predict(batch, params, FusionConfig())
        assert np.all(labels == 0)
        assert np.allclose(probs, 0.5)

    def test_batch_order_invariance(self):
        params = small_params(seed=4, randomize_up=True)
        batch = small_batch(seed=6, n=7, labels=False)
        labels, probs, _ = predict(batch, params, FusionConfig())
        rev = batch.select(list(range(6, -1, -1)))
        labels_r, probs_r, _ = predict(rev, params, FusionConfig())
        assert np.array_equal(labels[::-1], labels_r)
        assert np.allclose(probs[::-1], probs_r)

    def test_gate_report_matches_argmax(self):
        params = small_params(seed=5, randomize_up=True)
        batch = small_batch(seed=7, n=9, labels=False)
        _, _, gate = predict(batch, params, FusionConfig())
        assert np.array_equal(gate.selected, np.argmax(gate.g, axis=1))
        fracs = gate_fractions(gate)
        assert np.isclose(sum(fracs), 1.0)


class TestCheckpoint:
    def test_roundtrip_float32(self, tmp_path):
        params = small_params(randomize_up=True)
        config = FusionConfig(levels=("c", "m"), gate_mode="soft",
                              use_numeric=True)
        save_checkpoint(tmp_path / "ckpt", params, config, extra={"seed": 3})
        loaded, cfg, extra = load_checkpoint(tmp_path / "ckpt")
        assert cfg == config and extra["seed"] == 3
        for key, value in params.items():
            assert np.allclose(loaded[key], value, atol=1e-6)

    def test_golden_tie_break_vectors(self):
        # frozen behavior: zero gate, equal logits -> index 0 on every platform
        params = small_params()
        params["w_g"][:] = 0.0
        params["b_g"][:] = 0.0
        params["w_c"][:] = 0.0
        params["b_c"][:] = 0.0
        batch = small_batch(n=2, labels=False)
        labels, probs, gate = predict(batch, params, FusionConfig())
        assert gate.selected.tolist() == [0, 0]
        assert labels.tolist() == [0, 0]
        assert np.allclose(probs, 0.5, atol=0)
