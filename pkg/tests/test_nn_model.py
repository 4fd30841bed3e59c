"""Classifier config, parameter layout, forward/backward plumbing."""

import numpy as np
import pytest

from groupdecode.nn.model import ModelConfig, WavenetClassifier, cross_entropy
from reference_impls import naive_forward


def small_config(**overrides):
    base = dict(
        n_channels=4,
        n_classes=3,
        n_timesteps=16,
        n_layers=3,
        kernel_size=2,
        hidden_channels=5,
        fc_hidden=7,
        dropout=0.0,
    )
    base.update(overrides)
    return ModelConfig(**base)


class TestModelConfig:
    def test_receptive_field_is_power_of_two(self):
        cfg = ModelConfig(n_channels=306, n_classes=118, n_timesteps=256, n_layers=6)
        assert cfg.receptive_field == 64
        assert cfg.dilations == (1, 2, 4, 8, 16, 32)
        assert cfg.n_pooled == 4

    def test_input_channels_with_embeddings(self):
        cfg = ModelConfig(
            n_channels=306,
            n_classes=118,
            n_timesteps=256,
            embedding_size=10,
            n_subjects=15,
        )
        assert cfg.input_channels == 316

    def test_receptive_field_must_divide_timesteps(self):
        with pytest.raises(ValueError, match="does not divide"):
            ModelConfig(n_channels=2, n_classes=2, n_timesteps=100, n_layers=6)

    def test_kernel_size_one_rf_is_one(self):
        cfg = small_config(kernel_size=1, n_timesteps=10)
        assert cfg.receptive_field == 1
        assert cfg.n_pooled == 10

    @pytest.mark.parametrize(
        "overrides",
        [
            {"dropout": 1.0},
            {"dropout": -0.1},
            {"activation": "relu"},
            {"downsample": "max"},
            {"embedding_size": -1},
            {"n_layers": 0},
            {"activation_mask": (True,)},
        ],
    )
    def test_invalid_configs(self, overrides):
        with pytest.raises(ValueError):
            small_config(**overrides)

    def test_embeddings_need_subjects(self):
        with pytest.raises(ValueError, match="n_subjects"):
            small_config(embedding_size=4, n_subjects=0)

    def test_activation_mask_selects_identity(self):
        cfg = small_config(activation_mask=(True, False, True))
        assert cfg.layer_activation(0) == "asinh"
        assert cfg.layer_activation(1) == "identity"
        assert cfg.layer_activation(2) == "asinh"

    def test_dict_roundtrip(self):
        cfg = small_config(
            embedding_size=4, n_subjects=3, activation_mask=(True, False, True)
        )
        back = ModelConfig.from_dict(cfg.to_dict())
        assert back == cfg

    def test_dict_roundtrip_through_json(self):
        import json

        cfg = small_config()
        back = ModelConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back == cfg


class TestParameters:
    def test_shapes_and_order(self):
        cfg = small_config(embedding_size=2, n_subjects=4)
        model = WavenetClassifier(cfg, seed=0)
        p = model.parameters()
        assert p["conv0_w"].shape == (5, 6, 2)  # first layer sees C+E inputs
        assert p["conv1_w"].shape == (5, 5, 2)
        assert p["conv2_w"].shape == (5, 5, 2)
        assert p["fc1_w"].shape == (7, 5 * cfg.n_pooled)
        assert p["fc2_w"].shape == (3, 7)
        assert p["embedding"].shape == (4, 2)
        assert all(v.dtype == np.float32 for v in p.values())

    def test_biases_zero_initialised(self):
        model = WavenetClassifier(small_config(), seed=1)
        for name, arr in model.parameters().items():
            if name.endswith("_b"):
                assert np.all(arr == 0.0)

    def test_no_bias_keys_when_disabled(self):
        model = WavenetClassifier(small_config(use_bias=False), seed=0)
        assert not any(k.endswith("_b") for k in model.parameters())

    def test_seed_determinism(self):
        cfg = small_config()
        a = WavenetClassifier(cfg, seed=5).parameters()
        b = WavenetClassifier(cfg, seed=5).parameters()
        c = WavenetClassifier(cfg, seed=6).parameters()
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert any(not np.array_equal(a[k], c[k]) for k in a)

    def test_copy_is_deep(self):
        model = WavenetClassifier(small_config(), seed=0)
        clone = model.copy()
        clone.params["fc2_w"][0, 0] += 1.0
        assert model.params["fc2_w"][0, 0] != clone.params["fc2_w"][0, 0]

    def test_astype(self):
        model = WavenetClassifier(small_config(), seed=0)
        dbl = model.astype(np.float64)
        assert dbl.dtype == np.float64
        assert all(v.dtype == np.float64 for v in dbl.parameters().values())
        assert np.allclose(dbl.params["fc1_w"], model.params["fc1_w"])


class TestForward:
    @pytest.mark.parametrize("activation", ["asinh", "identity"])
    @pytest.mark.parametrize("use_bias", [True, False])
    def test_matches_straight_line_oracle(self, activation, use_bias):
        cfg = small_config(activation=activation, use_bias=use_bias)
        model = WavenetClassifier(cfg, seed=2).astype(np.float64)
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, cfg.n_channels, cfg.n_timesteps))
        logits = model.forward(x)
        oracle_cfg = {
            "n_layers": cfg.n_layers,
            "kernel_size": cfg.kernel_size,
            "receptive_field": cfg.receptive_field,
            "activation": activation,
            "use_bias": use_bias,
            "downsample": "mean",
        }
        params64 = {k: np.asarray(v, dtype=np.float64) for k, v in model.params.items()}
        for i in range(3):
            ref = naive_forward(params64, oracle_cfg, x[i])
            assert np.allclose(logits[i], ref, atol=1e-9)

    def test_matches_oracle_with_embeddings(self):
        cfg = small_config(embedding_size=3, n_subjects=2)
        model = WavenetClassifier(cfg, seed=3).astype(np.float64)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, cfg.n_channels, cfg.n_timesteps))
        subject_idx = np.array([1, 0])
        logits = model.forward(x, subject_idx)
        oracle_cfg = {
            "n_layers": cfg.n_layers,
            "kernel_size": cfg.kernel_size,
            "receptive_field": cfg.receptive_field,
            "activation": "asinh",
            "use_bias": True,
            "downsample": "mean",
        }
        params64 = {k: np.asarray(v, dtype=np.float64) for k, v in model.params.items()}
        for i in range(2):
            ref = naive_forward(
                params64, oracle_cfg, x[i], e=params64["embedding"][subject_idx[i]]
            )
            assert np.allclose(logits[i], ref, atol=1e-9)

    def test_matches_oracle_stride_downsample(self):
        cfg = small_config(downsample="stride")
        model = WavenetClassifier(cfg, seed=4).astype(np.float64)
        x = np.random.default_rng(2).standard_normal((1, cfg.n_channels, cfg.n_timesteps))
        oracle_cfg = {
            "n_layers": cfg.n_layers,
            "kernel_size": cfg.kernel_size,
            "receptive_field": cfg.receptive_field,
            "activation": "asinh",
            "use_bias": True,
            "downsample": "stride",
        }
        params64 = {k: np.asarray(v, dtype=np.float64) for k, v in model.params.items()}
        ref = naive_forward(params64, oracle_cfg, x[0])
        assert np.allclose(model.forward(x)[0], ref, atol=1e-9)

    def test_batch_consistency(self):
        cfg = small_config()
        model = WavenetClassifier(cfg, seed=5)
        x = np.random.default_rng(3).standard_normal((4, 4, 16)).astype(np.float32)
        full = model.forward(x)
        singles = np.concatenate([model.forward(x[i : i + 1]) for i in range(4)])
        assert np.allclose(full, singles, atol=1e-6)

    def test_input_shape_checked(self):
        model = WavenetClassifier(small_config(), seed=0)
        with pytest.raises(ValueError, match="input shape"):
            model.forward(np.zeros((2, 5, 16)))

    def test_train_mode_needs_rng_with_dropout(self):
        model = WavenetClassifier(small_config(dropout=0.5), seed=0)
        with pytest.raises(ValueError, match="rng"):
            model.forward(np.zeros((1, 4, 16)), mode="train")

    def test_unknown_mode(self):
        model = WavenetClassifier(small_config(), seed=0)
        with pytest.raises(ValueError, match="mode"):
            model.forward(np.zeros((1, 4, 16)), mode="predict")

    def test_embedding_requires_subject_idx(self):
        model = WavenetClassifier(small_config(embedding_size=2, n_subjects=2), seed=0)
        with pytest.raises(ValueError, match="subject_idx"):
            model.forward(np.zeros((1, 4, 16)))

    def test_embedding_override_equivalent_to_lookup(self):
        cfg = small_config(embedding_size=2, n_subjects=3)
        model = WavenetClassifier(cfg, seed=1)
        x = np.random.default_rng(4).standard_normal((2, 4, 16)).astype(np.float32)
        idx = np.array([2, 0])
        direct = model.forward(x, idx)
        override = model.forward(x, embedding_override=model.params["embedding"][idx])
        assert np.allclose(direct, override)

    def test_override_shape_checked(self):
        model = WavenetClassifier(small_config(embedding_size=2, n_subjects=2), seed=0)
        with pytest.raises(ValueError, match="embedding_override"):
            model.forward(np.zeros((1, 4, 16)), embedding_override=np.zeros((1, 5)))

    def test_dropout_train_reproducible_with_seeded_rng(self):
        model = WavenetClassifier(small_config(dropout=0.4), seed=0)
        x = np.random.default_rng(5).standard_normal((2, 4, 16)).astype(np.float32)
        a = model.forward(x, mode="train", rng=np.random.default_rng(9))
        b = model.forward(x, mode="train", rng=np.random.default_rng(9))
        c = model.forward(x, mode="train", rng=np.random.default_rng(10))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_eval_ignores_dropout(self):
        model = WavenetClassifier(small_config(dropout=0.9), seed=0)
        x = np.random.default_rng(6).standard_normal((2, 4, 16)).astype(np.float32)
        assert np.array_equal(model.forward(x), model.forward(x))


class TestBackward:
    def test_grads_cover_all_params_in_order(self):
        cfg = small_config(embedding_size=2, n_subjects=3)
        model = WavenetClassifier(cfg, seed=0)
        x = np.random.default_rng(0).standard_normal((4, 4, 16)).astype(np.float32)
        labels = np.array([0, 1, 2, 0])
        _, grads, _ = model.loss_and_grads(x, labels, subject_idx=np.array([0, 1, 1, 2]))
        assert list(grads) == list(model.parameters())
        for k in grads:
            assert grads[k].shape == model.params[k].shape

    def test_absent_subject_embedding_grads_zero(self):
        cfg = small_config(embedding_size=2, n_subjects=4)
        model = WavenetClassifier(cfg, seed=0)
        x = np.random.default_rng(1).standard_normal((3, 4, 16)).astype(np.float32)
        labels = np.array([0, 1, 2])
        _, grads, _ = model.loss_and_grads(x, labels, subject_idx=np.array([0, 0, 2]))
        emb = grads["embedding"]
        assert np.any(emb[0] != 0)
        assert np.all(emb[1] == 0)
        assert np.any(emb[2] != 0)
        assert np.all(emb[3] == 0)

    def test_override_blocks_embedding_grads(self):
        cfg = small_config(embedding_size=2, n_subjects=2)
        model = WavenetClassifier(cfg, seed=0)
        x = np.random.default_rng(2).standard_normal((2, 4, 16)).astype(np.float32)
        logits, cache = model.forward(
            x,
            embedding_override=np.zeros((2, 2), dtype=np.float32),
            mode="train",
            rng=np.random.default_rng(0),
            return_cache=True,
        )
        _, dlogits = cross_entropy(logits, np.array([0, 1]))
        grads = model.backward(dlogits, cache)
        assert np.all(grads["embedding"] == 0)

    def test_loss_and_grads_deterministic_given_rng(self):
        model = WavenetClassifier(small_config(dropout=0.3), seed=0)
        x = np.random.default_rng(3).standard_normal((3, 4, 16)).astype(np.float32)
        labels = np.array([0, 1, 2])
        l1, g1, _ = model.loss_and_grads(x, labels, rng=np.random.default_rng(7))
        l2, g2, _ = model.loss_and_grads(x, labels, rng=np.random.default_rng(7))
        assert l1 == l2
        assert all(np.array_equal(g1[k], g2[k]) for k in g1)


class TestPredictAndActivations:
    def test_predict_is_argmax(self):
        model = WavenetClassifier(small_config(), seed=0)
        x = np.random.default_rng(0).standard_normal((5, 4, 16)).astype(np.float32)
        preds = model.predict(x)
        assert np.array_equal(preds, model.forward(x).argmax(axis=1))

    def test_predict_batching_equivalent(self):
        model = WavenetClassifier(small_config(), seed=0)
        x = np.random.default_rng(1).standard_normal((7, 4, 16)).astype(np.float32)
        assert np.array_equal(model.predict(x, batch_size=2), model.predict(x, batch_size=256))

    def test_conv_activations_default_is_last_layer(self):
        cfg = small_config()
        model = WavenetClassifier(cfg, seed=0)
        x = np.random.default_rng(2).standard_normal((2, 4, 16)).astype(np.float32)
        last = model.conv_activations(x)
        explicit = model.conv_activations(x, layer=cfg.n_layers - 1)
        assert np.array_equal(last, explicit)
        assert last.shape == (2, cfg.hidden_channels, cfg.n_timesteps)

    def test_conv_activations_pre_activation(self):
        model = WavenetClassifier(small_config(), seed=0)
        x = np.random.default_rng(3).standard_normal((1, 4, 16)).astype(np.float32)
        z = model.conv_activations(x, layer=1, pre_activation=True)
        h = model.conv_activations(x, layer=1)
        assert np.allclose(np.arcsinh(z), h, atol=1e-6)

    def test_conv_activations_layer_range(self):
        model = WavenetClassifier(small_config(), seed=0)
        with pytest.raises(ValueError, match="out of range"):
            model.conv_activations(np.zeros((1, 4, 16)), layer=3)

    def test_conv_activations_accepts_single_trial(self):
        model = WavenetClassifier(small_config(), seed=0)
        x = np.random.default_rng(4).standard_normal((4, 16)).astype(np.float32)
        out = model.conv_activations(x)
        assert out.shape[0] == 1


class TestArchitecturalInvariants:
    def test_receptive_field_locality(self):
        # a bump at t0 may only touch conv outputs in [t0, t0 + 2^L - 1]
        cfg = small_config(n_timesteps=32, n_layers=3)
        model = WavenetClassifier(cfg, seed=0).astype(np.float64)
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 4, 32))
        base = model.conv_activations(x)
        t0 = 9
        bumped = x.copy()
        bumped[0, :, t0] += 3.0
        out = model.conv_activations(bumped)
        changed = np.flatnonzero(np.any(np.abs(out - base) > 1e-12, axis=(0, 1)))
        assert changed.min() >= t0
        assert changed.max() <= t0 + cfg.receptive_field - 1

    def test_conv_layers_preserve_length(self):
        cfg = small_config()
        model = WavenetClassifier(cfg, seed=0)
        x = np.zeros((2, 4, 16), dtype=np.float32)
        for layer in range(cfg.n_layers):
            assert model.conv_activations(x, layer=layer).shape[-1] == 16

    def test_linear_biasfree_model_is_homogeneous_and_additive(self):
        cfg = small_config(activation="identity", use_bias=False)
        model = WavenetClassifier(cfg, seed=1).astype(np.float64)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 4, 16))
        y = rng.standard_normal((2, 4, 16))
        assert np.allclose(model.forward(3.5 * x), 3.5 * model.forward(x), atol=1e-9)
        assert np.allclose(
            model.forward(x + y), model.forward(x) + model.forward(y), atol=1e-9
        )

    def test_logits_ignore_other_subjects_embeddings(self):
        cfg = small_config(embedding_size=3, n_subjects=4)
        model = WavenetClassifier(cfg, seed=2)
        x = np.random.default_rng(2).standard_normal((2, 4, 16)).astype(np.float32)
        idx = np.array([1, 1])
        before = model.forward(x, idx)
        model.params["embedding"][0] += 5.0
        model.params["embedding"][3] -= 2.0
        after = model.forward(x, idx)
        assert np.array_equal(before, after)
        model.params["embedding"][1] += 1.0
        assert not np.allclose(before, model.forward(x, idx))
