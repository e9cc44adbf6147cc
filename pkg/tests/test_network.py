"""Network construction, activation-slot replacement, LoRA adapters,
parameter bookkeeping, and checkpoint round-trips."""

import numpy as np
import pytest

from curvetune.activations import logistic
from curvetune.network import (MlpSpec, attach_lora, build_mlp,
                               load_checkpoint, network_from_dict,
                               network_to_dict, param_count,
                               replace_relu_shared, replace_relu_trainable,
                               save_checkpoint)
from curvetune.training import TrainConfig, train_base
from curvetune.data import gen_annulus


@pytest.fixture(scope="module")
def small_net():
    return build_mlp(MlpSpec(widths=(2, 7, 1), seed=0))


@pytest.fixture(scope="module")
def probe_points():
    rng = np.random.default_rng(1)
    return rng.uniform(-2, 2, size=(1000, 2))


class TestBuild:
    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            MlpSpec(widths=(2,))
        with pytest.raises(ValueError):
            MlpSpec(widths=(2, 0, 1))

    @pytest.mark.parametrize("widths", [(2, 20, 20, 1), (2, 7, 1), (1,) + (64,) * 8 + (1,)])
    def test_paper_shapes_build_and_run(self, widths):
        net = build_mlp(MlpSpec(widths=widths, seed=3))
        X = np.zeros((4, widths[0]))
        assert net.predict(X).shape == (4, widths[-1])
        assert net.is_pure_relu()

    def test_biases_zero_weights_bounded(self, small_net):
        for layer in small_net.layers:
            assert np.all(layer.b.value == 0.0)
        bound0 = np.sqrt(6.0 / (6.0 * 2))
        assert np.abs(small_net.layers[0].W.value).max() < bound0

    def test_seed_determinism(self):
        a = build_mlp(MlpSpec(widths=(2, 5, 1), seed=9))
        b = build_mlp(MlpSpec(widths=(2, 5, 1), seed=9))
        assert np.array_equal(a.layers[0].W.value, b.layers[0].W.value)


class TestSharedReplacement:
    def test_beta_one_preserves_outputs(self, small_net, probe_points):
        steered = replace_relu_shared(small_net, beta=1.0, c=0.5)
        diff = np.abs(steered.predict(probe_points) - small_net.predict(probe_points))
        assert diff.max() <= 1e-4

    def test_beta_zero_c_one_is_affine(self, small_net):
        steered = replace_relu_shared(small_net, beta=0.0, c=1.0)
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.uniform(-2, 2, size=(1, 2))
            h = rng.uniform(-1, 1, size=(1, 2))
            second = (steered.predict(x + h) + steered.predict(x - h)
                      - 2.0 * steered.predict(x))
            assert np.abs(second).max() <= 1e-8

    def test_weights_untouched_and_input_unmodified(self, small_net):
        before = small_net.weight_checksum()
        steered = replace_relu_shared(small_net, beta=0.8)
        assert small_net.weight_checksum() == before
        assert steered.weight_checksum() == before
        assert small_net.is_pure_relu()

    def test_requires_relu_slots(self, small_net):
        steered = replace_relu_shared(small_net, beta=0.8)
        with pytest.raises(ValueError):
            replace_relu_shared(steered, beta=0.9)

    def test_continuity_in_beta(self, small_net, probe_points):
        pts = probe_points[:100]
        deltas = []
        for b1, b2 in [(0.8, 0.81), (0.9, 0.905), (0.5, 0.51)]:
            d = np.abs(replace_relu_shared(small_net, beta=b1).predict(pts)
                       - replace_relu_shared(small_net, beta=b2).predict(pts)).max()
            deltas.append(d / abs(b2 - b1))
        C = 10.0 * max(deltas)
        d = np.abs(replace_relu_shared(small_net, beta=0.7).predict(pts)
                   - replace_relu_shared(small_net, beta=0.700001).predict(pts)).max()
        assert d <= C * 0.000001 + 1e-12


class TestTrainableReplacement:
    def test_param_count_and_freeze(self, small_net):
        tct = replace_relu_trainable(small_net)
        assert param_count(tct, "ct") == 14
        assert all(not p.trainable for p in tct.dense_params())

    def test_decoded_init(self, small_net):
        tct = replace_relu_trainable(small_net)
        beta, c = tct.slots[0].decoded()
        assert beta == pytest.approx(np.full(7, logistic(1.386)), abs=1e-12)
        assert c == pytest.approx(np.full(7, 0.5), abs=1e-15)

    def test_init_matches_shared_steering(self, small_net, probe_points):
        tct = replace_relu_trainable(small_net)
        shared = replace_relu_shared(small_net, beta=logistic(1.386), c=0.5)
        diff = np.abs(tct.predict(probe_points) - shared.predict(probe_points))
        assert diff.max() <= 1e-12


class TestLora:
    def test_param_count_example(self, small_net):
        lora = attach_lora(small_net, r=1, alpha=1.0)
        assert param_count(lora, "lora") == 17
        assert param_count(lora, "all") == param_count(lora, "lora") + sum(
            p.value.size for p in lora.dense_params()) + param_count(lora, "ct")

    def test_unknown_category_rejected(self, small_net):
        with pytest.raises(ValueError):
            param_count(small_net, "bogus")

    def test_noop_at_init(self, small_net, probe_points):
        lora = attach_lora(small_net, r=2, alpha=1.0, seed=5)
        assert np.array_equal(lora.predict(probe_points), small_net.predict(probe_points))
        for layer in lora.layers:
            assert np.all(layer.lora.A.value == 0.0)
            assert not layer.W.trainable

    def test_rank_validation(self, small_net):
        with pytest.raises(ValueError):
            attach_lora(small_net, r=0, alpha=1.0)

    def test_gradients_only_into_adapters(self, small_net):
        lora = attach_lora(small_net, r=1, alpha=1.0, seed=5)
        data = gen_annulus(64, 0)
        from curvetune import autodiff as ad
        lora.zero_grads()
        X, y = data.train
        loss = ad.bce_with_logits_loss(lora.forward(X), y.reshape(-1, 1))
        ad.backward(loss)
        assert all(np.all(p.grad == 0.0) for p in lora.dense_params())
        assert any(np.any(p.grad != 0.0) for p in lora.lora_params())


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path, small_net):
        data = gen_annulus(64, 0)
        net = build_mlp(MlpSpec(widths=(2, 5, 1), seed=1))
        train_base(net, data, TrainConfig(steps=50, seed=1))
        tct = replace_relu_trainable(net)
        lora = attach_lora(net, r=1, alpha=0.5, seed=2)
        for candidate in (net, tct, lora, replace_relu_shared(net, beta=0.83)):
            path = tmp_path / "net.ckpt.json"
            save_checkpoint(candidate, path)
            loaded = load_checkpoint(path)
            pts = np.random.default_rng(0).uniform(-2, 2, size=(50, 2))
            assert np.array_equal(loaded.predict(pts), candidate.predict(pts))
            # serialized forms agree after a round trip
            assert network_to_dict(loaded) == network_to_dict(candidate)

    def test_version_gate(self):
        d = network_to_dict(build_mlp(MlpSpec(widths=(2, 3, 1), seed=0)))
        d["format_version"] = 99
        with pytest.raises(ValueError):
            network_from_dict(d)
