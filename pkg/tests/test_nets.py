import numpy as np
import pytest

from gradcases import network_case
from hsirecon.autograd import Tensor, grad_check
from hsirecon.nets import (
    ARCHITECTURES, HRNet, HSCNND, ModelSpec, MSTPlusPlus, block_diagonal, build_network,
    count_params_flops, default_spec, s_msa,
)
from hsirecon.nets.base import ReconNetwork


def rgb(rng, h=16, w=16):
    return rng.uniform(0, 1, size=(3, h, w))


def s_msa_oracle(x, p, heads):
    """Spectral attention written out term by term with explicit loops over heads and channels."""
    c, h, w = x.shape
    d = c // heads
    tokens = x.reshape(c, h * w).T  # [HW, C]
    q, k, v = tokens @ p["q"], tokens @ p["k"], tokens @ p["v"]
    out = np.zeros((h * w, c))
    for j in range(heads):
        cols = slice(j * d, (j + 1) * d)
        qj, kj, vj = q[:, cols], k[:, cols], v[:, cols]
        qj = qj / np.linalg.norm(qj, axis=0)
        kj = kj / np.linalg.norm(kj, axis=0)
        attn = np.zeros((d, d))
        for a in range(d):
            logits = np.array([p["rescale"][j] * np.dot(kj[:, a], qj[:, b]) for b in range(d)])
            e = np.exp(logits - logits.max())
            attn[a] = e / e.sum()
        for a in range(d):
            out[:, j * d + a] = sum(attn[a, b] * vj[:, b] for b in range(d))
    out = out @ p["proj_w"] + p["proj_b"]
    v_img = v.T.reshape(c, h, w)
    padded = np.pad(v_img, ((0, 0), (1, 1), (1, 1)))
    pos = np.zeros((c, h, w))
    for ch in range(c):
        for i in range(3):
            for jj in range(3):
                pos[ch] += p["pos_w"][ch, 0, i, jj] * padded[ch, i:i + h, jj:jj + w]
    return out.T.reshape(c, h, w) + pos


def attention_params(rng, c, heads):
    return {"q": rng.normal(size=(c, c)), "k": rng.normal(size=(c, c)), "v": rng.normal(size=(c, c)),
            "proj_w": rng.normal(size=(c, c)), "proj_b": rng.normal(size=c),
            "rescale": rng.uniform(0.5, 2.0, size=heads), "pos_w": rng.normal(size=(c, 1, 3, 3))}


class TestContracts:
    @pytest.mark.parametrize("arch", ARCHITECTURES)
    @pytest.mark.parametrize("size", [(8, 8), (16, 24)])
    def test_shape(self, rng, arch, size):
        out = build_network(default_spec(arch)).predict(rgb(rng, *size))
        assert out.shape == (31,) + size

    @pytest.mark.parametrize("arch", ARCHITECTURES)
    def test_batch_and_out_bands(self, rng, arch):
        net = build_network(default_spec(arch, out_bands=7))
        assert net.predict(rng.uniform(size=(2, 3, 8, 8))).shape == (2, 7, 8, 8)

    @pytest.mark.parametrize("arch", ARCHITECTURES)
    def test_deterministic(self, rng, arch):
        x = rgb(rng, 8, 8)
        a = build_network(default_spec(arch), seed=3).predict(x)
        b = build_network(default_spec(arch), seed=3).predict(x)
        assert a.tobytes() == b.tobytes()

    def test_bad_input(self, rng):
        with pytest.raises(ValueError, match="RGB"):
            HSCNND()(rng.uniform(size=(4, 8, 8)))

    def test_divisibility(self, rng):
        with pytest.raises(ValueError, match="divisible by 8"):
            HRNet()(rgb(rng, 12, 16))
        with pytest.raises(ValueError, match="divisible by 2"):
            MSTPlusPlus()(rgb(rng, 9, 8))

    @pytest.mark.parametrize("bad", [dict(architecture="UNET"), dict(architecture="HSCNN_D", depth=0),
                                     dict(architecture="HRNET", base_channels=10),
                                     dict(architecture="MST_PP", base_channels=9, heads=2)])
    def test_spec_validation(self, bad):
        with pytest.raises(ValueError):
            ModelSpec(**bad)

    def test_spec_mismatch(self):
        with pytest.raises(ValueError, match="spec"):
            HRNet(default_spec("MST_PP"))

    @pytest.mark.parametrize("arch", ARCHITECTURES)
    def test_network_gradients(self, arch):
        fn, params = network_case(arch)
        assert grad_check(fn, params, eps=1e-5, max_coords=64) < 1e-4

    @pytest.mark.parametrize("arch", ARCHITECTURES)
    def test_save_load(self, tmp_path, rng, arch):
        net = build_network(default_spec(arch), seed=1)
        net.save(tmp_path / "p.txt")
        other = build_network(default_spec(arch), seed=2).load(tmp_path / "p.txt")
        x = rgb(rng, 8, 8)
        assert other.predict(x).tobytes() == net.predict(x).tobytes()

    def test_load_state_checks(self):
        net = HSCNND()
        with pytest.raises(ValueError, match="names differ"):
            net.load_state_dict({"stem.weight": np.zeros((16, 3, 3, 3))})
        state = net.state_dict()
        state["stem.bias"] = np.zeros(5)
        with pytest.raises(ValueError, match="shape"):
            net.load_state_dict(state)

    def test_glorot_init(self):
        w = HSCNND(seed=0).params["stem.weight"].data
        limit = np.sqrt(6 / (3 * 9 + 16 * 9))
        assert np.abs(w).max() <= limit and np.abs(w).max() > 0.8 * limit
        assert np.all(HSCNND(seed=0).params["stem.bias"].data == 0)


class TestHscnnD:
    def test_concat_law(self, rng):
        spec = ModelSpec("HSCNN_D", base_channels=16, depth=5, growth=8)
        net = HSCNND(spec)
        net(rgb(rng, 8, 8))
        expected = [16 + k * 8 for k in range(5)]
        assert net.traced_block_inputs == expected == net.block_input_channels()
        assert net.params["head.weight"].shape[1] == 16 + 5 * 8

    def test_zero_head_gives_bias(self, rng):
        net = HSCNND()
        net.params["head.weight"].data[:] = 0.0
        net.params["head.bias"].data[:] = np.arange(31.0)
        out = net.predict(rgb(rng, 8, 8))
        np.testing.assert_array_equal(out, np.broadcast_to(np.arange(31.0)[:, None, None], out.shape))

    def test_both_branches_used(self, rng):
        net = HSCNND()
        x = rgb(rng, 8, 8)
        base = net.predict(x)
        for branch in ("narrow", "wide"):
            probe = HSCNND()
            probe.params[f"block0.{branch}.weight"].data[:] = 0.0
            assert not np.allclose(probe.predict(x), base)


class TestHrnet:
    def test_level_sizes(self, rng):
        net = HRNet()
        net(rgb(rng, 16, 24))
        assert net.traced_level_shapes == {0: (16, 24), 1: (8, 12), 2: (4, 6), 3: (2, 3)}

    def test_level_inputs_are_unshuffled(self):
        net = HRNet()
        for i in range(4):
            assert net.params[f"level{i}.embed.weight"].shape[1] == 3 * 4 ** i
        assert "level3.tail.weight" in net.params and "level2.tail.weight" not in net.params
        assert net.params["level3.tail.weight"].shape[2:] == (1, 1)

    def test_dense_block_has_five_convs(self):
        names = [n for n in HRNet().params if n.startswith("level0.rdb0.") and n.endswith("weight")]
        assert len(names) == 5

    def test_global_shortcut_is_live(self, rng):
        x = rgb(rng, 8, 8)
        net = HRNet(seed=4)
        with_shortcut = net.predict(x)
        net.global_shortcut = False
        assert np.abs(net.predict(x) - with_shortcut).max() > 1e-6


class TestMst:
    def test_smsa_matches_oracle(self, rng):
        x = rng.normal(size=(4, 3, 5))
        p = attention_params(rng, 4, 2)
        out = s_msa(Tensor(x[None]), {k: Tensor(v) for k, v in p.items()}, heads=2).data[0]
        np.testing.assert_allclose(out, s_msa_oracle(x, p, 2), atol=1e-12)

    def test_smsa_zero_values(self, rng):
        p = attention_params(rng, 4, 1)
        p.update(v=np.zeros((4, 4)), pos_w=np.zeros((4, 1, 3, 3)), proj_b=np.zeros(4))
        out = s_msa(Tensor(rng.normal(size=(1, 4, 3, 3))), {k: Tensor(v) for k, v in p.items()}, 1)
        np.testing.assert_array_equal(out.data, 0.0)

    @pytest.mark.parametrize("size", [(4, 4), (6, 10)])
    def test_attention_is_spectral(self, rng, size):
        p = {k: Tensor(v) for k, v in attention_params(rng, 8, 2).items()}
        _, attn = s_msa(Tensor(rng.normal(size=(1, 8) + size)), p, 2, return_attention=True)
        full = block_diagonal(attn.data[0])
        assert full.shape == (8, 8)
        np.testing.assert_allclose(full.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(full >= 0)

    def test_head_divisibility(self, rng):
        p = {k: Tensor(v) for k, v in attention_params(rng, 6, 4).items()}
        with pytest.raises(ValueError, match="heads"):
            s_msa(Tensor(rng.normal(size=(1, 6, 2, 2))), p, 4)

    def test_network_attention_maps(self, rng):
        net = MSTPlusPlus()
        net(rgb(rng, 8, 8))
        c = net.spec.base_channels
        for name, attn in net.attention_maps.items():
            heads = attn.shape[1]
            width = 2 * c if name.endswith("mid") else c
            assert block_diagonal(attn[0]).shape == (width, width)
            assert heads * attn.shape[2] == width
            np.testing.assert_allclose(attn.sum(-1), 1.0, atol=1e-12)

    def test_stage_count_scales_params(self):
        counts = [MSTPlusPlus(ModelSpec("MST_PP", base_channels=8, depth=d)).n_params for d in (1, 2, 3)]
        assert counts[2] - counts[1] == counts[1] - counts[0] > 0
        one = MSTPlusPlus(ModelSpec("MST_PP", base_channels=8, depth=1)).params
        two = MSTPlusPlus(ModelSpec("MST_PP", base_channels=8, depth=2)).params
        stage0 = {n[len("stage0."):]: p.shape for n, p in one.items() if n.startswith("stage0.")}
        stage1 = {n[len("stage1."):]: p.shape for n, p in two.items() if n.startswith("stage1.")}
        assert stage0 == stage1


class TestAccounting:
    def test_single_conv_params(self):
        class OneConv(ReconNetwork):
            architecture = "HSCNN_D"

            def build(self):
                self.add_conv("c", 3, 8, 3)

        assert OneConv().n_params == 224

    @pytest.mark.parametrize("arch", ARCHITECTURES)
    def test_mac_scaling(self, arch):
        small = count_params_flops(default_spec(arch), 16, 16)
        large = count_params_flops(default_spec(arch), 32, 32)
        assert large["params"] == small["params"]
        # the channel-attention MLP sees pooled 1x1 features, a fixed cost per image
        fixed = 0
        if arch == "HRNET":
            c = default_spec(arch).base_channels
            fixed = 4 * default_spec(arch).depth * 2 * c * (c // 4)
        assert large["macs"] - fixed == 4 * (small["macs"] - fixed)

    def test_hscnn_macs_by_hand(self):
        spec = default_spec("HSCNN_D")
        pixels = 8 * 8
        macs = 3 * 16 * 9
        for c_in in HSCNND(spec).block_input_channels():
            macs += c_in * 16 + c_in * 16 * 9
        macs += (16 + 4 * 16) * 31
        assert count_params_flops(spec, 8, 8)["macs"] == macs * pixels

    def test_mst_smallest(self):
        counts = {a: count_params_flops(default_spec(a), 16, 16)["params"] for a in ARCHITECTURES}
        assert counts["MST_PP"] == min(counts.values())
        assert counts == {"HSCNN_D": 28687, "HRNET": 120207, "MST_PP": 19360}
