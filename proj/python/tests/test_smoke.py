import numpy as np
import pytest

import lrdcompress as lrd


def test_svd_and_truncation():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 4))
    u, s, vt = lrd.svd(a)
    np.testing.assert_allclose(u @ np.diag(s) @ vt, a, atol=1e-12)
    np.testing.assert_allclose(s, np.linalg.svd(a, compute_uv=False), rtol=1e-12)
    left, right = lrd.truncated_svd(a, 2)
    assert left.shape == (6, 2) and right.shape == (2, 4)


def test_unfold_fold_mode_mult():
    rng = np.random.default_rng(1)
    t = rng.standard_normal((2, 3, 4))
    m1 = lrd.unfold(t, 1)
    np.testing.assert_array_equal(m1, np.moveaxis(t, 1, 0).reshape(3, -1))
    np.testing.assert_array_equal(lrd.fold(m1, 1, [2, 3, 4]), t)
    m = rng.standard_normal((5, 3))
    np.testing.assert_allclose(lrd.mode_mult(t, m, 1), np.einsum("ij,ajk->aik", m, t))


def test_tucker2_full_rank_is_exact():
    rng = np.random.default_rng(2)
    w = rng.standard_normal((8, 6, 3, 3))
    d = lrd.decompose_tucker2(w, 6, 8)
    assert d["kind"] == "tucker2"
    assert d["recon_rel_error"] < 1e-8
    x = rng.standard_normal((1, 6, 7, 7))
    y = lrd.conv_forward(w, x, 1, 1)
    z = lrd.conv_forward(d["last"], lrd.conv_forward(d["core"], lrd.conv_forward(d["first"], x), 1, 1))
    np.testing.assert_allclose(z, y, rtol=1e-9, atol=1e-9)


def test_rank_rules():
    assert lrd.pr_rank_dense(2048, 1000, 1.3) == 517
    assert lrd.pr_ranks_tucker2(64, 64, 3, 3.0) == (31, 31)
    assert lrd.quantize_rank(517, 32, 1000) == 512
    assert lrd.apply_weakening(10, 64, 0.5) == 37
    assert lrd.vbmf_rank(np.zeros((8, 8))) == 0


def test_plan_and_count():
    arch = lrd.build_resnet(50)
    assert lrd.count_params(arch)["total"] == 25_503_912
    layers, warnings = lrd.select_layers(arch, "mode1")
    assert len(layers) == 17 and not warnings
    plan = lrd.plan_ranks(arch)
    assert lrd.load(plan)["entries"]["fc"]["ranks"] == [512]
    assert lrd.count_params(arch, plan)["total"] < 25_503_912


def test_compress_round_trip(tmp_path):
    arch = lrd.build_resnet(18, 32)
    weights = lrd.random_checkpoint(arch, 3)
    plan = lrd.plan_ranks(arch, mode="custom", include=["block1.*", "fc"], quantum=8)
    comp_arch, comp = lrd.compress(arch, weights, plan, workers=1, hooi_iters=3)
    assert "fc.1.bias" in comp
    path = str(tmp_path / "c.lrdc")
    lrd.write_checkpoint(path, comp)
    back = lrd.read_checkpoint(path)
    assert list(back) == list(comp)
    np.testing.assert_array_equal(back["fc.1.bias"], comp["fc.1.bias"].astype(np.float32))
    report = lrd.verify(arch, weights, comp_arch, back, input_hw=8)
    assert 0 < report["worst_recon"] < 1


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(ValueError):
        lrd.truncated_svd(np.eye(3), 4)
    with pytest.raises(ValueError):
        lrd.build_resnet(99)
    with pytest.raises(OSError):
        lrd.read_checkpoint(str(tmp_path / "missing.lrdc"))
    with pytest.raises(ValueError):
        lrd.plan_ranks(lrd.build_resnet(18), method="vbmf")
