import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vfiadapt.imaging import (FLO_MAGIC, FlowBoundError, FlowField, ImageFormatError,
                              as_frame, backward_warp, gaussian_pyramid, load_frame,
                              pyramid_shapes, quantize, read_flo, save_frame, warp, write_flo)

from oracles import fingerprint, shift_oracle


def _ppm(path, w, h, payload):
    path.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + bytes(payload))
    return path


# -- containers --------------------------------------------------------------

def test_as_frame_rejects_out_of_range():
    with pytest.raises(ValueError):
        as_frame(np.full((4, 4, 3), 1.5))
    assert as_frame(np.full((4, 4, 3), 1.5), clamp=True).max() == 1.0


def test_as_frame_rejects_nan():
    a = np.zeros((4, 4))
    a[1, 1] = np.nan
    with pytest.raises(ValueError):
        as_frame(a)


def test_flowfield_sanity_bound():
    FlowField(np.full((4, 6), 6.0), np.zeros((4, 6))).check_bound()
    with pytest.raises(FlowBoundError):
        FlowField(np.full((4, 6), 6.0), np.full((4, 6), -0.5)).check_bound()
    with pytest.raises(FlowBoundError):
        warp(np.zeros((4, 6, 1)), FlowField(np.full((4, 6), 6.5), np.zeros((4, 6))))
    with pytest.raises(ValueError):
        FlowField(np.full((4, 6), np.inf), np.zeros((4, 6)))


# -- file I/O ------------------------------------------------------------------

def test_load_p6_all_white(tmp_path):
    f = load_frame(_ppm(tmp_path / "w.ppm", 2, 2, [255] * 12))
    assert f.shape == (2, 2, 3)
    assert np.all(f == 1.0)


def test_load_p6_single_pixel(tmp_path):
    f = load_frame(_ppm(tmp_path / "p.ppm", 1, 1, [128, 64, 0]))
    np.testing.assert_array_equal(f[0, 0], [128 / 255, 64 / 255, 0.0])
    assert abs(f[0, 0, 0] - 0.50196) < 1e-5


def test_load_truncated_p6(tmp_path):
    with pytest.raises(ImageFormatError):
        load_frame(_ppm(tmp_path / "t.ppm", 2, 2, [1] * 11))


def test_load_16bit_p6_rejected(tmp_path):
    p = tmp_path / "d.ppm"
    p.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(ImageFormatError):
        load_frame(p)


def test_load_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_frame(tmp_path / "nope.png")


def test_save_zero_frame_payload(tmp_path):
    p = tmp_path / "z.ppm"
    save_frame(np.zeros((3, 2, 3)), p)
    data = p.read_bytes()
    assert data.endswith(bytes(18))
    assert set(data[-18:]) == {0}


def test_quantize_half_up():
    assert quantize(np.array([0.5]))[0] == 128
    assert quantize(np.array([1.0, 0.0, 2.0, -1.0])).tolist() == [255, 0, 255, 0]


@pytest.mark.parametrize("ext", [".png", ".ppm"])
def test_round_trip_quantization_bound(tmp_path, ext):
    rng = np.random.default_rng(0)
    f = rng.random((9, 13, 3))
    p = tmp_path / ("f" + ext)
    save_frame(f, p)
    g = load_frame(p)
    assert np.max(np.abs(g - f)) <= 1 / 510 + 1e-15


def test_round_trip_gray_png(tmp_path):
    f = np.random.default_rng(1).random((5, 7, 1))
    save_frame(f, tmp_path / "g.png")
    g = load_frame(tmp_path / "g.png")
    assert g.shape == (5, 7, 1)
    assert np.max(np.abs(g - f)) <= 1 / 510 + 1e-15


def test_synthetic_frame_png_round_trip(tmp_path):
    from vfiadapt.harness.scenes import ScenePattern, synth_sequence
    from vfiadapt.harness.seqio import read_sequence, write_sequence

    s, _ = synth_sequence(ScenePattern("translate", (2, 0), "value_noise"), (32, 24), seed=4)
    write_sequence(tmp_path / "seq", s)
    back = load_frame(tmp_path / "seq" / "frame_0004.png")
    assert np.max(np.abs(back - s.frame(3))) <= 1 / 510 + 1e-15
    assert read_sequence(tmp_path / "seq").shape == s.shape


def test_flo_one_pixel_is_20_bytes(tmp_path):
    p = tmp_path / "a.flo"
    write_flo(FlowField(np.array([[1.0]]), np.array([[-1.0]])), p)
    data = p.read_bytes()
    assert len(data) == 20
    assert struct.unpack("<fii", data[:12]) == (FLO_MAGIC, 1, 1)
    assert struct.unpack("<ff", data[12:]) == (1.0, -1.0)


def test_flo_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    f = FlowField(rng.normal(size=(16, 16)) * 3, rng.normal(size=(16, 16)) * 3)
    write_flo(f, tmp_path / "r.flo")
    g = read_flo(tmp_path / "r.flo")
    np.testing.assert_array_equal(g.u, f.u.astype(np.float32))
    np.testing.assert_array_equal(g.v, f.v.astype(np.float32))


def test_flo_bad_magic(tmp_path):
    p = tmp_path / "b.flo"
    p.write_bytes(struct.pack("<fii", 1.0, 1, 1) + bytes(8))
    with pytest.raises(ImageFormatError, match="bad magic"):
        read_flo(p)


def test_flo_payload_mismatch(tmp_path):
    p = tmp_path / "s.flo"
    p.write_bytes(struct.pack("<fii", FLO_MAGIC, 2, 2) + bytes(8))
    with pytest.raises(ImageFormatError, match="size/payload mismatch"):
        read_flo(p)


# -- warping -------------------------------------------------------------------

def test_zero_flow_is_identity():
    rng = np.random.default_rng(3)
    src = rng.random((6, 7, 3))
    out, jac = backward_warp(src, FlowField.zeros(6, 7))
    np.testing.assert_array_equal(out, src)
    # right-sided cell: forward differences, backward on the last column/row
    dx = np.empty_like(src)
    dx[:, :-1] = src[:, 1:] - src[:, :-1]
    dx[:, -1] = src[:, -1] - src[:, -2]
    dy = np.empty_like(src)
    dy[:-1] = src[1:] - src[:-1]
    dy[-1] = src[-1] - src[-2]
    np.testing.assert_allclose(jac.d_du, dx, atol=1e-15)
    np.testing.assert_allclose(jac.d_dv, dy, atol=1e-15)


def test_ramp_shift_exact():
    r = np.tile(np.arange(8) / 7.0, (8, 1))[:, :, None]
    out = warp(r, FlowField.uniform(8, 8, 2.0, 0.0))
    assert np.max(np.abs(out[:, :6, 0] - r[:, 2:, 0])) < 1e-12


@pytest.mark.parametrize("dx,dy", [(1, 0), (0, -2), (3, 1), (-2, -3)])
def test_integer_shift_matches_indexing_oracle(dx, dy):
    src = np.random.default_rng(5).random((9, 10, 3))
    out = warp(src, FlowField.uniform(9, 10, dx, dy))
    np.testing.assert_array_equal(out, shift_oracle(src, dx, dy))


def _off_grid_flow(rng, h, w, scale=1.5):
    xs, ys = np.meshgrid(np.arange(w), np.arange(h))
    while True:
        u = rng.uniform(-scale, scale, (h, w))
        v = rng.uniform(-scale, scale, (h, w))
        cx, cy = xs + u, ys + v
        far_x = np.abs(cx - np.round(cx)) >= 1e-3
        far_y = np.abs(cy - np.round(cy)) >= 1e-3
        inside = (cx > 1e-3) & (cx < w - 1 - 1e-3) & (cy > 1e-3) & (cy < h - 1 - 1e-3)
        if np.all(far_x & far_y & inside):
            return FlowField(u, v)


def test_flow_jacobian_matches_finite_differences():
    rng = np.random.default_rng(6)
    for _ in range(20):
        src = rng.random((4, 4, 3))
        flow = _off_grid_flow(rng, 4, 4, scale=0.9)
        _, jac = backward_warp(src, flow)
        eps = 1e-4
        fd_u = (warp(src, FlowField(flow.u + eps, flow.v))
                - warp(src, FlowField(flow.u - eps, flow.v))) / (2 * eps)
        fd_v = (warp(src, FlowField(flow.u, flow.v + eps))
                - warp(src, FlowField(flow.u, flow.v - eps))) / (2 * eps)
        for a, n in ((jac.d_du, fd_u), (jac.d_dv, fd_v)):
            # bilinear is linear inside a cell, so the only error is rounding
            rel = np.abs(a - n) / np.maximum(np.abs(n), 1e-3)
            assert rel.max() < 1e-6


def test_clamped_coordinates_have_zero_flow_derivative():
    src = np.random.default_rng(7).random((8, 8, 1))
    _, jac = backward_warp(src, FlowField.uniform(8, 8, 6.5, 0.0))
    # x + 6.5 leaves the 8-wide image from column 1 on
    assert np.all(jac.d_du[:, 1:] == 0.0)
    assert np.any(jac.d_du[:, 0] != 0.0)
    _, jac = backward_warp(src, FlowField.uniform(8, 8, 0.0, -7.5))
    assert np.all(jac.d_dv == 0.0)


def test_source_grad_is_adjoint_of_warp():
    rng = np.random.default_rng(8)
    src = rng.random((6, 5, 2))
    flow = FlowField(rng.uniform(-3, 3, (6, 5)), rng.uniform(-3, 3, (6, 5)))
    out, jac = backward_warp(src, flow)
    g = rng.normal(size=out.shape)
    # <g, W x> == <W^T g, x> for the linear map x -> warp(x)
    assert abs(np.sum(g * out) - np.sum(jac.source_grad(g) * src)) < 1e-12


small_frames = arrays(np.float64, (5, 6, 2), elements=st.floats(0, 1))


@settings(max_examples=40, deadline=None)
@given(a=small_frames, b=small_frames, ca=st.floats(-2, 2), cb=st.floats(-2, 2),
       seed=st.integers(0, 2**16))
def test_warp_linear_in_source(a, b, ca, cb, seed):
    rng = np.random.default_rng(seed)
    flow = FlowField(rng.uniform(-4, 4, (5, 6)), rng.uniform(-4, 4, (5, 6)))
    lhs = warp(ca * a + cb * b, flow)
    rhs = ca * warp(a, flow) + cb * warp(b, flow)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**16), h=st.integers(2, 9), w=st.integers(2, 9))
def test_bilinear_weights_sum_to_one(seed, h, w):
    rng = np.random.default_rng(seed)
    m = max(h, w) / 1.5
    flow = FlowField(rng.uniform(-m, m, (h, w)), rng.uniform(-m, m, (h, w)))
    _, jac = backward_warp(rng.random((h, w, 1)), flow)
    assert np.all(np.abs(jac.weights.sum(axis=-1) - 1.0) <= 1e-12)
    assert np.all(np.isfinite(jac.d_du)) and np.all(np.isfinite(jac.d_dv))


def test_warp_dimension_mismatch():
    with pytest.raises(ValueError):
        backward_warp(np.zeros((4, 4, 3)), FlowField.zeros(4, 5))


def test_warp_is_deterministic():
    rng = np.random.default_rng(9)
    src = rng.random((12, 12, 3))
    flow = FlowField(rng.normal(size=(12, 12)), rng.normal(size=(12, 12)))
    assert fingerprint(warp(src, flow)) == fingerprint(warp(src, flow))


# -- pyramid ---------------------------------------------------------------------

def test_pyramid_single_level_is_input():
    f = np.random.default_rng(10).random((9, 11, 3))
    pyr = gaussian_pyramid(f, 1)
    assert len(pyr) == 1
    np.testing.assert_array_equal(pyr[0], f)


@pytest.mark.parametrize("levels", [1, 2, 3, 4])
def test_pyramid_constant(levels):
    pyr = gaussian_pyramid(np.full((40, 36), 0.5), levels)
    for lvl in pyr:
        assert np.max(np.abs(lvl - 0.5)) <= 1e-12


def test_pyramid_sizes():
    pyr = gaussian_pyramid(np.zeros((64, 64)), 3, 0.5)
    assert [p.shape for p in pyr] == [(64, 64), (32, 32), (16, 16)]
    assert pyramid_shapes(25, 15, 2, 0.5) == [(25, 15), (13, 8)]


def test_pyramid_too_deep():
    with pytest.raises(ValueError):
        gaussian_pyramid(np.zeros((16, 16)), 4, 0.5)
