import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wfrsplit.grid import Grid, VectorField, as_grid, read_snapshot_csv, write_pgm, write_snapshot_csv


def test_cell_volumes_sum_to_box_volume():
    g = Grid((7, 5), (2.0, 3.0), (-1.0, 0.5))
    assert g.cellvol * g.size == pytest.approx(g.volume, rel=1e-12)
    assert g.volume == pytest.approx(6.0)


@pytest.mark.parametrize("n", [(1,), (8, 1), (0,)])
def test_rejects_degenerate_extents(n):
    with pytest.raises(ValueError):
        Grid(n)


def test_rejects_nonpositive_lengths():
    with pytest.raises(ValueError):
        Grid((4,), (0.0,))


def test_rejects_three_dimensions():
    with pytest.raises(ValueError):
        Grid((4, 4, 4))


@pytest.mark.parametrize("n", [(16,), (5, 9)])
def test_mass_of_constants(n):
    g = Grid(n)
    assert g.mass(np.ones(g.shape)) == pytest.approx(1.0, rel=1e-12)
    assert g.mass(np.zeros(g.shape)) == 0.0


def test_mass_of_half_indicator():
    g = Grid((10,))
    f = np.where(np.arange(10) < 5, 2.0, 0.0)
    assert g.mass(f) == pytest.approx(1.0)


def test_total_variation_constant_and_step():
    g = Grid((64,))
    assert g.total_variation(np.full(64, 3.0)) == pytest.approx(3.0)
    step = np.where(np.arange(64) >= 32, 1.0, 0.0)
    assert g.total_variation(step) == pytest.approx(1.5)


def test_total_variation_checkerboard_against_face_loop():
    n = 6
    g = Grid((n, n))
    f = np.indices((n, n)).sum(axis=0) % 2 * 1.0 + 0.5
    dx = 1.0 / n
    jumps = 0.0
    for i in range(n):
        for j in range(n):
            if i + 1 < n:
                jumps += abs(f[i + 1, j] - f[i, j]) * dx
            if j + 1 < n:
                jumps += abs(f[i, j + 1] - f[i, j]) * dx
    l1 = sum(abs(f[i, j]) * dx * dx for i in range(n) for j in range(n))
    assert g.total_variation(f) == pytest.approx(jumps + l1, rel=1e-13)


def test_gradient_of_constant_and_divergence_of_zero():
    g = Grid((6, 4))
    assert all(np.all(c == 0) for c in g.gradient(np.full(g.shape, 2.5)).components)
    zero = VectorField(g, (np.zeros((5, 4)), np.zeros((6, 3))))
    assert np.all(g.divergence(zero) == 0)


def test_divergence_rejects_layout_mismatch():
    g = Grid((6, 4))
    with pytest.raises(ValueError):
        g.divergence((np.zeros((6, 4)), np.zeros((6, 3))))


@given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2**32 - 1))
def test_gradient_divergence_adjoint(n1, n2, seed):
    rng = np.random.default_rng(seed)
    g = Grid((n1, n2), (1.3, 0.7))
    f = rng.normal(size=g.shape)
    v = (rng.normal(size=(n1 - 1, n2)), rng.normal(size=(n1, n2 - 1)))
    lhs = g.face_inner(g.gradient(f), v)
    rhs = -g.inner(f, g.divergence(v))
    assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + abs(lhs)))


@given(arrays(np.float64, 12, elements=st.floats(-10, 10)),
       arrays(np.float64, 12, elements=st.floats(-10, 10)),
       st.floats(-5, 5), st.floats(-5, 5))
def test_mass_is_linear(f, h, alpha, beta):
    g = Grid((12,), (2.0,))
    lhs = g.mass(alpha * f + beta * h)
    rhs = alpha * g.mass(f) + beta * g.mass(h)
    assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + np.abs(f).sum() + np.abs(h).sum()) * 25)


def _gauss(*d):
    return np.exp(-sum(x * x for x in d))


@given(st.integers(0, 2**32 - 1))
def test_convolution_with_symmetric_kernel_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    g = Grid((7, 6))
    f, h = rng.random(g.shape), rng.random(g.shape)
    lhs = g.inner(g.convolve(_gauss, f), h)
    rhs = g.inner(f, g.convolve(_gauss, h))
    assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("n", [(40,), (12, 9)])
def test_fft_convolution_matches_direct(n, rng):
    g = Grid(n, tuple(2.0 for _ in n))
    f = rng.random(g.shape)
    k = lambda *d: sum(x * x for x in d)  # noqa: E731
    direct = g.convolve(k, f, method="direct")
    fast = g.convolve(k, f, method="fft")
    assert np.max(np.abs(direct - fast)) <= 1e-10 * np.max(np.abs(direct))


def test_convolution_of_point_mass_and_constant_kernel():
    g = Grid((9, 9))
    f = np.zeros(g.shape)
    f[4, 2] = 1.0 / g.cellvol
    X, Y = g.centers()
    out = g.convolve(lambda dx, dy: dx * dx + dy * dy, f)
    np.testing.assert_allclose(out, (X - X[4, 2]) ** 2 + (Y - Y[4, 2]) ** 2, atol=1e-13)
    h = np.random.default_rng(1).random(g.shape)
    np.testing.assert_allclose(g.convolve(lambda dx, dy: np.ones_like(dx), h), g.mass(h), rtol=1e-12)


def test_convolution_against_analytic_integral():
    g = Grid((32,))
    x = g.axes()[0]
    out = g.convolve(lambda d: d * d, np.ones(32))
    assert np.max(np.abs(out - (x * x - x + 1.0 / 3.0))) <= 2 * (1.0 / 32) ** 2


def test_snapshot_roundtrip(tmp_path, rng):
    g = Grid((5, 3), (2.0, 1.5))
    f = rng.random(g.shape)
    p = write_snapshot_csv(tmp_path / "f.csv", g, f, t=0.25)
    assert p.read_text().splitlines()[0] == "# grid d=2 n=5x3 box=2.0x1.5 t=0.25"
    back = read_snapshot_csv(p)
    assert back.grid.shape == (5, 3) and back.t == 0.25
    np.testing.assert_array_equal(back.values, f)


def test_snapshot_requires_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2,3\n")
    with pytest.raises(ValueError):
        read_snapshot_csv(p)


def test_pgm_output(tmp_path):
    f = np.array([[0.0, 1.0], [0.5, 2.0], [0.25, 0.0]])
    p = write_pgm(tmp_path / "f.pgm", f, vmax=1.0)
    data = p.read_bytes()
    header = b"P5\n3 2\n255\n"
    assert data.startswith(header)
    pixels = np.frombuffer(data[len(header):], dtype=np.uint8)
    assert pixels.size == 6 and pixels.max() == 255 and pixels.min() == 0
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "g.pgm", np.ones(4))


def test_as_grid_defaults_to_unit_box():
    g = as_grid(8)
    assert g.lengths == (1.0,) and g.origin == (0.0,)
