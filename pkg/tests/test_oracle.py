import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wfrsplit.oracle import (QuantileRepresentation, bisect_root, brute_force_pointwise,
                             fd_reference_scalar, w2_exact_1d)


def test_quantiles_of_uniform():
    q = QuantileRepresentation.from_density(np.ones(10))
    np.testing.assert_allclose(q.quantile(np.array([0.0, 0.25, 1.0])), [0.0, 0.25, 1.0])


def test_w2_identical_is_zero():
    rho = np.random.default_rng(0).random(50)
    assert w2_exact_1d(rho, rho) == pytest.approx(0.0, abs=1e-14)


def test_w2_spikes_translate():
    n = 100
    a, b = np.zeros(n), np.zeros(n)
    a[30], b[70] = n, n
    assert w2_exact_1d(a, b) == pytest.approx(0.16, abs=2.0 / n)


def test_w2_half_boxes():
    x = (np.arange(64) + 0.5) / 64
    assert w2_exact_1d(np.where(x < 0.5, 2.0, 0.0), np.where(x > 0.5, 2.0, 0.0)) == pytest.approx(0.25, rel=1e-6)


def test_w2_scales_with_mass_and_length():
    x = (np.arange(40) + 0.5) / 40
    a, b = 1 + 0.5 * np.sin(3 * x), 1 + 0.5 * np.cos(2 * x)
    b *= a.sum() / b.sum()
    base = w2_exact_1d(a, b)
    assert w2_exact_1d(3 * a, 3 * b) == pytest.approx(3 * base, rel=1e-12)
    # stretching the box by L scales squared distances by L^2 and mass by L
    assert w2_exact_1d(a, b, length=2.0) == pytest.approx(8 * base, rel=1e-9)


def test_w2_errors():
    with pytest.raises(ValueError):
        w2_exact_1d(np.ones(4), 2 * np.ones(4))
    with pytest.raises(ValueError):
        w2_exact_1d(np.ones(4), np.ones(4), nodes=100)


@given(st.integers(0, 2**32 - 1))
def test_w2_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.random((3, 30)) + 0.01
    b *= a.sum() / b.sum()
    c *= a.sum() / c.sum()
    d = lambda x, y: math.sqrt(w2_exact_1d(x, y))  # noqa: E731
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-8


def test_brute_force_examples():
    assert brute_force_pointwise(lambda r: (r - 3) ** 2 / 2 + r * r, (0, 10)) == pytest.approx(1.0, abs=1e-7)
    x = brute_force_pointwise(lambda r: (r - 3) ** 2 / 2 + r * r, (0, 10), derivative=lambda r: 3 * r - 3)
    assert x == pytest.approx(1.0, abs=1e-12)
    assert bisect_root(lambda r: r + math.log(r), (0.1, 1.0)) == pytest.approx(0.5671432904097838, abs=1e-12)
    z = 0.731
    assert brute_force_pointwise(lambda r: (r - z) ** 2, (0, 2), derivative=lambda r: 2 * (r - z)) == pytest.approx(z, abs=1e-12)


def test_brute_force_boundary_handling():
    assert brute_force_pointwise(lambda r: r, (0, 1), derivative=lambda r: 1.0) == 0.0
    with pytest.raises(ValueError):
        brute_force_pointwise(lambda r: r, (0, 1), allow_boundary=False)
    with pytest.raises(ValueError):
        brute_force_pointwise(lambda r: r, (1, 0))
    with pytest.raises(ValueError):
        bisect_root(lambda r: r * r + 1, (0, 1))


def _cfg(**kw):
    base = dict(n=(256,), lengths=(), h=0.01, T=0.05, diffusion="entropy", m1=None, reaction="zero",
                m2=None, V1=0.0, V2=0.0, scale2=1.0)
    base.update(kw)
    return SimpleNamespace(**base)


def test_fd_heat_against_heat_kernel():
    # a Gaussian far from the walls stays a Gaussian with variance s^2 + 2t
    n, s0, T = 256, 0.05, 0.005
    x = (np.arange(n) + 0.5) / n
    rho0 = 1 + np.exp(-0.5 * ((x - 0.5) / s0) ** 2) / s0
    traj = fd_reference_scalar(_cfg(n=(n,), h=T, T=T), rho0)
    s = math.sqrt(s0 ** 2 + 2 * T)
    exact = 1 + np.exp(-0.5 * ((x - 0.5) / s) ** 2) / s
    assert np.abs(traj.snapshots[-1] - exact).sum() / n <= 1e-3


def test_fd_conserves_mass_without_reaction():
    x = (np.arange(64) + 0.5) / 64
    rho0 = 1 + np.cos(2 * np.pi * x)
    traj = fd_reference_scalar(_cfg(n=(64,), V1=np.sin(3 * x)), rho0)
    for snap in traj.snapshots:
        assert snap.sum() == pytest.approx(rho0.sum(), rel=1e-12)


def test_fd_reaction_only_is_exponential():
    lam, T = 2.0, 0.1
    traj = fd_reference_scalar(_cfg(n=(8,), diffusion="none", V2=lam, h=T, T=T), np.ones(8))
    assert traj.snapshots[-1][0] == pytest.approx(math.exp(-lam * T), rel=1e-2)


def test_fd_zero_stays_zero():
    traj = fd_reference_scalar(_cfg(n=(16,)), np.zeros(16))
    assert all(np.all(s == 0) for s in traj.snapshots)


def test_fd_rejects_2d():
    with pytest.raises(ValueError):
        fd_reference_scalar(_cfg(n=(4, 4)), np.zeros((4, 4)))
