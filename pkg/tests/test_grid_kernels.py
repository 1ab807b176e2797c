import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hotmpm.grid_kernels import (
    CFL_FACTOR, KernelKind, LatticeIndex, activate_grid, cfl_dt, kernel_gradient, kernel_weight,
    point_stencils,
)

KINDS = [KernelKind.QUADRATIC, KernelKind.LINEAR]
points2 = arrays(float, (5, 2), elements=st.floats(-3.0, 3.0, allow_nan=False))
points3 = arrays(float, (3, 3), elements=st.floats(-3.0, 3.0, allow_nan=False))


def test_quadratic_weights_at_node():
    assert kernel_weight(KernelKind.QUADRATIC, [0.0]) == pytest.approx(0.75)
    assert kernel_weight(KernelKind.QUADRATIC, [1.0]) == pytest.approx(0.125)
    assert kernel_weight(KernelKind.QUADRATIC, [1.5]) == 0.0
    assert kernel_weight(KernelKind.LINEAR, [0.25, -0.5]) == pytest.approx(0.75 * 0.5)


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=40, deadline=None)
@given(pts=st.one_of(points2, points3))
def test_partition_of_unity_and_linear_reproduction(kind, pts):
    dx = 0.1
    coords, w, g = point_stencils(kind, pts * dx, dx)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(w >= 0)
    # first moment: sum_i w_i (x_i - x_p) = 0
    rel = coords * dx - pts[:, None, :] * dx
    assert np.allclose(np.einsum("pk,pka->pa", w, rel), 0.0, atol=1e-12)
    # gradients sum to zero (the linear kernel's slope jumps on lattice points)
    smooth = np.all(np.abs(pts - np.round(pts)) > 1e-9, axis=1) | (kind is KernelKind.QUADRATIC)
    assert np.allclose(g.sum(axis=1)[smooth], 0.0, atol=1e-10)


@pytest.mark.parametrize("kind", KINDS)
def test_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(0)
    dx = 0.05
    for _ in range(20):
        off = rng.uniform(-1.4, 1.4, size=3)
        if kind is KernelKind.LINEAR and np.any(np.abs(off) < 1e-3):
            continue
        h = 1e-7
        fd = np.zeros(3)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            fd[a] = (kernel_weight(kind, off + e) - kernel_weight(kind, off - e)) / (2 * h * dx)
        assert np.allclose(kernel_gradient(kind, off, dx), fd, atol=1e-6)


def test_lattice_index_lookup_matches_dictionary():
    rng = np.random.default_rng(2)
    coords = np.unique(rng.integers(-20, 20, size=(300, 3)), axis=0)
    idx = LatticeIndex(coords, 3)
    table = {tuple(c): i for i, c in enumerate(idx.coords)}
    queries = rng.integers(-22, 22, size=(500, 3))
    got = idx.lookup(queries)
    want = np.array([table.get(tuple(q), -1) for q in queries])
    assert np.array_equal(got, want)
    assert np.array_equal(idx.lookup(idx.coords), np.arange(len(idx.coords)))


def test_activation_matches_brute_force():
    rng = np.random.default_rng(3)
    dx = 0.1
    x = rng.uniform(0.2, 0.6, size=(40, 2))
    grid = activate_grid(x, dx)
    want = set()
    for p in x:
        for i, j in itertools.product(range(-2, 10), repeat=2):
            if kernel_weight(KernelKind.QUADRATIC, p / dx - np.array([i, j])) > 0:
                want.add((i, j))
    assert {tuple(c) for c in grid.coords} == want
    assert np.all(grid.mass == 0)


def test_activation_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        activate_grid(np.array([[0.1, np.nan]]), 0.1)


def test_cfl_dt():
    assert cfl_dt(0.0, 0.01, 24) == pytest.approx(1 / 24)
    assert cfl_dt(10.0, 0.01, 24) == pytest.approx(CFL_FACTOR * 0.01 / 10.0)
    with pytest.raises(ValueError):
        cfl_dt(1.0, 0.0, 24)


def test_kernel_kind_parse():
    assert KernelKind.parse("Linear") is KernelKind.LINEAR
    with pytest.raises(ValueError):
        KernelKind.parse("cubic")
