import numpy as np
import pytest

from helpers import fd_gradient, random_dv, small_problem
from hotmpm.constitutive import fcr_stress_derivative, stiffness_scale
from hotmpm.grid_kernels import activate_grid
from hotmpm.objective import (
    Collider, MatrixFreeHessian, Motion, NodeCN, apply_colliders, assemble_hessian, energy, gradient,
    projected_stress_derivatives, scaled_norm,
)


@pytest.mark.parametrize("dim,kw", [(2, {}), (2, {"dirichlet": True, "gravity": [0, -9.8]}),
                                    (3, {"extent": (0.1, 0.1, 0.1)}), (2, {"two_materials": True})])
def test_gradient_matches_finite_differences(dim, kw):
    prob = small_problem(dim, **kw)
    st = prob.state
    dv = random_dv(prob, 0.05)
    g = gradient(st, dv)
    free = ~st.dirichlet

    def f(x):
        y = dv.copy()
        y[free] = x
        return energy(st, y)

    fd = fd_gradient(f, dv[free], 1e-6)
    assert np.linalg.norm(g[free] - fd) <= 1e-5 * np.linalg.norm(fd)
    assert np.all(g[st.dirichlet] == 0)


def _unclamped(prob, dv):
    F = prob.state.deformation(dv)
    raw = fcr_stress_derivative(F, prob.state.mu, prob.state.lam)
    return np.abs(projected_stress_derivatives(prob.state, dv) - raw).max() <= 1e-9 * np.abs(raw).max()


def _hessian_vs_fd(prob, dv, stress_derivs=None):
    st = prob.state
    u = random_dv(prob, 1.0, seed=7)
    u[st.dirichlet] = 0
    h = 1e-6
    fd = (gradient(st, dv + h * u) - gradient(st, dv - h * u)) / (2 * h)
    free = ~st.dirichlet
    Hu = assemble_hessian(st, dv, stress_derivs).matvec(u)
    Mu = MatrixFreeHessian(st, dv, stress_derivs).matvec(u)
    assert np.linalg.norm(Hu[free] - fd[free]) <= 1e-4 * np.linalg.norm(fd[free])
    assert np.linalg.norm(Mu[free] - fd[free]) <= 1e-4 * np.linalg.norm(fd[free])
    assert np.linalg.norm(Hu - Mu) <= 1e-10 * np.linalg.norm(Hu)


@pytest.mark.parametrize("dim", [2, 3])
def test_hessian_products_match_gradient_differences(dim):
    # raw (unprojected) stress derivatives: the exact Hessian of E
    prob = small_problem(dim, extent=(0.2, 0.2, 0.1), F_spread=0.3, dirichlet=True)
    dv = random_dv(prob, 0.2)
    raw = fcr_stress_derivative(prob.state.deformation(dv), prob.state.mu, prob.state.lam)
    _hessian_vs_fd(prob, dv, raw)


@pytest.mark.parametrize("dim", [2, 3])
def test_projected_hessian_is_exact_under_expansion(dim):
    # all stretches > 1: every mode is positive, so projection leaves the Hessian alone
    prob = small_problem(dim, extent=(0.2, 0.2, 0.1), F_spread=0.01, stretch=1.1, dirichlet=True)
    dv = random_dv(prob, 0.001)
    assert _unclamped(prob, dv)
    _hessian_vs_fd(prob, dv)


@pytest.mark.parametrize("seed", range(5))
def test_assembled_hessian_is_symmetric_and_psd(seed):
    prob = small_problem(2, seed=seed, F_spread=0.45, dirichlet=seed % 2 == 0)
    H = assemble_hessian(prob.state, random_dv(prob, 0.5, seed))
    D = H.to_dense()
    assert np.abs(D - D.T).max() <= 1e-12 * np.abs(D).max()
    assert np.linalg.eigvalsh(D).min() >= -1e-8 * np.linalg.norm(D, 2)
    mf = MatrixFreeHessian(prob.state, random_dv(prob, 0.5, seed))
    assert np.allclose(mf.scalar_diagonal(), H.scalar_diagonal(), rtol=1e-12)


def test_dirichlet_rows_are_identity():
    prob = small_problem(2, dirichlet=True)
    H = assemble_hessian(prob.state, random_dv(prob))
    fixed = np.nonzero(prob.state.dirichlet)[0]
    D = H.to_dense().reshape(H.num_rows, 2, H.num_rows, 2)
    for i in fixed:
        assert np.array_equal(D[i, :, i], np.eye(2))
        assert np.count_nonzero(D[i]) == 2


def test_uniform_velocity_free_fall_is_stationary():
    prob = small_problem(2, F_spread=0.0, speed=0.0, gravity=[0.0, -9.8])
    st = prob.state
    dv = np.tile(st.dt * st.gravity, (st.num_nodes, 1))
    assert np.abs(gradient(st, dv)).max() <= 1e-12 * np.abs(st.mass).max()


def test_characteristic_norm_reduces_to_single_material_measure():
    prob = small_problem(2, dx=0.01, extent=(0.03, 0.02))
    cn = prob.cn
    assert cn.ell == pytest.approx(2.4e-3, rel=1e-12)
    xi = stiffness_scale(prob.materials[0], 2)
    assert np.allclose(cn.xi, xi, rtol=1e-14)
    g = np.random.default_rng(0).standard_normal((prob.state.num_nodes, 2))
    want = np.linalg.norm(g) / (24 * 0.01**2 * xi * prob.state.dt)
    assert scaled_norm(g, cn) == pytest.approx(want, rel=1e-12)


def test_interface_stiffness_lies_between_materials():
    prob = small_problem(2, two_materials=True)
    lo, hi = sorted(stiffness_scale(m, 2) for m in prob.materials)
    assert np.all(prob.cn.xi >= lo * (1 - 1e-12)) and np.all(prob.cn.xi <= hi * (1 + 1e-12))
    assert np.any((prob.cn.xi > lo * 1.01) & (prob.cn.xi < hi * 0.99))


def test_zero_stiffness_scale_is_an_error():
    cn = NodeCN(xi=np.array([1.0, 0.0]), dx=0.1, dt=0.01)
    with pytest.raises(ValueError, match="characteristic stiffness"):
        scaled_norm(np.ones((2, 2)), cn)


def test_colliders_mark_sticky_nodes_with_scripted_velocity():
    grid = activate_grid(np.array([[0.5, 0.5]]), 0.1)
    floor = Collider("half_space", center=np.array([0.0, 0.45]), normal=np.array([0.0, 1.0]))
    spin = Collider("sphere", center=np.array([0.5, 0.6]), radius=0.06,
                    motion=Motion(omega=2.0, pivot=np.array([0.5, 0.5])))
    apply_colliders(grid, [floor, spin], 0.0)
    y = grid.positions[:, 1]
    assert np.array_equal(grid.dirichlet[y < 0.44], np.ones(np.sum(y < 0.44), dtype=bool))
    top = np.nonzero(np.isclose(grid.positions, [0.5, 0.6]).all(axis=1))[0]
    assert grid.dirichlet[top].all()
    assert np.allclose(grid.dirichlet_velocity[top], [[-0.2, 0.0]])
    assert np.all(grid.dirichlet_velocity[y < 0.44] == 0)


def test_motion_transform_and_velocity():
    m = Motion(velocity=np.array([1.0, 0.0]), omega=np.pi / 2, pivot=np.array([0.0, 0.0]))
    assert np.allclose(m.transform(np.array([1.0, 0.0]), 1.0), [1.0, 1.0])
    assert np.allclose(m.velocity_at(np.array([[1.0, 0.0]]), 0.0), [[1.0, np.pi / 2]])
    m3 = Motion(omega=np.array([0.0, 0.0, 1.0]), pivot=np.zeros(3))
    assert np.allclose(m3.velocity_at(np.array([[1.0, 0.0, 0.0]]), 0.0), [[0.0, 1.0, 0.0]])
