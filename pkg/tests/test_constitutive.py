import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hotmpm.constitutive import (
    Material, Plasticity, PlasticityKind, cofactor, fcr_energy_density, fcr_stress,
    fcr_stress_derivative, fcr_stress_differential, polar_rotation, project_spd, return_map,
    stiffness_scale,
)

MU, LAM = 3.0e4, 5.0e4


def random_F(rng, n, d, spread=0.4):
    return np.eye(d) + spread * rng.uniform(-1, 1, size=(n, d, d))


def random_rotation(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def test_energy_vanishes_at_rest_and_is_rotation_invariant():
    rng = np.random.default_rng(0)
    for d in (2, 3):
        assert fcr_energy_density(np.eye(d)[None], MU, LAM)[0] == pytest.approx(0.0, abs=1e-12)
        F = random_F(rng, 10, d)
        R = random_rotation(rng, d)
        e0 = fcr_energy_density(F, MU, LAM)
        e1 = fcr_energy_density(R @ F, MU, LAM)
        assert np.allclose(e0, e1, rtol=1e-10)
        assert np.all(e0 >= 0)


@pytest.mark.parametrize("d", [2, 3])
def test_stress_is_energy_gradient(d):
    rng = np.random.default_rng(d)
    F = random_F(rng, 8, d)
    P = fcr_stress(F, MU, LAM)
    h = 1e-6
    fd = np.zeros_like(F)
    for a in range(d):
        for b in range(d):
            E = np.zeros((d, d))
            E[a, b] = h
            fd[:, a, b] = (fcr_energy_density(F + E, MU, LAM) - fcr_energy_density(F - E, MU, LAM)) / (2 * h)
    assert np.abs(P - fd).max() <= 1e-6 * np.abs(P).max()


@pytest.mark.parametrize("d", [2, 3])
def test_stress_derivative_matches_finite_differences(d):
    rng = np.random.default_rng(10 + d)
    F = random_F(rng, 6, d)
    dP = fcr_stress_derivative(F, MU, LAM)
    assert dP.shape == (6, d * d, d * d)
    assert np.allclose(dP, np.swapaxes(dP, 1, 2), atol=1e-8 * np.abs(dP).max())
    h = 1e-6
    fd = np.zeros_like(dP)
    for k in range(d * d):
        E = np.zeros(d * d)
        E[k] = h
        E = E.reshape(d, d)
        fd[:, :, k] = ((fcr_stress(F + E, MU, LAM) - fcr_stress(F - E, MU, LAM)) / (2 * h)).reshape(6, -1)
    assert np.abs(dP - fd).max() <= 1e-5 * np.abs(dP).max()
    # differential form agrees with the assembled derivative
    dF = rng.standard_normal((6, d, d))
    lhs = fcr_stress_differential(F, dF, MU, LAM).reshape(6, -1)
    rhs = np.einsum("pij,pj->pi", dP, dF.reshape(6, -1))
    assert np.allclose(lhs, rhs, atol=1e-8 * np.abs(rhs).max())


def test_polar_rotation_and_cofactor():
    rng = np.random.default_rng(4)
    F = random_F(rng, 10, 3)
    R = polar_rotation(F)
    assert np.allclose(R @ np.swapaxes(R, 1, 2), np.eye(3), atol=1e-12)
    S = np.swapaxes(R, 1, 2) @ F
    assert np.allclose(S, np.swapaxes(S, 1, 2), atol=1e-12)
    cof = cofactor(F)
    assert np.allclose(cof, np.linalg.det(F)[:, None, None] * np.linalg.inv(F).transpose(0, 2, 1))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_project_spd_properties(seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((4, 5, 5))
    A = B + np.swapaxes(B, 1, 2)
    P = project_spd(A)
    assert np.linalg.eigvalsh(P).min() >= -1e-10 * np.abs(A).max()
    assert np.allclose(P, np.swapaxes(P, 1, 2))
    assert np.allclose(project_spd(P), P, atol=1e-10 * np.abs(A).max())
    spd = B @ np.swapaxes(B, 1, 2)
    assert np.allclose(project_spd(spd), spd)


def test_project_spd_rejects_asymmetric_input():
    with pytest.raises(ValueError, match="symmetric"):
        project_spd(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_material_validation():
    with pytest.raises(ValueError):
        Material(1000.0, 1e5, 0.5)
    with pytest.raises(ValueError):
        Material(1000.0, -1.0, 0.3)
    with pytest.raises(ValueError):
        Plasticity(PlasticityKind.VON_MISES, yield_stress=0.0)
    m = Material(1000.0, 5e9, 0.4)
    assert m.mu == pytest.approx(5e9 / 2.8)
    assert m.lam == pytest.approx(5e9 * 0.4 / (1.4 * 0.2))


@pytest.mark.parametrize("d", [2, 3])
def test_stiffness_scale_closed_form(d):
    m = Material(1000.0, 1e5, 0.3)
    mu, lam = m.mu, m.lam
    want = np.sqrt(d * (2 * mu + lam) ** 2 + d * (d - 1) * lam**2)
    assert stiffness_scale(m, d) == pytest.approx(want, rel=1e-14)


def test_snow_clamp_example():
    m = Material(400.0, 1.4e5, 0.2, Plasticity(PlasticityKind.SNOW_CLAMP, lo=0.99, hi=1.001))
    F = np.diag([1.05, 0.9])[None]
    assert np.allclose(return_map(F, m), np.diag([1.001, 0.99]))


def _kirchhoff_dev_norm(F, mu, lam):
    """Independent measure: deviator of tau = P F^T, via the stress function."""
    tau = fcr_stress(F, mu, lam) @ np.swapaxes(F, -1, -2)
    tr = np.trace(tau, axis1=-2, axis2=-1)[..., None, None] / F.shape[-1]
    dev = tau - tr * np.eye(F.shape[-1])
    return np.linalg.norm(dev, axis=(-2, -1))


def _bisection_gamma(s, mu, lam, Y):
    eps = np.log(s)
    mean = eps.mean()
    dev = eps - mean

    def f(g):
        sg = np.exp(mean + g * dev)
        J = np.prod(sg)
        t = 2 * mu * (sg - 1) * sg + lam * (J - 1) * J
        return np.linalg.norm(t - t.mean()) - Y

    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("d", [2, 3])
def test_von_mises_lands_on_yield_surface(d):
    rng = np.random.default_rng(20 + d)
    Y = 2e3
    m = Material(2700.0, 2e5, 0.33, Plasticity(PlasticityKind.VON_MISES, yield_stress=Y))
    R1, R2 = random_rotation(rng, d), random_rotation(rng, d)
    s = rng.uniform(0.8, 1.25, size=(30, d))
    F = np.einsum("ab,pb,bc->pac", R1, s, R2)
    before = _kirchhoff_dev_norm(F, m.mu, m.lam)
    out = return_map(F, m)
    after = _kirchhoff_dev_norm(out, m.mu, m.lam)
    yielding = before > Y * (1 + 1e-6)
    assert yielding.sum() > 5 and (~yielding).sum() >= 0
    assert np.allclose(after[yielding], Y, rtol=1e-8)
    assert np.allclose(out[~yielding], F[~yielding])
    # plastic flow is isochoric in log strain: det F is kept
    assert np.allclose(np.linalg.det(out), np.linalg.det(F), rtol=1e-10)
    # idempotent
    assert np.allclose(return_map(out, m), out, atol=1e-12)
    # same stretches as an independent bisection on the log-strain scale
    for p in np.nonzero(yielding)[0][:5]:
        g = _bisection_gamma(s[p], m.mu, m.lam, Y)
        eps = np.log(s[p])
        want = np.sort(np.exp(eps.mean() + g * (eps - eps.mean())))
        got = np.sort(np.linalg.svd(out[p], compute_uv=False))
        assert np.allclose(got, want, rtol=1e-9)


def test_return_map_without_plasticity_is_identity():
    m = Material(1000.0, 1e5, 0.3)
    F = random_F(np.random.default_rng(1), 5, 2)
    assert np.array_equal(return_map(F, m), F)
