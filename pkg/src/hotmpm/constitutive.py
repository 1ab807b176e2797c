"""Fixed-corotated elasticity, Hessian projection and lagged plasticity.

All kernels are batched: deformation gradients are arrays of shape
(..., d, d) and the Lamé parameters broadcast against the batch shape.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class PlasticityKind(enum.Enum):
    NONE = "none"
    VON_MISES = "von_mises"
    SNOW_CLAMP = "snow_clamp"


@dataclass(frozen=True)
class Plasticity:
    kind: PlasticityKind = PlasticityKind.NONE
    yield_stress: float = 0.0
    lo: float = 1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind is PlasticityKind.VON_MISES and not self.yield_stress > 0:
            raise ValueError("von Mises yield stress must be positive")
        if self.kind is PlasticityKind.SNOW_CLAMP and not (0 < self.lo <= 1.0 <= self.hi):
            raise ValueError("snow clamp needs 0 < lo <= 1 <= hi")


@dataclass(frozen=True)
class Material:
    density: float
    youngs: float
    poisson: float
    plasticity: Plasticity = Plasticity()

    def __post_init__(self):
        if not self.youngs > 0:
            raise ValueError("Young's modulus must be positive")
        if not 0.0 <= self.poisson < 0.5:
            raise ValueError("Poisson ratio must lie in [0, 0.5)")
        if not self.density > 0:
            raise ValueError("density must be positive")

    @property
    def mu(self) -> float:
        return self.youngs / (2.0 * (1.0 + self.poisson))

    @property
    def lam(self) -> float:
        nu = self.poisson
        return self.youngs * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))


def _check_finite(F):
    F = np.asarray(F, dtype=float)
    if not np.all(np.isfinite(F)):
        raise ValueError("non-finite deformation gradient")
    return F


def svd_rv(F):
    """Rotation-variant SVD: U, V proper rotations, sign carried by the last singular value."""
    U, s, Vt = np.linalg.svd(F)
    V = np.swapaxes(Vt, -1, -2)
    du = np.linalg.det(U) < 0
    dv = np.linalg.det(V) < 0
    if np.any(du):
        U[du, ..., -1] *= -1
        s[du, ..., -1] *= -1
    if np.any(dv):
        V[dv, ..., -1] *= -1
        s[dv, ..., -1] *= -1
    return U, s, V


def polar_rotation(F):
    U, _, V = svd_rv(F)
    return U @ np.swapaxes(V, -1, -2)


def cofactor(F):
    """J F^{-T}, defined for singular F as well."""
    d = F.shape[-1]
    if d == 2:
        out = np.empty_like(F)
        out[..., 0, 0] = F[..., 1, 1]
        out[..., 0, 1] = -F[..., 1, 0]
        out[..., 1, 0] = -F[..., 0, 1]
        out[..., 1, 1] = F[..., 0, 0]
        return out
    c0 = np.cross(F[..., :, 1], F[..., :, 2])
    c1 = np.cross(F[..., :, 2], F[..., :, 0])
    c2 = np.cross(F[..., :, 0], F[..., :, 1])
    return np.stack([c0, c1, c2], axis=-1)


def _cofactor_differential(F, dF):
    d = F.shape[-1]
    if d == 2:
        return cofactor(dF)
    cols = []
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        cols.append(np.cross(dF[..., :, b], F[..., :, c]) + np.cross(F[..., :, b], dF[..., :, c]))
    return np.stack(cols, axis=-1)


def fcr_energy_density(F, mu, lam):
    """mu * sum (sigma_k - 1)^2 + lam/2 (J - 1)^2."""
    F = _check_finite(F)
    _, s, _ = svd_rv(F)
    J = np.prod(s, axis=-1)
    return mu * np.sum((s - 1.0) ** 2, axis=-1) + 0.5 * lam * (J - 1.0) ** 2


def fcr_stress(F, mu, lam):
    """First Piola-Kirchhoff stress 2 mu (F - R) + lam (J - 1) J F^{-T}."""
    F = _check_finite(F)
    mu = np.asarray(mu, dtype=float)[..., None, None]
    lam = np.asarray(lam, dtype=float)[..., None, None]
    R = polar_rotation(F)
    J = np.linalg.det(F)[..., None, None]
    return 2.0 * mu * (F - R) + lam * (J - 1.0) * cofactor(F)


def fcr_stress_differential(F, dF, mu, lam, svd=None):
    """Directional derivative of the stress, dP[dF]."""
    U, s, V = svd if svd is not None else svd_rv(F)
    mu = np.asarray(mu, dtype=float)[..., None, None]
    lam = np.asarray(lam, dtype=float)[..., None, None]
    M = np.swapaxes(U, -1, -2) @ dF @ V
    den = s[..., :, None] + s[..., None, :]
    den = np.where(np.abs(den) < 1e-12, np.copysign(1e-12, den + 0.0), den)
    omega = (M - np.swapaxes(M, -1, -2)) / den
    dR = U @ omega @ np.swapaxes(V, -1, -2)
    cof = cofactor(F)
    J = np.prod(s, axis=-1)[..., None, None]
    dJ = np.sum(cof * dF, axis=(-2, -1))[..., None, None]
    return 2.0 * mu * (dF - dR) + lam * (dJ * cof + (J - 1.0) * _cofactor_differential(F, dF))


def fcr_stress_derivative(F, mu, lam):
    """dP/dF as a (..., d*d, d*d) matrix, row-major over (row, col) components."""
    F = _check_finite(F)
    d = F.shape[-1]
    svd = svd_rv(F)
    out = np.empty(F.shape[:-2] + (d * d, d * d))
    for k in range(d):
        for l in range(d):
            E = np.zeros((d, d))
            E[k, l] = 1.0
            dP = fcr_stress_differential(F, np.broadcast_to(E, F.shape), mu, lam, svd=svd)
            out[..., :, k * d + l] = dP.reshape(F.shape[:-2] + (d * d,))
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def project_spd(A, sym_tol: float = 1e-8):
    """Clamp negative eigenvalues of symmetric matrices to zero."""
    A = np.asarray(A, dtype=float)
    asym = np.abs(A - np.swapaxes(A, -1, -2)).max(initial=0.0)
    scale = np.abs(A).max(initial=0.0)
    if asym > sym_tol * max(scale, 1.0):
        raise ValueError("project_spd needs a symmetric input")
    w, Q = np.linalg.eigh(A)
    if np.all(w >= 0.0):
        return A.copy()
    w = np.maximum(w, 0.0)
    out = (Q * w[..., None, :]) @ np.swapaxes(Q, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def principal_kirchhoff(s, mu, lam):
    """Principal Kirchhoff stresses of the fixed-corotated model."""
    J = np.prod(s, axis=-1)[..., None]
    mu = np.asarray(mu, dtype=float)[..., None]
    lam = np.asarray(lam, dtype=float)[..., None]
    return 2.0 * mu * (s - 1.0) * s + lam * (J - 1.0) * J


def deviatoric_norm(s, mu, lam):
    tau = principal_kirchhoff(s, mu, lam)
    dev = tau - tau.mean(axis=-1, keepdims=True)
    return np.linalg.norm(dev, axis=-1)


def _von_mises_scale(eps_mean, eps_dev, mu, lam, yield_stress, iters=200):
    """Find gamma in [0, 1] with |dev tau(exp(mean + gamma dev))| = yield (Illinois)."""

    def f(g):
        s = np.exp(eps_mean[:, None] + g[:, None] * eps_dev)
        return deviatoric_norm(s, mu, lam) - yield_stress

    a = np.zeros(len(eps_mean))
    b = np.ones(len(eps_mean))
    fa, fb = f(a), f(b)
    side = np.zeros(len(a), dtype=int)
    for _ in range(iters):
        c = (a * fb - b * fa) / (fb - fa)
        c = np.where(np.isfinite(c) & (c > a) & (c < b), c, 0.5 * (a + b))
        fc = f(c)
        left = fc * fb > 0  # root in [a, c]
        b = np.where(left, c, b)
        fb_new = np.where(left, fc, fb)
        a = np.where(left, a, c)
        fa_new = np.where(left, fa, fc)
        # Illinois: halve the stale endpoint value when the same side repeats
        fa_new = np.where(left & (side == 1), fa_new * 0.5, fa_new)
        fb_new = np.where(~left & (side == -1), fb_new * 0.5, fb_new)
        side = np.where(left, 1, -1)
        fa, fb = fa_new, fb_new
        if np.all(np.abs(fc) <= 1e-12 * yield_stress) or np.all(b - a < 1e-15):
            break
    return c


def return_map(F_trial, material: Material):
    """Lagged plastic projection of trial deformation gradients (..., d, d)."""
    F_trial = _check_finite(F_trial)
    plast = material.plasticity
    if plast.kind is PlasticityKind.NONE:
        return F_trial.copy()
    shape = F_trial.shape
    d = shape[-1]
    F = F_trial.reshape(-1, d, d)
    U, s, V = svd_rv(F)
    if plast.kind is PlasticityKind.SNOW_CLAMP:
        s = np.clip(s, plast.lo, plast.hi)
        out = (U * s[:, None, :]) @ np.swapaxes(V, -1, -2)
        return out.reshape(shape)
    mu, lam, Y = material.mu, material.lam, plast.yield_stress
    out = F.copy()
    ok = np.all(s > 0, axis=-1)
    dev_norm = np.where(ok, deviatoric_norm(np.where(ok[:, None], s, 1.0), mu, lam), 0.0)
    yielding = ok & (dev_norm > Y * (1.0 + 1e-9))
    if np.any(yielding):
        eps = np.log(s[yielding])
        eps_mean = eps.mean(axis=-1)
        eps_dev = eps - eps_mean[:, None]
        g = _von_mises_scale(eps_mean, eps_dev, mu, lam, Y)
        s_new = np.exp(eps_mean[:, None] + g[:, None] * eps_dev)
        out[yielding] = (U[yielding] * s_new[:, None, :]) @ np.swapaxes(V[yielding], -1, -2)
    return out.reshape(shape)


def stiffness_scale(material: Material, dim: int) -> float:
    """Frobenius norm of the principal-space stress derivative at rest.

    In principal stretches the fixed-corotated Hessian at sigma = 1 is
    2 mu I + lam 1 1^T.
    """
    mu, lam = material.mu, material.lam
    A = 2.0 * mu * np.eye(dim) + lam * np.ones((dim, dim))
    return float(np.linalg.norm(A))
