"""Diffusive-limit characterization of the emission master equation.

The momentum-space diffusion tensor is the 6x6 block matrix

    D = 1/2 int dE int d2s int d2n  Phi p^2(E) [ n (x) n        n (x) (s x n)
                                                 (s x n) (x) n  (s x n) (x) (s x n) ]

and the generalized force is

    F = - int dE int d2s int d2n  Phi p(E) (n; s x n),

both in the body frame at reference orientation. The angular integrals
run per surface node over product rules aligned with the local normal
(the emission cutoff would break Lebedev's polynomial exactness), or
over a full-sphere Lebedev rule with the cutoff folded into the
integrand when explicitly requested.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import QuadratureNotConverged
from .flux import (CosineLaw, FluxModel, Isotropic, SingleSite, TabulatedFlux,
                   FixedDirection, IsotropicDirection, _rates_at)
from .geometry import SurfaceQuadrature
from .lebedev import lebedev_rule
from .quadrules import gauss_legendre, sphere_product_rule
from .spectra import DEFAULT_ENERGY_NODES


@dataclass(frozen=True)
class AngularQuadrature:
    """Solid-angle rule selection. kind 'auto' picks an exact product rule
    matched to the model; 'lebedev' forces the full-sphere rule with the
    hemisphere cutoff applied through the integrand."""

    kind: str = "auto"          # auto | lebedev
    n_polar: int = 32
    n_azimuth: int = 64
    lebedev_points: int = 434   # algebraic degree 35

    def refined(self) -> "AngularQuadrature":
        from .lebedev import AVAILABLE
        finer = [n for n in AVAILABLE if n > self.lebedev_points]
        return replace(self, n_polar=2 * self.n_polar,
                       n_azimuth=2 * self.n_azimuth,
                       lebedev_points=finer[0] if finer else self.lebedev_points)


@dataclass(frozen=True)
class EnergyQuadrature:
    n_nodes: int = DEFAULT_ENERGY_NODES

    def refined(self) -> "EnergyQuadrature":
        return EnergyQuadrature(2 * self.n_nodes)


_DEF_ANG = AngularQuadrature()
_DEF_EN = EnergyQuadrature()


@dataclass(frozen=True)
class Diffusion6:
    """Body-frame momentum diffusion tensor, 3x3 blocks of the 6x6 form.

    Units: d_tt (kg m/s)^2/s, d_rr (kg m^2/s)^2/s, d_tr and d_rt mixed.
    """

    d_tt: np.ndarray
    d_tr: np.ndarray
    d_rt: np.ndarray
    d_rr: np.ndarray

    def __post_init__(self):
        for name in ("d_tt", "d_tr", "d_rt", "d_rr"):
            block = np.asarray(getattr(self, name), dtype=float)
            if block.shape != (3, 3):
                raise ValueError(f"{name} must be 3x3")
            object.__setattr__(self, name, block)
        m = self.matrix
        scale = float(np.max(np.abs(m)))
        if scale > 0.0:
            if np.max(np.abs(m - m.T)) > 1e-9 * scale:
                raise ValueError("diffusion tensor is not symmetric within 1e-9")
            eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
            if eigs.min() < -1e-12 * eigs.max():
                raise ValueError("diffusion tensor is not positive semidefinite")

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.d_tt, self.d_tr], [self.d_rt, self.d_rr]])


@dataclass(frozen=True)
class ForceTorque6:
    """Thermophoresis-like generalized force: force [N], torque [N m]."""

    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        for name in ("force", "torque"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, v)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])


def spectral_momentum_moments(spectrum, m_atom: float,
                              n_nodes: int = DEFAULT_ENERGY_NODES):
    """(j1, j2) = (int sigma p dE, int sigma p^2 dE) for one emitted atom."""
    e, w = spectrum.energy_rule(n_nodes)
    p = np.sqrt(2.0 * m_atom * e)
    return float(np.sum(w * p)), float(np.sum(w * p * p))


# ---------------------------------------------------------------------------
# Per-node angular moments (A0, A1, A2) of the angular flux factor
# ---------------------------------------------------------------------------

def _axial_moment_integrals(profile_values, mu, wmu):
    """(t0, t1, t2) = int t(mu) mu^k w(mu) dmu for k = 0, 1, 2, batched."""
    t0 = profile_values @ wmu
    t1 = profile_values @ (wmu * mu)
    t2 = profile_values @ (wmu * mu * mu)
    return t0, t1, t2


def _axial_moments_to_tensors(normals, t0, t1, t2):
    """Assemble A0, A1, A2 in the body frame for axially symmetric profiles.

    With the azimuthal integral carried out, A1 = 2 pi t1 n_s and
    A2 = pi (t0 - t2) (1 - n (x) n) + 2 pi t2 n (x) n.
    """
    two_pi = 2.0 * np.pi
    a0 = two_pi * t0
    a1 = two_pi * t1[:, None] * normals
    eye = np.eye(3)
    nn = np.einsum("ia,ib->iab", normals, normals)
    a2 = (np.pi * (t0 - t2))[:, None, None] * (eye[None] - nn) \
        + (two_pi * t2)[:, None, None] * nn
    return a0, a1, a2


def _surface_angular_moments(model, q, angular: AngularQuadrature, energy=None):
    """A0 (n,), A1 (n,3), A2 (n,3,3) per node, including the rate factor.

    For separable models these are per unit spectral density; for
    tabulated models `energy` selects the evaluation energy.
    """
    if angular.kind == "lebedev":
        return _lebedev_surface_moments(model, q, angular, energy)
    if isinstance(model, (CosineLaw, Isotropic)):
        mu, wmu = gauss_legendre(angular.n_polar, 0.0, 1.0)
        prof = model.axial_factor(mu)[None, :]
        t0, t1, t2 = _axial_moment_integrals(prof, mu, wmu)
        rates = _rates_at(model.rate_per_area, q.points)
        a0, a1, a2 = _axial_moments_to_tensors(q.normals,
                                               np.full(q.n_nodes, t0[0]),
                                               np.full(q.n_nodes, t1[0]),
                                               np.full(q.n_nodes, t2[0]))
        return rates * a0, rates[:, None] * a1, rates[:, None, None] * a2
    if isinstance(model, TabulatedFlux):
        # per-segment GL in mu: exact for the piecewise-linear table
        pts = max(3, angular.n_polar // max(len(model.cos_grid) - 1, 1) + 2)
        mus, wmus = [], []
        for a, b in zip(model.cos_grid[:-1], model.cos_grid[1:]):
            m, w = gauss_legendre(pts, a, b)
            mus.append(m)
            wmus.append(w)
        mu = np.concatenate(mus)
        wmu = np.concatenate(wmus)
        idx = np.arange(q.n_nodes)[:, None]
        prof = model.interp(mu[None, :], energy, idx)
        t0, t1, t2 = _axial_moment_integrals(prof, mu, wmu)
        return _axial_moments_to_tensors(q.normals, t0, t1, t2)
    raise TypeError("surface moments undefined for this model")


def _lebedev_surface_moments(model, q, angular: AngularQuadrature, energy=None):
    nodes, w = lebedev_rule(angular.lebedev_points)
    mu = q.normals @ nodes.T                     # (n_surf, n_leb)
    if isinstance(model, (CosineLaw, Isotropic)):
        rates = _rates_at(model.rate_per_area, q.points)
        vals = rates[:, None] * model.axial_factor(mu)
    elif isinstance(model, TabulatedFlux):
        idx = np.arange(q.n_nodes)[:, None]
        vals = model.interp(mu, energy, idx)
    else:
        raise TypeError("surface moments undefined for this model")
    a0 = vals @ w
    a1 = np.einsum("ik,k,ka->ia", vals, w, nodes)
    a2 = np.einsum("ik,k,ka,kb->iab", vals, w, nodes, nodes)
    return a0, a1, a2


def _site_angular_moments(model: SingleSite, angular: AngularQuadrature):
    """A0, A1, A2 of the direction law (integrates to 1 over solid angle)."""
    law = model.direction
    if isinstance(law, FixedDirection):
        n0 = law.direction
        return 1.0, n0.copy(), np.outer(n0, n0)
    if isinstance(law, IsotropicDirection):
        nodes, w = lebedev_rule(angular.lebedev_points)
        vals = np.full(len(w), 1.0 / (4.0 * np.pi))
    else:
        nodes, w = sphere_product_rule(angular.n_polar, angular.n_azimuth,
                                       axis=law.axis, mu_min=0.0)
        vals = law.density(nodes @ law.axis)
    a0 = float(vals @ w)
    a1 = np.einsum("k,k,ka->a", vals, w, nodes)
    a2 = np.einsum("k,k,ka,kb->ab", vals, w, nodes, nodes)
    return a0, a1, a2


# ---------------------------------------------------------------------------
# Diffusion tensor and force
# ---------------------------------------------------------------------------

def _moment_blocks(model, q, m_atom, angular, energy):
    """Raw (d_tt, d_tr, d_rt, d_rr, f_t, f_r) before symmetrization."""
    if isinstance(model, SingleSite):
        a0, a1, a2 = _site_angular_moments(model, angular)
        j1, j2 = spectral_momentum_moments(model.spectrum, m_atom, energy.n_nodes)
        g = model.rate
        site = model.site[None, :]
        d_blocks = _diffusion_from_a2(site, (0.5 * j2 * g) * a2[None])
        f_t, f_r = _force_from_a1(site, (j1 * g) * a1[None])
        return (*d_blocks, -f_t, -f_r)
    if isinstance(model, TabulatedFlux):
        e_nodes, e_weights = _table_energy_rule(model, energy)
        d_tt = np.zeros((3, 3)); d_tr = np.zeros((3, 3))
        d_rt = np.zeros((3, 3)); d_rr = np.zeros((3, 3))
        f_t = np.zeros(3); f_r = np.zeros(3)
        for ek, wk in zip(e_nodes, e_weights):
            a0, a1, a2 = _surface_angular_moments(model, q, angular, energy=ek)
            p2 = 2.0 * m_atom * ek
            p1 = np.sqrt(p2)
            wa2 = (0.5 * wk * p2) * q.weights[:, None, None] * a2
            tt, tr, rt, rr = _diffusion_from_a2(q.points, wa2)
            d_tt += tt; d_tr += tr; d_rt += rt; d_rr += rr
            ft_k, fr_k = _force_from_a1(q.points, (wk * p1) * q.weights[:, None] * a1)
            f_t -= ft_k; f_r -= fr_k
        return d_tt, d_tr, d_rt, d_rr, f_t, f_r
    # separable surface models
    a0, a1, a2 = _surface_angular_moments(model, q, angular)
    j1, j2 = spectral_momentum_moments(model.spectrum, m_atom, energy.n_nodes)
    wa2 = (0.5 * j2) * q.weights[:, None, None] * a2
    d_tt, d_tr, d_rt, d_rr = _diffusion_from_a2(q.points, wa2)
    f_t, f_r = _force_from_a1(q.points, j1 * q.weights[:, None] * a1)
    return d_tt, d_tr, d_rt, d_rr, -f_t, -f_r


def _skews(s: np.ndarray) -> np.ndarray:
    sx = np.zeros((len(s), 3, 3))
    sx[:, 0, 1] = -s[:, 2]; sx[:, 0, 2] = s[:, 1]
    sx[:, 1, 0] = s[:, 2]; sx[:, 1, 2] = -s[:, 0]
    sx[:, 2, 0] = -s[:, 1]; sx[:, 2, 1] = s[:, 0]
    return sx


def _diffusion_from_a2(s: np.ndarray, wa2: np.ndarray):
    sx = _skews(np.atleast_2d(s))
    d_tt = wa2.sum(axis=0)
    d_tr = -np.einsum("iab,ibc->ac", wa2, sx)
    d_rt = np.einsum("iab,ibc->ac", sx, wa2)
    d_rr = -np.einsum("iab,ibc,icd->ad", sx, wa2, sx)
    return d_tt, d_tr, d_rt, d_rr


def _force_from_a1(s: np.ndarray, wa1: np.ndarray):
    sx = _skews(np.atleast_2d(s))
    return wa1.sum(axis=0), np.einsum("iab,ib->a", sx, wa1)


def _table_energy_rule(model: TabulatedFlux, energy: EnergyQuadrature):
    """Per-segment GL nodes on the table's energy grid (no density factor)."""
    grid = model.energy_grid
    pts = max(3, energy.n_nodes // max(len(grid) - 1, 1) + 2)
    nodes, weights = [], []
    for a, b in zip(grid[:-1], grid[1:]):
        e, w = gauss_legendre(pts, a, b)
        nodes.append(e)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _diffusion_change(a: Diffusion6, b: Diffusion6) -> float:
    """Largest per-block relative change between two diffusion tensors.

    The blocks carry different units, so each is scaled by its own
    magnitude; the cross blocks are floored by the geometric mean of the
    diagonal-block scales so that pure-roundoff cross blocks cannot trip
    the check.
    """
    s_tt = max(np.max(np.abs(a.d_tt)), np.max(np.abs(b.d_tt)), 1e-300)
    s_rr = max(np.max(np.abs(a.d_rr)), np.max(np.abs(b.d_rr)), 1e-300)
    s_cross = max(np.max(np.abs(a.d_tr)), np.max(np.abs(b.d_tr)),
                  np.sqrt(s_tt) * np.sqrt(s_rr), 1e-300)
    return max(
        float(np.max(np.abs(a.d_tt - b.d_tt))) / s_tt,
        float(np.max(np.abs(a.d_rr - b.d_rr))) / s_rr,
        float(np.max(np.abs(a.d_tr - b.d_tr))) / s_cross,
        float(np.max(np.abs(a.d_rt - b.d_rt))) / s_cross,
    )


def diffusion_tensor(model: FluxModel, q: SurfaceQuadrature, m_atom: float,
                     angular: AngularQuadrature = _DEF_ANG,
                     energy: EnergyQuadrature = _DEF_EN,
                     check_convergence: bool = True,
                     convergence_tol: float = 1e-6) -> Diffusion6:
    """Momentum diffusion tensor D (body frame) by three-level quadrature.

    When check_convergence is set, all three quadrature levels are
    refined by 2x and the refined result is returned; a relative change
    above convergence_tol raises QuadratureNotConverged.
    """
    blocks = _moment_blocks(model, q, m_atom, angular, energy)[:4]
    d = _symmetrized_diffusion(blocks)
    if check_convergence:
        fine = _moment_blocks(model, q, m_atom, angular.refined(),
                              energy.refined())[:4]
        d_fine = _symmetrized_diffusion(fine)
        change = _diffusion_change(d, d_fine)
        if change > convergence_tol:
            raise QuadratureNotConverged(
                f"diffusion tensor changed by {change:.3g} under refinement")
        return d_fine
    return d


def _symmetrized_diffusion(blocks) -> Diffusion6:
    d_tt, d_tr, d_rt, d_rr = blocks
    m = np.block([[d_tt, d_tr], [d_rt, d_rr]])
    m = 0.5 * (m + m.T)  # kill roundoff skew only
    return Diffusion6(m[:3, :3], m[:3, 3:], m[3:, :3], m[3:, 3:])


def force_torque(model: FluxModel, q: SurfaceQuadrature, m_atom: float,
                 angular: AngularQuadrature = _DEF_ANG,
                 energy: EnergyQuadrature = _DEF_EN,
                 check_convergence: bool = True,
                 convergence_tol: float = 1e-6) -> ForceTorque6:
    """Thermophoresis-like force and torque F (body frame)."""
    raw = _moment_blocks(model, q, m_atom, angular, energy)
    ft = ForceTorque6(raw[4], raw[5])
    if check_convergence:
        fine = _moment_blocks(model, q, m_atom, angular.refined(), energy.refined())
        ft_fine = ForceTorque6(fine[4], fine[5])
        # scale against the momentum flux, not the (possibly zero) force
        scale = _force_scale(model, q, m_atom)
        change = float(np.max(np.abs(ft.vector - ft_fine.vector)))
        if change > convergence_tol * max(scale, 1e-300):
            raise QuadratureNotConverged(
                f"force/torque changed by {change:.3g} (scale {scale:.3g})")
        return ft_fine
    return ft


def _force_scale(model, q, m_atom) -> float:
    from .flux import total_rate
    if isinstance(model, SingleSite):
        gamma = model.rate
    else:
        gamma = total_rate(model, q)
    if isinstance(model, TabulatedFlux):
        e, w = _table_energy_rule(model, EnergyQuadrature())
        # mean momentum over the table's spectral weight, roughly normalized
        a0 = np.array([_surface_angular_moments(model, q, _DEF_ANG, ek)[0]
                       for ek in e])
        tot = np.einsum("k,ki,i->", w, a0, q.weights)
        pbar = np.einsum("k,ki,i,k->", w, a0, q.weights,
                         np.sqrt(2 * m_atom * e)) / max(tot, 1e-300)
    else:
        j1, _ = spectral_momentum_moments(model.spectrum, m_atom)
        pbar = j1
    arm = max(1.0, q.max_radius())
    return gamma * pbar * arm


def analytic_cosine_tensor(q: SurfaceQuadrature, j2_paper: float) -> Diffusion6:
    """Closed-form diffusion tensor for a site-independent cosine law.

    j2_paper is the spectral weight int dE Phi0(E) p^2(E) with
    Phi = (n.n_s) Theta(n.n_s) Phi0(E); in terms of this package's rate
    convention Phi0 = rate_per_area * sigma(E) / pi. The solid-angle
    integral is carried out analytically; only the surface sum remains.
    """
    s = q.points
    nu = q.normals
    w = q.weights
    sx = _skews(s)
    sxn = np.cross(s, nu)
    eye = np.eye(3)

    d_tt = np.einsum("i,ab->ab", w, eye) + np.einsum("i,ia,ib->ab", w, nu, nu)
    d_tr = (-np.einsum("i,iab->ab", w, sx)
            + np.einsum("i,ia,ib->ab", w, nu, sxn))
    d_rt = (np.einsum("i,iab->ab", w, sx)
            + np.einsum("i,ia,ib->ab", w, sxn, nu))
    d_rr = (-np.einsum("i,iab,ibc->ac", w, sx, sx)
            + np.einsum("i,ia,ib->ab", w, sxn, sxn))
    pref = np.pi / 8.0 * j2_paper
    m = pref * np.block([[d_tt, d_tr], [d_rt, d_rr]])
    m = 0.5 * (m + m.T)
    return Diffusion6(m[:3, :3], m[:3, 3:], m[3:, :3], m[3:, 3:])


def predict_moments(d: Diffusion6, f: ForceTorque6, t: float,
                    mean0: Optional[np.ndarray] = None,
                    cov0: Optional[np.ndarray] = None):
    """Ballistic moment growth: mean(t) = mean0 + F t, cov(t) = cov0 + 2 D t.

    Both in the body frame of the reference orientation; valid while the
    state stays well-oriented and no external potential acts.
    """
    if t < 0:
        raise ValueError("time must be >= 0")
    mean0 = np.zeros(6) if mean0 is None else np.asarray(mean0, dtype=float)
    cov0 = np.zeros((6, 6)) if cov0 is None else np.asarray(cov0, dtype=float)
    return mean0 + f.vector * t, cov0 + 2.0 * d.matrix * t
