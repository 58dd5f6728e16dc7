"""Spectral particle flux density models Phi(n, s, E) in the body frame.

Phi gives the rate of outgoing atoms per solid angle, per emitting
surface element, per energy interval. It is the sole physical input of
the desorption master equation; every observable in this package is a
functional of it.

Surface models (CosineLaw, Isotropic, TabulatedFlux) emit from the
surface-quadrature nodes with an angular profile that is axially
symmetric about the local outward normal. SingleSite emits from one
explicit point with its own direction law; its flux carries a surface
delta, so pointwise evaluation is only defined at the registered site.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .constants import KB
from .errors import NotUnit
from .geometry import SurfaceQuadrature
from .spectra import Spectrum

RateField = Union[float, Callable[[np.ndarray], np.ndarray]]

_UNIT_TOL = 1e-9


def _check_unit(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n, axis=-1)
    if np.any(np.abs(norm - 1.0) > _UNIT_TOL):
        raise NotUnit("direction must be a unit vector within 1e-9")
    return n


def _rates_at(rate_per_area: RateField, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    if callable(rate_per_area):
        r = np.asarray(rate_per_area(points), dtype=float)
        r = np.broadcast_to(r, (len(points),)).astype(float)
    else:
        r = np.full(len(points), float(rate_per_area))
    if np.any(r < 0):
        raise ValueError("rate_per_area must be nonnegative")
    return r


@dataclass(frozen=True)
class CosineLaw:
    """Knudsen cosine emission: Phi = r(s) (n.n_s) Theta(n.n_s) sigma(E) / pi.

    The 1/pi makes the hemisphere integral of the angular factor unity,
    so rate_per_area is literally outgoing atoms per area per second.
    """

    spectrum: Spectrum
    rate_per_area: RateField

    hemisphere_fraction = 1.0  # angular profile integrates to 1 over solid angle

    def axial_factor(self, mu):
        return np.maximum(np.asarray(mu, dtype=float), 0.0) / np.pi


@dataclass(frozen=True)
class Isotropic:
    """Direction-independent emission restricted to the outward hemisphere:
    Phi = r(s) Theta(n.n_s) sigma(E) / (4 pi). Half the 4pi-normalized
    rate escapes, so the per-node emission rate is r(s) * area / 2."""

    spectrum: Spectrum
    rate_per_area: RateField

    hemisphere_fraction = 0.5

    def axial_factor(self, mu):
        mu = np.asarray(mu, dtype=float)
        return np.where(mu > 0.0, 1.0 / (4.0 * np.pi), 0.0)


@dataclass(frozen=True)
class IsotropicDirection:
    """Uniform emission over the full sphere (for point sites)."""

    def density(self, n_dot_axis):
        return np.full_like(np.asarray(n_dot_axis, dtype=float), 1.0 / (4.0 * np.pi))


@dataclass(frozen=True)
class FixedDirection:
    """All atoms leave along one body-frame direction."""

    direction: np.ndarray

    def __post_init__(self):
        d = _check_unit(self.direction)
        object.__setattr__(self, "direction", d / np.linalg.norm(d))


@dataclass(frozen=True)
class CosineDirection:
    """Cosine law about a fixed body-frame axis."""

    axis: np.ndarray

    def __post_init__(self):
        a = _check_unit(self.axis)
        object.__setattr__(self, "axis", a / np.linalg.norm(a))

    def density(self, n_dot_axis):
        return np.maximum(np.asarray(n_dot_axis, dtype=float), 0.0) / np.pi


DirectionLaw = Union[IsotropicDirection, FixedDirection, CosineDirection]


@dataclass(frozen=True)
class SingleSite:
    """One explicit emission site s0 with total rate [1/s].

    The site need not lie on the surface quadrature; the surface integral
    collapses onto it. Pointwise flux evaluation is defined only at s0
    (delta character in s) and only for non-delta direction laws.
    """

    site: np.ndarray
    direction: DirectionLaw
    spectrum: Spectrum
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "site", np.asarray(self.site, dtype=float))
        if self.rate <= 0:
            raise ValueError("site emission rate must be positive")


@dataclass(frozen=True)
class TabulatedFlux:
    """Per-node tables of Phi over (cos_theta, E) with bilinear interpolation.

    values[i, j, k] is Phi at node i, cos_theta[j], energy[k], in
    1/(sr m^2 s J). Zero extrapolation outside the grids. The angular
    dependence enters through cos_theta = n . n_s only.
    """

    cos_grid: np.ndarray
    energy_grid: np.ndarray
    values: np.ndarray  # (n_nodes, n_cos, n_energy)

    def __post_init__(self):
        c = np.asarray(self.cos_grid, dtype=float)
        e = np.asarray(self.energy_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if np.any(np.diff(c) <= 0) or np.any(np.diff(e) <= 0):
            raise ValueError("tabulation grids must be strictly increasing")
        if c[0] < -1.0 - 1e-12 or c[-1] > 1.0 + 1e-12:
            raise ValueError("cos_theta grid must lie in [-1, 1]")
        if v.ndim != 3 or v.shape[1:] != (len(c), len(e)):
            raise ValueError("values must have shape (n_nodes, n_cos, n_energy)")
        if np.any(v < 0):
            raise ValueError("flux table must be nonnegative")
        for name, arr in (("cos_grid", c), ("energy_grid", e), ("values", v)):
            object.__setattr__(self, name, arr)

    def interp(self, mu, e, node_idx):
        """Bilinear interpolation, zero outside the grid (vectorized)."""
        mu = np.asarray(mu, dtype=float)
        e = np.asarray(e, dtype=float)
        mu_b, e_b, idx_b = np.broadcast_arrays(mu, e, node_idx)
        c, eg = self.cos_grid, self.energy_grid
        ic = np.clip(np.searchsorted(c, mu_b) - 1, 0, len(c) - 2)
        ie = np.clip(np.searchsorted(eg, e_b) - 1, 0, len(eg) - 2)
        tc = (mu_b - c[ic]) / (c[ic + 1] - c[ic])
        te = (e_b - eg[ie]) / (eg[ie + 1] - eg[ie])
        inside = ((mu_b >= c[0]) & (mu_b <= c[-1])
                  & (e_b >= eg[0]) & (e_b <= eg[-1]))
        tc = np.clip(tc, 0.0, 1.0)
        te = np.clip(te, 0.0, 1.0)
        v = self.values
        f00 = v[idx_b, ic, ie]
        f01 = v[idx_b, ic, ie + 1]
        f10 = v[idx_b, ic + 1, ie]
        f11 = v[idx_b, ic + 1, ie + 1]
        out = ((1 - tc) * (1 - te) * f00 + (1 - tc) * te * f01
               + tc * (1 - te) * f10 + tc * te * f11)
        return np.where(inside, out, 0.0)

    def node_spectral_rate(self, node_idx=None):
        """2 pi * integral over (mu, E) per node: rate per area [1/(m^2 s)].

        Exact for the bilinear interpolant (per-cell product trapezoid).
        """
        v = self.values if node_idx is None else self.values[node_idx]
        wc = _trapezoid_weights(self.cos_grid)
        we = _trapezoid_weights(self.energy_grid)
        return 2.0 * np.pi * np.einsum("...jk,j,k->...", v, wc, we)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


FluxModel = Union[CosineLaw, Isotropic, SingleSite, TabulatedFlux]


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def flux_eval(model: FluxModel, n: np.ndarray, s: np.ndarray,
              n_s: np.ndarray, energy: float) -> float:
    """Pointwise spectral flux density Phi(n, s, E) [1/(sr m^2 s J)].

    For SingleSite models the value is the angular-spectral density at
    the registered site (the surface delta is not included); anywhere
    else it is zero.
    """
    n = _check_unit(n)
    if energy < 0:
        raise ValueError("energy must be >= 0")
    if isinstance(model, (CosineLaw, Isotropic)):
        mu = float(np.dot(n, n_s))
        rate = float(_rates_at(model.rate_per_area, np.atleast_2d(s))[0])
        return rate * float(model.axial_factor(mu)) * float(model.spectrum.density(energy))
    if isinstance(model, TabulatedFlux):
        raise ValueError("tabulated flux is evaluated per node; use eval_at_node")
    if isinstance(model, SingleSite):
        if not np.allclose(np.asarray(s, dtype=float), model.site,
                           rtol=0.0, atol=1e-12 + 1e-9 * np.linalg.norm(model.site)):
            return 0.0
        law = model.direction
        if isinstance(law, FixedDirection):
            raise ValueError("fixed-direction site has no pointwise angular density")
        if isinstance(law, IsotropicDirection):
            ang = 1.0 / (4.0 * np.pi)
        else:
            ang = float(law.density(np.dot(n, law.axis)))
        return model.rate * ang * float(model.spectrum.density(energy))
    raise TypeError(f"unknown flux model {type(model).__name__}")


def eval_at_node(model: TabulatedFlux, mu, energy, node_idx):
    """Phi for a tabulated model at given node indices and mu = n . n_s."""
    return model.interp(mu, energy, node_idx)


def node_emission_rates(model: FluxModel, q: SurfaceQuadrature) -> np.ndarray:
    """Total emission rate per surface node [1/s] (area weight included)."""
    if isinstance(model, (CosineLaw, Isotropic)):
        r = _rates_at(model.rate_per_area, q.points)
        return q.weights * r * model.hemisphere_fraction
    if isinstance(model, TabulatedFlux):
        if model.values.shape[0] != q.n_nodes:
            raise ValueError("tabulated flux node count does not match quadrature")
        return q.weights * model.node_spectral_rate()
    raise TypeError("node rates are only defined for surface flux models")


def total_rate(model: FluxModel, q: SurfaceQuadrature) -> float:
    """Total atom emission rate [1/s], integrated over E, surface, and angle."""
    if isinstance(model, SingleSite):
        return float(model.rate)
    return float(np.sum(node_emission_rates(model, q)))


def outgas_rate(specific_rate: float, area: float, gas_temperature: float,
                torr_l_per_cm2_s: bool = False) -> float:
    """Particle emission rate [1/s] from an empirical specific outgassing rate.

    specific_rate is a throughput per area, Pa m^3/(s m^2) by default or
    Torr l/(cm^2 s) with the flag set; the ideal-gas relation N = pV/(kB T)
    converts throughput to particle number rate.
    """
    if specific_rate <= 0 or area <= 0 or gas_temperature <= 0:
        raise ValueError("specific rate, area, and temperature must be positive")
    if torr_l_per_cm2_s:
        from .constants import TORR_L_PER_CM2_S
        specific_rate = specific_rate * TORR_L_PER_CM2_S
    return specific_rate * area / (KB * gas_temperature)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _cosine_direction(axis: np.ndarray, rng: np.random.Generator, size: int):
    """Cosine-weighted hemisphere directions about per-row axes (n, 3)."""
    mu = np.sqrt(rng.random(size))
    return _directions_about(axis, mu, rng)


def _uniform_hemisphere(axis: np.ndarray, rng: np.random.Generator, size: int):
    mu = rng.random(size)
    return _directions_about(axis, mu, rng)


def _directions_about(axis: np.ndarray, mu: np.ndarray, rng: np.random.Generator):
    axis = np.atleast_2d(axis)
    size = len(mu)
    phi = 2.0 * np.pi * rng.random(size)
    # per-row orthonormal frames
    helper = np.where(np.abs(axis[:, :1]) > 0.9,
                      np.array([[0.0, 1.0, 0.0]]), np.array([[1.0, 0.0, 0.0]]))
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(axis, e1)
    sin_t = np.sqrt(np.clip(1.0 - mu**2, 0.0, None))
    return (mu[:, None] * axis
            + sin_t[:, None] * (np.cos(phi)[:, None] * e1
                                + np.sin(phi)[:, None] * e2))


@dataclass(frozen=True)
class EmissionSample:
    """One batch of emission events: directions, sites, energies, node ids."""

    directions: np.ndarray  # (n, 3) body frame
    sites: np.ndarray       # (n, 3) [m]
    energies: np.ndarray    # (n,) [J]
    node_index: np.ndarray  # (n,) int; -1 for single-site models


class EventSampler:
    """Reusable sampler with the per-node emission CDF precomputed."""

    def __init__(self, model: FluxModel, q: SurfaceQuadrature):
        self.model = model
        self.q = q
        if isinstance(model, SingleSite):
            self.total = model.rate
            self._cdf = None
        else:
            lam = node_emission_rates(model, q)
            self.total = float(lam.sum())
            if self.total <= 0:
                raise ValueError("flux model has zero total rate on this surface")
            self._cdf = np.cumsum(lam) / self.total

    def draw(self, rng: np.random.Generator, size: Optional[int] = None) -> EmissionSample:
        count = 1 if size is None else int(size)
        model, q = self.model, self.q
        if isinstance(model, SingleSite):
            sites = np.broadcast_to(model.site, (count, 3)).copy()
            law = model.direction
            if isinstance(law, FixedDirection):
                dirs = np.broadcast_to(law.direction, (count, 3)).copy()
            elif isinstance(law, IsotropicDirection):
                mu = 2.0 * rng.random(count) - 1.0
                dirs = _directions_about(np.broadcast_to([0.0, 0.0, 1.0],
                                                         (count, 3)), mu, rng)
            else:
                dirs = _cosine_direction(np.broadcast_to(law.axis, (count, 3)),
                                         rng, count)
            energies = np.atleast_1d(model.spectrum.sample(rng, count))
            return EmissionSample(dirs, sites, energies, np.full(count, -1))

        idx = np.searchsorted(self._cdf, rng.random(count), side="right")
        idx = np.clip(idx, 0, q.n_nodes - 1)
        axes = q.normals[idx]
        if isinstance(model, CosineLaw):
            dirs = _cosine_direction(axes, rng, count)
            energies = np.atleast_1d(model.spectrum.sample(rng, count))
        elif isinstance(model, Isotropic):
            dirs = _uniform_hemisphere(axes, rng, count)
            energies = np.atleast_1d(model.spectrum.sample(rng, count))
        else:
            mu, energies = _sample_table(model, idx, rng)
            dirs = _directions_about(axes, mu, rng)
        return EmissionSample(dirs, q.points[idx], energies, idx)


def sample_event(model: FluxModel, q: SurfaceQuadrature,
                 rng: np.random.Generator, size: Optional[int] = None) -> EmissionSample:
    """Draw emission events (n, s, E) consistent with flux_eval marginals."""
    return EventSampler(model, q).draw(rng, size)


def _sample_table(model: TabulatedFlux, node_idx: np.ndarray,
                  rng: np.random.Generator):
    """Sample (mu, E) from the bilinear table of each event's node.

    Cell selection by exact cell masses, then rejection against the cell
    maximum; exact for the interpolant.
    """
    c, eg, v = model.cos_grid, model.energy_grid, model.values
    dc = np.diff(c)
    de = np.diff(eg)
    cell_mean = 0.25 * (v[:, :-1, :-1] + v[:, 1:, :-1] + v[:, :-1, 1:] + v[:, 1:, 1:])
    masses = cell_mean * dc[None, :, None] * de[None, None, :]
    n_cells = masses.shape[1] * masses.shape[2]
    flat = masses.reshape(len(v), n_cells)
    cdf = np.cumsum(flat, axis=1)
    cdf /= cdf[:, -1:]
    cell = np.empty(len(node_idx), dtype=int)
    for k, node in enumerate(node_idx):
        cell[k] = np.searchsorted(cdf[node], rng.random(), side="right")
    cell = np.clip(cell, 0, n_cells - 1)
    ic, ie = np.unravel_index(cell, masses.shape[1:])
    vmax = np.maximum.reduce([v[node_idx, ic, ie], v[node_idx, ic + 1, ie],
                              v[node_idx, ic, ie + 1], v[node_idx, ic + 1, ie + 1]])
    mu = np.empty(len(node_idx))
    en = np.empty(len(node_idx))
    todo = np.arange(len(node_idx))
    while len(todo):
        t_mu = rng.random(len(todo))
        t_e = rng.random(len(todo))
        cand_mu = c[ic[todo]] + t_mu * dc[ic[todo]]
        cand_e = eg[ie[todo]] + t_e * de[ie[todo]]
        val = model.interp(cand_mu, cand_e, node_idx[todo])
        accept = rng.random(len(todo)) * vmax[todo] <= val
        mu[todo[accept]] = cand_mu[accept]
        en[todo[accept]] = cand_e[accept]
        todo = todo[~accept]
    return mu, en


def read_flux_csv(path, q: SurfaceQuadrature) -> TabulatedFlux:
    """Tabulated flux input.

    Columns: either node_index or s_x,s_y,s_z to identify the node, plus
    cos_theta, E_joule, value. All listed nodes must share the same
    (cos_theta, E) grid; unlisted nodes emit nothing.
    """
    import csv

    entries = []
    with open(path, "r", encoding="ascii", newline="") as fh:
        reader = csv.DictReader(fh)
        names = set(reader.fieldnames or ())
        base = {"cos_theta", "E_joule", "value"}
        by_index = base | {"node_index"} <= names
        by_pos = base | {"s_x", "s_y", "s_z"} <= names
        if not (by_index or by_pos):
            raise ValueError("flux CSV needs node_index or s_x,s_y,s_z plus "
                             "cos_theta, E_joule, value columns")
        for row in reader:
            if by_index:
                node = int(row["node_index"])
            else:
                pos = np.array([float(row["s_x"]), float(row["s_y"]),
                                float(row["s_z"])])
                node = int(np.argmin(np.linalg.norm(q.points - pos, axis=1)))
            entries.append((node, float(row["cos_theta"]),
                            float(row["E_joule"]), float(row["value"])))
    if not entries:
        raise ValueError("flux CSV is empty")
    cos_grid = np.array(sorted({c for _, c, _, _ in entries}))
    e_grid = np.array(sorted({e for _, _, e, _ in entries}))
    values = np.zeros((q.n_nodes, len(cos_grid), len(e_grid)))
    ci = {c: i for i, c in enumerate(cos_grid)}
    ei = {e: i for i, e in enumerate(e_grid)}
    seen = np.zeros(values.shape, dtype=bool)
    listed = set()
    for node, c, e, v in entries:
        if not 0 <= node < q.n_nodes:
            raise ValueError(f"flux CSV node_index {node} out of range")
        values[node, ci[c], ei[e]] = v
        seen[node, ci[c], ei[e]] = True
        listed.add(node)
    for node in listed:
        if not np.all(seen[node]):
            raise ValueError(f"flux CSV node {node} does not cover the full "
                             "(cos_theta, E) grid")
    return TabulatedFlux(cos_grid, e_grid, values)


