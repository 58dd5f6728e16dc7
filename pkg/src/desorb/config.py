"""Run configuration: JSON schema validation and object builders.

The schema is strict: unknown keys are rejected with the full key path,
so typos cannot silently fall back to defaults. See README for the
documented schema.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .decoherence import DecoherenceQuadrature, PosePair
from .errors import ConfigError
from .flux import (CosineDirection, CosineLaw, FixedDirection, FluxModel,
                   Isotropic, IsotropicDirection, SingleSite, read_flux_csv)
from .geometry import (BodySpec, Box, Cylinder, Sphere, SurfaceQuadrature,
                       build_quadrature, read_obj)
from .moments import AngularQuadrature, EnergyQuadrature
from .rng import stream
from .rotations import random_rotation, rotation_from_w
from .spectra import MaxwellBoltzmannFlux, Monoenergetic, TabulatedSpectrum

#: empirical outgassing presets: (specific rate, Torr-l flag, T [K], label)
OUTGAS_PRESETS = {
    "gold": {"specific_rate": 8.5e-8, "torr_l_per_cm2_s": True,
             "gas_temperature_k": 295.0,
             "note": "untreated bulk gold at room temperature"},
    "silica": {"specific_rate": 6.6e-9, "torr_l_per_cm2_s": False,
               "gas_temperature_k": 295.0,
               "note": "baked bulk silica at room temperature"},
}


def _check_keys(block: dict, allowed: set, path: str) -> None:
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}.{key}'" if path
                              else f"unknown key '{key}'")


def _get(block: dict, key: str, path: str, required: bool = True,
         default: Any = None) -> Any:
    if key not in block:
        if required:
            raise ConfigError(f"missing key '{path}.{key}'")
        return default
    return block[key]


def _positive(value, path: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"'{path}' must be a number") from None
    if not np.isfinite(v) or v <= 0:
        raise ConfigError(f"'{path}' must be positive and finite, got {value}")
    return v


def _vector3(value, path: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"'{path}' must be a finite 3-vector")
    return arr


@dataclass
class RunConfig:
    """Validated run configuration plus built model objects."""

    raw: dict
    seed: int
    threads: int
    atom_mass: float
    species: Optional[str]
    body: BodySpec
    quadrature: SurfaceQuadrature
    flux: Optional[FluxModel]
    angular: AngularQuadrature
    energy: EnergyQuadrature
    surface_resolution: int
    command_blocks: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()


_TOP_KEYS = {"seed", "threads", "atom", "body", "flux", "quadrature",
             "tensors", "locmap", "simulate", "outgas"}


def load_config(path, resolution_scale: float = 1.0,
                seed_override: Optional[int] = None,
                threads_override: Optional[int] = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(raw, resolution_scale, seed_override, threads_override)


def parse_config(raw: dict, resolution_scale: float = 1.0,
                 seed_override: Optional[int] = None,
                 threads_override: Optional[int] = None) -> RunConfig:
    _check_keys(raw, _TOP_KEYS, "")
    seed = int(_get(raw, "seed", "", required=False, default=0))
    if seed_override is not None:
        seed = seed_override
    threads = int(_get(raw, "threads", "", required=False, default=1))
    if threads_override is not None:
        threads = threads_override
    if threads < 1:
        raise ConfigError("'threads' must be >= 1")

    atom = _get(raw, "atom", "")
    _check_keys(atom, {"mass_kg", "species"}, "atom")
    atom_mass = _positive(_get(atom, "mass_kg", "atom"), "atom.mass_kg")
    species = _get(atom, "species", "atom", required=False)

    body = _parse_body(_get(raw, "body", ""))

    quad_block = _get(raw, "quadrature", "", required=False, default={})
    _check_keys(quad_block, {"surface_resolution", "angular_kind",
                             "angular_polar", "angular_azimuth",
                             "lebedev_points", "energy_nodes"}, "quadrature")
    resolution = int(_get(quad_block, "surface_resolution", "quadrature",
                          required=False, default=64))
    resolution = max(1, int(round(resolution * resolution_scale)))
    kind = _get(quad_block, "angular_kind", "quadrature", required=False,
                default="auto")
    if kind not in ("auto", "lebedev"):
        raise ConfigError("'quadrature.angular_kind' must be 'auto' or 'lebedev'")
    angular = AngularQuadrature(
        kind=kind,
        n_polar=max(2, int(round(int(_get(quad_block, "angular_polar",
                                          "quadrature", required=False,
                                          default=32)) * resolution_scale))),
        n_azimuth=max(4, int(round(int(_get(quad_block, "angular_azimuth",
                                            "quadrature", required=False,
                                            default=64)) * resolution_scale))),
        lebedev_points=int(_get(quad_block, "lebedev_points", "quadrature",
                                required=False, default=434)),
    )
    energy = EnergyQuadrature(
        n_nodes=max(4, int(round(int(_get(quad_block, "energy_nodes",
                                          "quadrature", required=False,
                                          default=40)) * resolution_scale))))

    quadrature = build_quadrature(body, resolution)

    flux = None
    if "flux" in raw:
        flux = _parse_flux(raw["flux"], quadrature)

    blocks = {name: raw[name] for name in ("tensors", "locmap", "simulate",
                                           "outgas") if name in raw}
    return RunConfig(raw=raw, seed=seed, threads=threads, atom_mass=atom_mass,
                     species=species, body=body, quadrature=quadrature,
                     flux=flux, angular=angular, energy=energy,
                     surface_resolution=resolution, command_blocks=blocks)


def _parse_body(block) -> BodySpec:
    if not isinstance(block, dict):
        raise ConfigError("'body' must be an object")
    shape_name = _get(block, "shape", "body")
    common = {"shape", "mass_kg", "center_of_mass_m", "inertia_body_kg_m2"}
    mass = _positive(_get(block, "mass_kg", "body", required=False,
                          default=1e-18), "body.mass_kg")
    com = block.get("center_of_mass_m")
    if com is not None:
        com = _vector3(com, "body.center_of_mass_m")
    inertia = block.get("inertia_body_kg_m2")
    if inertia is not None:
        inertia = np.asarray(inertia, dtype=float)
    if shape_name == "sphere":
        _check_keys(block, common | {"radius_m"}, "body")
        shape = Sphere(_positive(_get(block, "radius_m", "body"), "body.radius_m"))
    elif shape_name == "cylinder":
        _check_keys(block, common | {"radius_m", "half_length_m", "capped"}, "body")
        shape = Cylinder(
            _positive(_get(block, "radius_m", "body"), "body.radius_m"),
            _positive(_get(block, "half_length_m", "body"), "body.half_length_m"),
            bool(_get(block, "capped", "body", required=False, default=True)))
    elif shape_name == "box":
        _check_keys(block, common | {"half_extents_m"}, "body")
        he = _vector3(_get(block, "half_extents_m", "body"), "body.half_extents_m")
        if np.any(he <= 0):
            raise ConfigError("'body.half_extents_m' must be positive")
        shape = Box(he)
    elif shape_name == "mesh":
        _check_keys(block, common | {"obj_path"}, "body")
        shape = read_obj(_get(block, "obj_path", "body"))
    else:
        raise ConfigError(f"'body.shape' unknown: {shape_name!r}")
    try:
        return BodySpec(shape, mass=mass, center_of_mass=com, inertia_body=inertia)
    except ValueError as exc:
        raise ConfigError(f"body: {exc}") from None


def _parse_spectrum(block, path: str):
    if not isinstance(block, dict):
        raise ConfigError(f"'{path}' must be an object")
    kind = _get(block, "kind", path)
    if kind == "maxwell_boltzmann":
        _check_keys(block, {"kind", "temperature_k"}, path)
        return MaxwellBoltzmannFlux(_positive(_get(block, "temperature_k", path),
                                              f"{path}.temperature_k"))
    if kind == "monoenergetic":
        _check_keys(block, {"kind", "energy_j"}, path)
        return Monoenergetic(_positive(_get(block, "energy_j", path),
                                       f"{path}.energy_j"))
    if kind == "tabulated":
        _check_keys(block, {"kind", "energies_j", "values"}, path)
        try:
            return TabulatedSpectrum(np.asarray(_get(block, "energies_j", path),
                                                dtype=float),
                                     np.asarray(_get(block, "values", path),
                                                dtype=float))
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    raise ConfigError(f"'{path}.kind' unknown: {kind!r}")


def _parse_rate_field(value, path: str):
    if isinstance(value, dict):
        _check_keys(value, {"base", "gradient_1_m"}, path)
        base = _positive(_get(value, "base", path), f"{path}.base")
        grad = _vector3(_get(value, "gradient_1_m", path), f"{path}.gradient_1_m")

        def rate(points, _b=base, _g=grad):
            return _b * (1.0 + points @ _g)

        return rate
    return _positive(value, path)


def _parse_flux(block, q: SurfaceQuadrature) -> FluxModel:
    if not isinstance(block, dict):
        raise ConfigError("'flux' must be an object")
    model = _get(block, "model", "flux")
    if model in ("cosine", "isotropic"):
        _check_keys(block, {"model", "rate_per_area_hz_m2", "spectrum"}, "flux")
        rate = _parse_rate_field(_get(block, "rate_per_area_hz_m2", "flux"),
                                 "flux.rate_per_area_hz_m2")
        spectrum = _parse_spectrum(_get(block, "spectrum", "flux"), "flux.spectrum")
        cls = CosineLaw if model == "cosine" else Isotropic
        built = cls(spectrum, rate)
        if callable(rate) and np.any(rate(q.points) < 0):
            raise ConfigError("'flux.rate_per_area_hz_m2' is negative at "
                              "some surface nodes")
        return built
    if model == "single_site":
        _check_keys(block, {"model", "site_m", "rate_hz", "direction",
                            "spectrum"}, "flux")
        direction = _parse_direction(_get(block, "direction", "flux"),
                                     "flux.direction")
        return SingleSite(
            _vector3(_get(block, "site_m", "flux"), "flux.site_m"),
            direction,
            _parse_spectrum(_get(block, "spectrum", "flux"), "flux.spectrum"),
            _positive(_get(block, "rate_hz", "flux"), "flux.rate_hz"))
    if model == "tabulated":
        _check_keys(block, {"model", "csv_path"}, "flux")
        try:
            return read_flux_csv(_get(block, "csv_path", "flux"), q)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"flux.csv_path: {exc}") from None
    raise ConfigError(f"'flux.model' unknown: {model!r}")


def _parse_direction(block, path: str):
    if not isinstance(block, dict):
        raise ConfigError(f"'{path}' must be an object")
    law = _get(block, "law", path)
    if law == "isotropic":
        _check_keys(block, {"law"}, path)
        return IsotropicDirection()
    if law == "fixed":
        _check_keys(block, {"law", "direction"}, path)
        return FixedDirection(_vector3(_get(block, "direction", path),
                                       f"{path}.direction"))
    if law == "cosine":
        _check_keys(block, {"law", "axis"}, path)
        return CosineDirection(_vector3(_get(block, "axis", path), f"{path}.axis"))
    raise ConfigError(f"'{path}.law' unknown: {law!r}")


# ---------------------------------------------------------------------------
# Command blocks
# ---------------------------------------------------------------------------

def parse_locmap_block(cfg: RunConfig):
    """(pairs, DecoherenceQuadrature, visibility times) from the locmap block."""
    block = cfg.command_blocks.get("locmap")
    if block is None:
        raise ConfigError("missing 'locmap' block")
    _check_keys(block, {"pairs", "ray", "random", "visibility_times_s",
                        "n_mu_panels", "n_azimuth", "check_convergence",
                        "convergence_tol"}, "locmap")
    pairs = []
    for i, p in enumerate(block.get("pairs", [])):
        path = f"locmap.pairs[{i}]"
        _check_keys(p, {"delta_x_m", "w", "w_prime"}, path)
        dx = _vector3(_get(p, "delta_x_m", path), f"{path}.delta_x_m")
        rot = rotation_from_w(_vector3(p["w"], f"{path}.w")) if "w" in p \
            else np.eye(3)
        rotp = rotation_from_w(_vector3(p["w_prime"], f"{path}.w_prime")) \
            if "w_prime" in p else np.eye(3)
        pairs.append(PosePair(dx, rot, rotp))
    if "ray" in block:
        ray = block["ray"]
        _check_keys(ray, {"direction", "lengths_m"}, "locmap.ray")
        direction = _vector3(_get(ray, "direction", "locmap.ray"),
                             "locmap.ray.direction")
        norm = np.linalg.norm(direction)
        if norm == 0:
            raise ConfigError("'locmap.ray.direction' must be nonzero")
        direction = direction / norm
        for length in _get(ray, "lengths_m", "locmap.ray"):
            pairs.append(PosePair(float(length) * direction))
    if "random" in block:
        rnd = block["random"]
        _check_keys(rnd, {"count", "delta_x_scale_m", "max_angle_rad"},
                    "locmap.random")
        count = int(_get(rnd, "count", "locmap.random"))
        scale = float(_get(rnd, "delta_x_scale_m", "locmap.random"))
        max_angle = float(_get(rnd, "max_angle_rad", "locmap.random",
                               required=False, default=3.0))
        rng = stream(cfg.seed, "locmap-pairs")
        for _ in range(count):
            dx = scale * rng.standard_normal(3)
            pairs.append(PosePair(dx, _random_small_rotation(rng, max_angle),
                                  _random_small_rotation(rng, max_angle)))
    if not pairs:
        raise ConfigError("locmap block defines no pose pairs")
    quad = DecoherenceQuadrature(
        n_mu_panels=int(block.get("n_mu_panels", 96)),
        n_azimuth=int(block.get("n_azimuth", 64)),
        energy_nodes=cfg.energy.n_nodes,
        check_convergence=bool(block.get("check_convergence", True)),
        convergence_tol=float(block.get("convergence_tol", 1e-3)))
    times = [float(t) for t in block.get("visibility_times_s", [])]
    return pairs, quad, times


def _random_small_rotation(rng, max_angle):
    if max_angle >= np.pi:
        return random_rotation(rng)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    return rotation_from_w(rng.uniform(0.0, max_angle) * axis)


def parse_simulate_block(cfg: RunConfig):
    block = cfg.command_blocks.get("simulate")
    if block is None:
        raise ConfigError("missing 'simulate' block")
    _check_keys(block, {"duration_s", "n_trajectories", "n_times", "compare"},
                "simulate")
    duration = _positive(_get(block, "duration_s", "simulate"),
                         "simulate.duration_s")
    n_traj = int(_get(block, "n_trajectories", "simulate"))
    if n_traj < 4:
        raise ConfigError("'simulate.n_trajectories' must be >= 4")
    n_times = int(_get(block, "n_times", "simulate", required=False, default=16))
    if n_times < 1:
        raise ConfigError("'simulate.n_times' must be >= 1")
    compare = bool(_get(block, "compare", "simulate", required=False,
                        default=True))
    return duration, n_traj, n_times, compare


def parse_outgas_block(cfg: RunConfig):
    """(specific_rate_pa_m3_s_m2, temperature, area, provenance note)."""
    block = cfg.command_blocks.get("outgas")
    if block is None:
        raise ConfigError("missing 'outgas' block")
    _check_keys(block, {"preset", "specific_rate_pa_m3_s_m2",
                        "specific_rate_torr_l_cm2_s", "gas_temperature_k",
                        "area_m2"}, "outgas")
    from .constants import TORR_L_PER_CM2_S
    note = None
    if "preset" in block:
        preset = block["preset"]
        if preset not in OUTGAS_PRESETS:
            raise ConfigError(f"'outgas.preset' unknown: {preset!r}")
        p = OUTGAS_PRESETS[preset]
        rate = p["specific_rate"] * (TORR_L_PER_CM2_S if p["torr_l_per_cm2_s"]
                                     else 1.0)
        temperature = block.get("gas_temperature_k", p["gas_temperature_k"])
        temperature = _positive(temperature, "outgas.gas_temperature_k")
        note = p["note"]
        if preset == "silica":
            note += ("; the ideal-gas conversion at 295 K over the sphere "
                     "area gives ~0.115 Hz for a 150 nm particle, a factor "
                     "~3 below the commonly quoted 0.33 Hz estimate, whose "
                     "temperature/area convention is not stated")
    else:
        if "specific_rate_pa_m3_s_m2" in block:
            rate = _positive(block["specific_rate_pa_m3_s_m2"],
                             "outgas.specific_rate_pa_m3_s_m2")
        elif "specific_rate_torr_l_cm2_s" in block:
            rate = TORR_L_PER_CM2_S * _positive(
                block["specific_rate_torr_l_cm2_s"],
                "outgas.specific_rate_torr_l_cm2_s")
        else:
            raise ConfigError("outgas needs a preset or a specific rate")
        temperature = _positive(_get(block, "gas_temperature_k", "outgas"),
                                "outgas.gas_temperature_k")
    area = block.get("area_m2")
    area = cfg.quadrature.total_area if area is None else _positive(
        area, "outgas.area_m2")
    return rate, temperature, area, note
