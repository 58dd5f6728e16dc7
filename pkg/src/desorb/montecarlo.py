"""Monte Carlo oracle: emission events as momentum kicks on an ensemble.

Each trajectory accumulates Poissonian emission events; every event
removes the atom's linear momentum p(E) n and orbital angular momentum
s x p(E) n from the particle (kicks -p n and -s x p n). Orientation is
held at the reference during a run, matching the regime in which the
drift/diffusion predictions are derived; an optional free-rotation mode
propagates rigid-body precession between kicks for exploratory runs.

Ensemble moments come with jackknife standard errors so the quadrature
predictions can be tested at a stated significance.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .flux import EventSampler, FluxModel, sample_event, total_rate
from .geometry import BodySpec, SurfaceQuadrature
from .moments import Diffusion6, ForceTorque6
from .rng import stream
from .rotations import momentum_from_energy

_TRAJ_TAG = "trajectory"
_BLOCK = 2048  # fixed work partition; independent of the thread count


@dataclass(frozen=True)
class Trajectory:
    """Single-particle record: piecewise-constant P, J and the event log."""

    times: np.ndarray        # event times [s], sorted
    momenta: np.ndarray      # (n_events + 1, 3) P after each event
    angular: np.ndarray      # (n_events + 1, 3) J after each event
    directions: np.ndarray   # (n_events, 3) emission directions
    sites: np.ndarray        # (n_events, 3)
    energies: np.ndarray     # (n_events,)


@dataclass(frozen=True)
class EnsembleMoments:
    """Per-time mean and covariance of (P, J) with jackknife errors."""

    times: np.ndarray        # (n_t,)
    mean: np.ndarray         # (n_t, 6)
    cov: np.ndarray          # (n_t, 6, 6)
    stderr_mean: np.ndarray  # (n_t, 6)
    stderr_cov: np.ndarray   # (n_t, 6, 6)
    n_trajectories: int
    event_counts: np.ndarray  # (n_traj,) events per trajectory


def simulate_trajectory(model: FluxModel, q: SurfaceQuadrature, m_atom: float,
                        duration: float, rng: np.random.Generator,
                        check_conservation: bool = False,
                        free_rotation: bool = False,
                        body: Optional[BodySpec] = None) -> Trajectory:
    """One trajectory with full event log (for inspection and tests).

    By default the orientation is held at the reference during the run,
    the regime in which the drift/diffusion predictions hold. With
    free_rotation the body precesses between kicks (Euler propagation
    with body's inertia tensor) and kicks act at the rotated sites; this
    exploratory mode is excluded from all acceptance comparisons.
    """
    gamma = total_rate(model, q)
    n_events = rng.poisson(gamma * duration)
    times = np.sort(rng.uniform(0.0, duration, n_events))
    ev = sample_event(model, q, rng, size=n_events)
    p = momentum_from_energy(ev.energies, m_atom)
    if free_rotation:
        if body is None:
            raise ValueError("free rotation needs the body's inertia tensor")
        return _free_rotation_trajectory(body, times, ev, p, duration)
    kicks_p = -p[:, None] * ev.directions
    kicks_j = -np.cross(ev.sites, p[:, None] * ev.directions)
    if check_conservation:
        atom_p = p[:, None] * ev.directions
        atom_j = np.cross(ev.sites, atom_p)
        assert np.all(kicks_p + atom_p == 0.0)
        assert np.all(kicks_j + atom_j == 0.0)
    momenta = np.vstack([np.zeros(3), np.cumsum(kicks_p, axis=0)])
    angular = np.vstack([np.zeros(3), np.cumsum(kicks_j, axis=0)])
    return Trajectory(times, momenta, angular, ev.directions, ev.sites,
                      ev.energies)


def _free_rotation_trajectory(body, times, ev, p, duration):
    """Kick bookkeeping with rigid-body precession between the events."""
    rot = np.eye(3)
    j_lab = np.zeros(3)
    momenta = [np.zeros(3)]
    angular = [np.zeros(3)]
    t_prev = 0.0
    for k, t_k in enumerate(times):
        rot = _propagate_orientation(body, rot, j_lab, t_k - t_prev)
        n_lab = rot @ ev.directions[k]
        s_lab = rot @ ev.sites[k]
        momenta.append(momenta[-1] - p[k] * n_lab)
        j_lab = j_lab - np.cross(s_lab, p[k] * n_lab)
        angular.append(j_lab.copy())
        t_prev = t_k
    return Trajectory(times, np.array(momenta), np.array(angular),
                      ev.directions, ev.sites, ev.energies)


def _propagate_orientation(body, rot, j_lab, dt, n_steps=None):
    if dt <= 0.0:
        return rot
    inertia_inv = np.linalg.inv(body.inertia_body)
    if n_steps is None:
        # ~100 RK4 steps per revolution, capped for pathological spins
        omega = float(np.linalg.norm(inertia_inv @ (rot.T @ j_lab)))
        n_steps = max(1, int(np.ceil(100.0 * omega * dt / (2.0 * np.pi))))
        n_steps = min(n_steps, 100000)
    h = dt / n_steps

    def deriv(r):
        w_b = inertia_inv @ (r.T @ j_lab)
        wx = np.array([[0.0, -w_b[2], w_b[1]],
                       [w_b[2], 0.0, -w_b[0]],
                       [-w_b[1], w_b[0], 0.0]])
        return r @ wx

    for _ in range(n_steps):
        k1 = deriv(rot)
        k2 = deriv(rot + 0.5 * h * k1)
        k3 = deriv(rot + 0.5 * h * k2)
        k4 = deriv(rot + h * k3)
        rot = rot + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        u, _, vt = np.linalg.svd(rot)
        rot = u @ vt
    return rot


def _simulate_block(model, q, m_atom, duration, report_times, seed,
                    index_range) -> tuple[np.ndarray, np.ndarray]:
    """(P,J) at the report times for one fixed block of trajectories."""
    lo, hi = index_range
    n_t = len(report_times)
    out = np.zeros((hi - lo, n_t, 6))
    counts = np.zeros(hi - lo, dtype=np.int64)
    sampler = EventSampler(model, q)
    gamma_dt = sampler.total * duration
    for i in range(lo, hi):
        rng = stream(seed, _TRAJ_TAG, i)
        n_events = rng.poisson(gamma_dt)
        counts[i - lo] = n_events
        if n_events == 0:
            continue
        t_ev = np.sort(rng.uniform(0.0, duration, n_events))
        ev = sampler.draw(rng, size=n_events)
        p = momentum_from_energy(ev.energies, m_atom)
        kick = np.empty((n_events, 6))
        kick[:, :3] = -p[:, None] * ev.directions
        kick[:, 3:] = -np.cross(ev.sites, p[:, None] * ev.directions)
        cum = np.cumsum(kick, axis=0)
        idx = np.searchsorted(t_ev, report_times, side="right")
        nonzero = idx > 0
        out[i - lo, nonzero] = cum[idx[nonzero] - 1]
    return out, counts


def simulate_ensemble(model: FluxModel, q: SurfaceQuadrature, m_atom: float,
                      duration: float, n_trajectories: int, seed: int,
                      n_times: int = 16, threads: int = 1) -> EnsembleMoments:
    """Ensemble moments of (P, J) under the emission kick process.

    Bitwise reproducible for fixed (seed, n_trajectories, n_times): each
    trajectory owns a counter-based stream keyed by its index and the
    reduction order is fixed, so the thread count cannot change results.
    """
    if n_trajectories < 4:
        raise ValueError("need at least four trajectories for jackknife errors")
    if duration <= 0:
        raise ValueError("duration must be positive")
    report_times = duration * np.arange(1, n_times + 1) / n_times
    blocks = [(lo, min(lo + _BLOCK, n_trajectories))
              for lo in range(0, n_trajectories, _BLOCK)]
    results = [None] * len(blocks)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(_simulate_block, model, q, m_atom, duration,
                                   report_times, seed, b): k
                       for k, b in enumerate(blocks)}
            for fut, k in futures.items():
                results[k] = fut.result()
    else:
        for k, b in enumerate(blocks):
            results[k] = _simulate_block(model, q, m_atom, duration,
                                         report_times, seed, b)
    samples = np.concatenate([r[0] for r in results], axis=0)
    counts = np.concatenate([r[1] for r in results])
    mean, cov, se_mean, se_cov = _jackknife_moments(samples)
    return EnsembleMoments(report_times, mean, cov, se_mean, se_cov,
                           n_trajectories, counts)


def _jackknife_moments(samples: np.ndarray):
    """Mean/covariance over trajectories with delete-one jackknife errors.

    samples: (n_traj, n_t, 6). Covariances use the unbiased estimator.
    """
    n, n_t, _ = samples.shape
    mean = samples.mean(axis=0)
    se_mean = samples.std(axis=0, ddof=1) / np.sqrt(n)
    cov = np.empty((n_t, 6, 6))
    se_cov = np.empty((n_t, 6, 6))
    for j in range(n_t):
        x = samples[:, j, :]
        s1 = x.sum(axis=0)
        s2 = np.einsum("na,nb->ab", x, x)
        mu = s1 / n
        cov[j] = (s2 - n * np.outer(mu, mu)) / (n - 1)
        # delete-one covariances, vectorized
        s1_i = s1[None, :] - x                       # (n, 6)
        mu_i = s1_i / (n - 1)
        s2_i = s2[None, :, :] - np.einsum("na,nb->nab", x, x)
        cov_i = (s2_i - (n - 1) * np.einsum("na,nb->nab", mu_i, mu_i)) / (n - 2)
        cov_bar = cov_i.mean(axis=0)
        se_cov[j] = np.sqrt((n - 1) / n
                            * np.sum((cov_i - cov_bar) ** 2, axis=0))
    return mean, cov, se_mean, se_cov


@dataclass(frozen=True)
class ComparisonReport:
    """Measured-vs-predicted moment test at the final report time."""

    z_mean: np.ndarray        # (6,)
    z_cov: np.ndarray         # (21,) upper-triangle order
    chi2: float
    dof: int
    p_value: float
    passed: bool
    max_abs_z: float

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: max|z| = {self.max_abs_z:.2f}, "
                f"chi2/dof = {self.chi2:.1f}/{self.dof}, p = {self.p_value:.4g}")


_TRIU = np.triu_indices(6)


def compare_to_prediction(moments: EnsembleMoments, d: Diffusion6,
                          f: ForceTorque6,
                          mean0: Optional[np.ndarray] = None,
                          cov0: Optional[np.ndarray] = None,
                          z_limit: float = 4.0,
                          p_floor: float = 1e-3) -> ComparisonReport:
    """z-scores of measured minus predicted moments at the final time.

    Passes when every |z| stays below z_limit and the global chi-square
    p-value exceeds p_floor.
    """
    t = moments.times[-1]
    mean0 = np.zeros(6) if mean0 is None else np.asarray(mean0, dtype=float)
    cov0 = np.zeros((6, 6)) if cov0 is None else np.asarray(cov0, dtype=float)
    mean_pred = mean0 + f.vector * t
    cov_pred = cov0 + 2.0 * d.matrix * t

    z_mean = _z_scores(moments.mean[-1] - mean_pred, moments.stderr_mean[-1])
    z_cov = _z_scores((moments.cov[-1] - cov_pred)[_TRIU],
                      moments.stderr_cov[-1][_TRIU])

    z_all = np.concatenate([z_mean, z_cov])
    chi2 = float(np.sum(z_all**2))
    dof = len(z_all)
    p_value = float(stats.chi2.sf(chi2, dof))
    max_abs_z = float(np.max(np.abs(z_all)))
    passed = bool(max_abs_z < z_limit and p_value > p_floor)
    return ComparisonReport(z_mean, z_cov, chi2, dof, p_value, passed, max_abs_z)


def _z_scores(diff: np.ndarray, stderr: np.ndarray) -> np.ndarray:
    """diff/stderr; a zero stderr demands an exactly zero difference."""
    degenerate = stderr == 0.0
    safe = np.where(degenerate, 1.0, stderr)
    return np.where(degenerate, np.where(diff == 0.0, 0.0, np.inf), diff / safe)


def simulate_free_rotation(body: BodySpec, j_initial: np.ndarray,
                           duration: float, n_steps: int = 1000) -> np.ndarray:
    """Exploratory rigid-body precession: orientation after free evolution.

    RK4 on R' = R [I0^-1 R^T J]_x with lab-frame J conserved; excluded
    from any acceptance path (kick analysis holds the orientation fixed).
    """
    j_lab = np.asarray(j_initial, dtype=float)
    return _propagate_orientation(body, np.eye(3), j_lab, duration,
                                  n_steps=n_steps)
