"""Quantitative experiments built on the pathwise solver.

Each experiment returns a result object with a ``checks`` list of
:class:`Check` rows (machine-readable pass/fail) and, where useful, a
``table()`` for CSV output. Independent pieces of work (pull depths, path
chunks) go through a ``mapper`` argument with the signature of the builtin
``map`` so a caller can hand in ``executor.map``; results are always
reduced in job order.

All runs use the periodic box. Pullback runs integrate on the base noise
path over ``[-t, 0]`` while evaluating the forcing at ``tau + r``, which is
the transformed system with ``omega`` replaced by ``theta_{-r} omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import logsumexp

from .dynamics import (
    EnergyLedger,
    ForcingSchedule,
    IntegrationFailure,
    PhysicalParams,
    integrate,
)
from .fields import ConfigurationError, Cutoff, Grid, VelocityField, inner_product, tail_mass
from .stochastics import NoisePath, generate_path, path_series

Mapper = Callable[[Callable, Iterable], Iterable]

_COMPARATORS = {
    "<=": lambda v, t: v <= t,
    ">=": lambda v, t: v >= t,
    "<": lambda v, t: v < t,
    ">": lambda v, t: v > t,
    "==": lambda v, t: v == t,
}


@dataclass(frozen=True)
class Check:
    """One pass/fail row: ``value comparator threshold``."""

    name: str
    value: float
    threshold: float
    comparator: str
    passed: bool

    @classmethod
    def compare(cls, name: str, value: float, threshold: float, comparator: str) -> "Check":
        if comparator not in _COMPARATORS:
            raise ValueError(f"unknown comparator {comparator!r}")
        value, threshold = float(value), float(threshold)
        return cls(name, value, threshold, comparator, bool(_COMPARATORS[comparator](value, threshold)))

    def recheck(self) -> bool:
        """Re-evaluate the comparison from the stored numbers."""
        return bool(_COMPARATORS[self.comparator](self.value, self.threshold))


def all_passed(checks: Sequence[Check]) -> bool:
    return all(c.passed for c in checks)


# ---------------------------------------------------------------------------
# absorbing radius


class AbsorbingRadius(NamedTuple):
    value: float
    forcing_part_z: float   # (2/min) integral, the Z-space bound at anchor 0
    horizon: float
    tail_estimate: float
    converged: bool


def absorbing_radius(r: float, path, params: PhysicalParams, forcing: ForcingSchedule,
                     grid: Grid, horizon: float | None = None) -> AbsorbingRadius:
    """Radius ``K(r, omega)`` of the pullback absorbing ball in velocity norm.

    ``K = 4 exp(2 sigma y(0)) / m * int_{-T}^0 exp(sigma^2 z / 2
    + 2 sigma int_z^0 y) Upsilon(z)^2 ||f(z + r)||_dual^2 dz`` with
    ``m = min{2 nu eps0, sigma^2}``, by trapezoid quadrature on the path
    grid. ``horizon`` defaults to the full past covered by ``path``.

    The quadrature is reported as not converged when the integrand at
    ``-T`` is not negligible (above ``1e-8`` of its maximum); the
    ``tail_estimate`` then extrapolates with the decay rate
    ``sigma^2 / 2 - delta``.
    """
    horizon = -path.t_start if horizon is None else horizon
    if horizon <= 0:
        raise ConfigurationError("absorbing_radius needs a path reaching into the past")
    series = path_series(path, -horizon, 0.0)
    zeta, y = series.times, series.y
    sigma = params.sigma
    inner = cumulative_trapezoid(y[::-1], dx=path.dt, initial=0.0)[::-1]  # int_zeta^0 y
    fnorm = forcing.dual_norm_sq_series(grid, zeta + r)
    with np.errstate(over="ignore"):
        integrand = np.exp(0.5 * sigma**2 * zeta + 2 * sigma * inner - 2 * sigma * y) * fnorm
    integral = float(trapezoid(integrand, dx=path.dt))
    forcing_part = 2.0 / params.absorption_rate * integral
    value = 2.0 * math.exp(2 * sigma * y[-1]) * forcing_part
    peak = float(integrand.max()) if len(integrand) else 0.0
    converged = bool(np.isfinite(integral)) and integrand[0] <= 1e-8 * peak if peak > 0 else True
    rate = 0.5 * sigma**2 - forcing.delta
    tail = (4 * math.exp(2 * sigma * y[-1]) / params.absorption_rate * integrand[0] / rate
            if rate > 0 else math.inf)
    return AbsorbingRadius(value, forcing_part, horizon, float(tail), bool(converged))


# ---------------------------------------------------------------------------
# pullback runs


@dataclass
class PullbackRun:
    """Ensemble integrated from ``r - t`` to ``r`` for several depths ``t``.

    ``ensemble`` holds velocity (``Y``) initial data of shape
    ``(B, 2, n, n)``; ``arrivals[t]`` holds the transformed states ``Z`` at
    the anchor (noise time 0). ``declared_radius`` bounds the ensemble in
    ``L^2``, standing in for membership in a tempered family.
    """

    anchor_time: float
    pull_depths: list
    ensemble: np.ndarray
    grid: Grid
    path: NoisePath
    declared_radius: float
    arrivals: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pull_depths = sorted(float(t) for t in self.pull_depths)
        if not self.pull_depths or self.pull_depths[0] <= 0:
            raise ConfigurationError("pull depths must be positive")
        self.ensemble = np.asarray(self.ensemble, dtype=complex)
        if self.ensemble.ndim != 4 or self.ensemble.shape[1:] != (2, self.grid.n_modes, self.grid.n_modes):
            raise ConfigurationError("ensemble must have shape (B, 2, n, n)")
        norms = np.sqrt(inner_product(self.grid, self.ensemble, self.ensemble))
        if np.any(norms > self.declared_radius * (1 + 1e-12)):
            raise ConfigurationError("ensemble member exceeds the declared radius")
        self.path.index(-self.pull_depths[-1])
        self.path.index(0.0)

    @property
    def size(self) -> int:
        return self.ensemble.shape[0]

    def y_arrivals(self, depth: float, sigma: float) -> np.ndarray:
        """Velocity states ``Y = Z / Upsilon(0)`` at the anchor."""
        return self.arrivals[depth] / math.exp(-sigma * self.path.ou_at(0.0))


def _pullback_job(depth, *, run: PullbackRun, params, forcing):
    ups0 = math.exp(-params.sigma * run.path.ou_at(-depth))
    try:
        res = integrate((run.grid, ups0 * run.ensemble), run.path, params, forcing, -depth, 0.0,
                        forcing_offset=run.anchor_time, keep_ledger=False)
    except IntegrationFailure as exc:
        return depth, None, str(exc)
    return depth, res.z, None


def run_pullback(run: PullbackRun, params: PhysicalParams, forcing: ForcingSchedule,
                 mapper: Mapper = map) -> PullbackRun:
    """Fill ``run.arrivals``; one job per pull depth."""
    job = partial(_pullback_job, run=run, params=params, forcing=forcing)
    for depth, z, err in mapper(job, run.pull_depths):
        if err is None:
            run.arrivals[depth] = z
        else:
            run.failures[depth] = err
    return run


@dataclass
class AbsorptionReport:
    depths: np.ndarray
    arrival_max: np.ndarray        # max_b ||Y_b(r)||^2 per depth
    initial_term_max: np.ndarray   # max_b exp(-sigma^2 t/2 + 2 sigma int y) ||Z_b(r - t)||^2
    envelope_ratio: np.ndarray     # max_b ||Z_b(r)||^2 / (initial term + forcing part)
    radius: AbsorbingRadius
    entry_time: float
    violations: list
    failures: dict
    checks: list

    @property
    def passed(self) -> bool:
        return all_passed(self.checks)

    def table(self):
        cols = ["depth", "arrival_max", "radius", "initial_term_max", "envelope_ratio", "past_entry"]
        rows = [[d, a, self.radius.value, i, e, int(d >= self.entry_time)]
                for d, a, i, e in zip(self.depths, self.arrival_max, self.initial_term_max,
                                      self.envelope_ratio)]
        return cols, rows


def pullback_absorption_test(run: PullbackRun, params: PhysicalParams,
                             forcing: ForcingSchedule) -> AbsorptionReport:
    """Check absorption of the pulled-back ensemble into the radius ``K``.

    For each depth the variation-of-constants envelope
    ``||Z(r)||^2 <= exp(-sigma^2 t/2 + 2 sigma int y) ||Z(r-t)||^2 + F``
    (``F`` the forcing part of ``K`` in ``Z`` units) is checked for every
    member. The entry time is the smallest listed depth from which on the
    initial-data term stays below ``F`` for every member; past it the
    velocity arrivals must lie in the ball of radius ``K``.
    """
    grid, sigma = run.grid, params.sigma
    radius = absorbing_radius(run.anchor_time, run.path, params, forcing, grid)
    series = path_series(run.path, -run.pull_depths[-1], 0.0)
    inner = cumulative_trapezoid(series.y[::-1], dx=run.path.dt, initial=0.0)[::-1]
    ups_anchor = math.exp(-sigma * series.y[-1])
    init_norms = inner_product(grid, run.ensemble, run.ensemble)
    depths, arrivals, inits, env = [], [], [], []
    for t in run.pull_depths:
        if t not in run.arrivals:
            continue
        k = run.path.index(-t) - run.path.index(series.times[0])
        ups_start = math.exp(-sigma * series.y[k])
        weight = math.exp(-0.5 * sigma**2 * t + 2 * sigma * inner[k])
        init_term = weight * ups_start**2 * init_norms
        z_sq = inner_product(grid, run.arrivals[t], run.arrivals[t])
        bound = init_term + radius.forcing_part_z
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(bound > 0, z_sq / bound, np.where(z_sq > 0, np.inf, 0.0))
        depths.append(t)
        arrivals.append(float((z_sq / ups_anchor**2).max()))
        inits.append(float(init_term.max()))
        env.append(float(ratio.max()))
    depths = np.array(depths)
    arrivals = np.array(arrivals)
    inits = np.array(inits)
    env = np.array(env)

    entry = math.inf
    for i in range(len(depths)):
        if np.all(inits[i:] <= radius.forcing_part_z):
            entry = float(depths[i])
            break
    violations = [float(d) for d, a in zip(depths, arrivals) if d >= entry and a > radius.value]
    checks = [
        Check.compare("pullback_envelope_ratio_max", env.max() if len(env) else math.inf, 1.0, "<="),
        Check.compare("absorption_violations", len(violations), 0, "=="),
        Check.compare("pullback_failed_depths", len(run.failures), 0, "=="),
    ]
    if forcing.kind != "zero":
        checks.append(Check.compare("depths_past_entry", int((depths >= entry).sum()), 1, ">="))
    return AbsorptionReport(depths, arrivals, inits, env, radius, entry, violations,
                            dict(run.failures), checks)


def _max_pairwise(grid: Grid, states: np.ndarray) -> float:
    b = states.shape[0]
    best = 0.0
    for i in range(b - 1):
        d = states[i + 1:] - states[i]
        best = max(best, float(np.sqrt(inner_product(grid, d, d)).max()))
    return best


def attractor_diameter(run: PullbackRun, params: PhysicalParams,
                       forcing: ForcingSchedule | None = None) -> list:
    """``[(depth, max pairwise ||Y_i(r) - Y_j(r)||_2)]`` over the ensemble."""
    del forcing  # the arrivals already encode it
    if run.size < 2:
        raise ConfigurationError("attractor_diameter needs at least two ensemble members")
    return [(t, _max_pairwise(run.grid, run.y_arrivals(t, params.sigma)))
            for t in run.pull_depths if t in run.arrivals]


@dataclass
class DiameterReport:
    diameters: list
    initial_diameter: float
    bound: float
    envelope_entry: float
    checks: list

    @property
    def passed(self) -> bool:
        return all_passed(self.checks)

    def table(self):
        return ["depth", "diameter", "relative"], [
            [d, v, v / self.initial_diameter if self.initial_diameter > 0 else 0.0]
            for d, v in self.diameters
        ]


def diameter_checks(run: PullbackRun, params: PhysicalParams, forcing: ForcingSchedule,
                    final_ratio: float = 1e-6) -> DiameterReport:
    """Diameter diagnostics.

    Without forcing: diameters nonincreasing in depth, final relative
    diameter below ``final_ratio``, and the envelope
    ``exp(-sigma^2 t / 8) * initial diameter`` holding from a detected entry
    depth on. With forcing: every diameter at most ``2 sqrt(K)``.
    """
    diam = attractor_diameter(run, params, forcing)
    d0 = _max_pairwise(run.grid, run.ensemble)
    values = np.array([v for _, v in diam])
    depths = np.array([t for t, _ in diam])
    checks = []
    bound = math.nan
    entry = math.inf
    if forcing.kind == "zero":
        increases = int(np.sum(np.diff(values) > 0))
        rel = values[-1] / d0 if d0 > 0 else 0.0
        env = np.exp(-params.sigma**2 * depths / 8) * d0
        for i in range(len(depths)):
            if np.all(values[i:] <= env[i:]):
                entry = float(depths[i])
                break
        checks += [
            Check.compare("diameter_increases", increases, 0, "=="),
            Check.compare("final_relative_diameter", rel, final_ratio, "<"),
            Check.compare("diameter_envelope_entry", entry, depths[-1], "<="),
        ]
    else:
        bound = 2 * math.sqrt(absorbing_radius(run.anchor_time, run.path, params, forcing, run.grid).value)
        checks.append(Check.compare("diameter_over_bound_max", (values / bound).max(), 1.0, "<="))
    return DiameterReport(diam, d0, bound, entry, checks)


# ---------------------------------------------------------------------------
# tail estimates


@dataclass
class TailReport:
    radii: np.ndarray
    masses: np.ndarray          # (states, radii)
    totals: np.ndarray          # ||z||^2 per state
    epsilon: float
    checks: list

    @property
    def passed(self) -> bool:
        return all_passed(self.checks)

    def table(self):
        cols = ["state", "radius", "tail_mass", "relative"]
        rows = [[i, r, m, m / tot if tot > 0 else 0.0]
                for i, (ms, tot) in enumerate(zip(self.masses, self.totals))
                for r, m in zip(self.radii, ms)]
        return cols, rows


def tail_estimate_test(run: PullbackRun, params: PhysicalParams, forcing: ForcingSchedule,
                       radii: Sequence[float], epsilon: float = 0.05) -> TailReport:
    """Tail masses of every arrival state over a list of cutoff radii.

    Checks that the mass is nonincreasing in the radius for each state and
    that at the largest radius it is at most ``epsilon ||z||^2``.
    """
    del params, forcing  # the arrivals already encode them
    radii = np.sort(np.asarray(radii, dtype=float))
    cuts = [Cutoff(r) for r in radii]
    for c in cuts:
        c.weights(run.grid, 8)  # validates the radius against the box
    states = [z for t in run.pull_depths if t in run.arrivals for z in run.arrivals[t]]
    masses = np.array([[tail_mass(VelocityField(run.grid, z, check=False), c) for c in cuts]
                       for z in states])
    totals = np.array([float(inner_product(run.grid, z, z)) for z in states])
    increases = int(np.sum(np.diff(masses, axis=1) > 1e-14 * totals[:, None]))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(totals > 0, masses[:, -1] / totals, 0.0)
    checks = [
        Check.compare("tail_mass_increases", increases, 0, "=="),
        Check.compare("tail_relative_max", rel.max(), epsilon, "<="),
        Check.compare("tail_states", len(states), 1, ">="),
    ]
    return TailReport(radii, masses, totals, epsilon, checks)


# ---------------------------------------------------------------------------
# exponential stability


@dataclass
class StabilityReport:
    slope: float
    fitted_rate: float
    entry_time: float
    converged_early: bool
    times: np.ndarray
    log_dist: np.ndarray

    def table(self):
        return ["t", "log_dist_sq"], [[t, v] for t, v in zip(self.times, self.log_dist)]


def _fit_tail(times, log_d):
    half = times >= times[-1] / 2
    slope = np.polyfit(times[half], log_d[half], 1)[0]
    return float(slope)


def _stability_from_samples(times, dist_sq, sigma) -> StabilityReport:
    d0 = dist_sq[0]
    if d0 == 0:
        return StabilityReport(-math.inf, math.inf, 0.0, True, times, np.full_like(times, -np.inf))
    with np.errstate(divide="ignore"):
        log_d = np.log(dist_sq)
    if np.any(dist_sq == 0):
        return StabilityReport(-math.inf, math.inf, float(times[np.argmax(dist_sq == 0)]), True,
                               times, log_d)
    slope = _fit_tail(times, log_d)
    env = np.log(d0) - 0.25 * sigma**2 * times
    ok = log_d <= env
    entry = math.inf
    bad = np.nonzero(~ok)[0]
    if len(bad) == 0:
        entry = float(times[0])
    elif bad[-1] + 1 < len(times):
        entry = float(times[bad[-1] + 1])
    return StabilityReport(slope, -slope, entry, False, times, log_d)


def exponential_stability_batch(params: PhysicalParams, paths: Sequence, pairs: Sequence,
                                horizon: float, grid: Grid, record_every: int = 1,
                                mapper: Mapper = map, chunk: int = 16) -> list:
    """Stability reports for several ``(path, (Y1_0, Y2_0))`` setups.

    Both members of a pair share the path; pairs are stepped together in
    chunks (each member on its own path).
    """
    if len(paths) != len(pairs):
        raise ConfigurationError("one path per initial-data pair")
    jobs = [list(range(i, min(i + chunk, len(paths)))) for i in range(0, len(paths), chunk)]
    job = partial(_stability_job, params=params, paths=paths, pairs=pairs, horizon=horizon,
                  grid=grid, record_every=record_every)
    out = []
    for reports in mapper(job, jobs):
        out.extend(reports)
    return out


def _stability_job(indices, *, params, paths, pairs, horizon, grid, record_every):
    sigma = params.sigma
    z0, member_paths = [], []
    for i in indices:
        ups = math.exp(-sigma * paths[i].ou_at(0.0))
        for y0 in pairs[i]:
            z0.append(ups * _coeffs(y0))
            member_paths.append(paths[i])
    res = integrate((grid, np.stack(z0)), member_paths, params, ForcingSchedule.zero(), 0.0, horizon,
                    record_every=record_every, keep_ledger=False)
    reports = []
    for j, i in enumerate(indices):
        ups = np.exp(-sigma * path_series(paths[i], 0.0, horizon).y[::record_every])
        d = res.samples[:, 2 * j] - res.samples[:, 2 * j + 1]
        reports.append(_stability_from_samples(res.sample_times, inner_product(grid, d, d) / ups**2,
                                               sigma))
    return reports


def _coeffs(u) -> np.ndarray:
    return u.coeffs if isinstance(u, VelocityField) else np.asarray(u, dtype=complex)


def exponential_stability_test(params: PhysicalParams, path, y0_pair, horizon: float,
                               grid: Grid | None = None, record_every: int = 1) -> StabilityReport:
    """Fit the decay of ``log ||Y1(t) - Y2(t)||^2`` for zero forcing.

    Both trajectories run on ``path``; the slope is a least-squares fit
    over the last half of ``[0, horizon]``. ``entry_time`` is the first
    sample time after which ``||d(t)||^2 <= exp(-sigma^2 t / 4) ||d(0)||^2``
    holds for all later samples (``inf`` if never).
    """
    grid = grid or y0_pair[0].grid
    return exponential_stability_batch(params, [path], [y0_pair], horizon, grid, record_every)[0]


def linear_decay_oracle(params: PhysicalParams, path, d0: VelocityField, horizon: float,
                        record_every: int = 1) -> StabilityReport:
    """Exact ``log ||Y1 - Y2||^2`` for the linear model on the path's ``W``.

    ``||d(t)||^2 = sum_k |d0_k|^2 exp(-2 nu |k|^2 t) * exp(2 sigma W(t) - sigma^2 t)``.
    """
    grid = d0.grid
    s = path_series(path, 0.0, horizon)
    times = s.times[::record_every]
    w = s.wiener[::record_every]
    power = (np.abs(d0.coeffs) ** 2).sum(axis=0).ravel() / grid.box_length**2
    k2 = grid.k_squared.ravel()
    log_d = (logsumexp(np.log(power[power > 0])[None, :] - 2 * params.nu * times[:, None] * k2[power > 0][None, :],
                       axis=1)
             + 2 * params.sigma * (w - w[0]) - params.sigma**2 * (times - times[0]))
    slope = _fit_tail(times, log_d)
    return StabilityReport(slope, -slope, math.nan, False, times, log_d)


# ---------------------------------------------------------------------------
# invariant measure


@dataclass
class InvariantMeasureSummary:
    checkpoints: np.ndarray              # horizons
    y_norms: np.ndarray                  # (paths, checkpoints) ||Y(h)||_2
    initial_norm: float
    concentration: np.ndarray            # mean ||Y(h)|| / ||Y0|| per checkpoint
    late_mean: float                     # mean of ||Y|| over late samples and paths
    late_var: float
    late_samples: np.ndarray             # (paths, samples)
    excluded: int
    seeds: list
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all_passed(self.checks)

    def table(self):
        cols = ["horizon", "concentration", "mean_norm", "std_norm"]
        rows = [[h, c, float(np.mean(v)), float(np.std(v))]
                for h, c, v in zip(self.checkpoints, self.concentration, self.y_norms.T)]
        return cols, rows

    def batch_consistency(self) -> Check:
        """Two disjoint halves of the paths: late-time means within 3 combined SE."""
        a, b = np.array_split(self.late_samples.mean(axis=1), 2)
        se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
        return Check.compare("batch_mean_gap_in_se", abs(a.mean() - b.mean()) / se if se > 0 else 0.0,
                             3.0, "<=")


def _invariant_job(indices, *, params, forcing, grid, y0, seeds, horizon, dt, record_every):
    paths = [generate_path(seeds[i], 0.0, horizon, dt) for i in indices]
    z0 = np.stack([math.exp(-params.sigma * p.ou_at(0.0)) * y0 for p in paths])
    try:
        res = integrate((grid, z0), paths, params, forcing, 0.0, horizon, record_every=record_every,
                        keep_ledger=False)
    except IntegrationFailure:
        if len(indices) == 1:
            return [(indices[0], None, None)]
        out = []
        for i in indices:
            out.extend(_invariant_job([i], params=params, forcing=forcing, grid=grid, y0=y0, seeds=seeds,
                                      horizon=horizon, dt=dt, record_every=record_every))
        return out
    out = []
    for j, i in enumerate(indices):
        ups = np.exp(-params.sigma * path_series(paths[j], 0.0, horizon).y[::record_every])
        norms = np.sqrt(inner_product(grid, res.samples[:, j], res.samples[:, j])) / ups
        out.append((i, res.sample_times, norms))
    return out


def invariant_measure_sampler(params: PhysicalParams, forcing: ForcingSchedule, n_paths: int,
                              horizon: float, *, grid: Grid, y0: VelocityField, dt: float,
                              seed: int = 0, checkpoints: Sequence[float] | None = None,
                              record_every: int = 10, late_fraction: float = 0.25,
                              mapper: Mapper = map, chunk: int = 10) -> InvariantMeasureSummary:
    """Empirical law of ``Y(horizon)`` over independent noise paths.

    Every path starts from ``y0`` at time 0. ``||Y||_2`` is recorded at the
    ``checkpoints`` (default: the horizon and its halvings ``h/4, h/2, h``)
    and on a late window (last ``late_fraction`` of the horizon). With zero
    forcing the concentration statistic ``mean ||Y(h)|| / ||Y0||`` is
    expected to decrease toward 0. Paths that fail to integrate are
    excluded and counted.
    """
    if n_paths < 10:
        raise ConfigurationError("invariant_measure_sampler needs n_paths >= 10")
    checkpoints = np.array(sorted(checkpoints or (horizon / 4, horizon / 2, horizon)), dtype=float)
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(n_paths, np.uint32)]
    y0c = _coeffs(y0)
    jobs = [list(range(i, min(i + chunk, n_paths))) for i in range(0, n_paths, chunk)]
    job = partial(_invariant_job, params=params, forcing=forcing, grid=grid, y0=y0c, seeds=seeds,
                  horizon=horizon, dt=dt, record_every=record_every)
    results = sorted((item for part in mapper(job, jobs) for item in part), key=lambda x: x[0])
    good = [(t, n) for _, t, n in results if n is not None]
    excluded = n_paths - len(good)
    if not good:
        raise IntegrationFailure("every path failed to integrate")
    times = good[0][0]
    norms = np.stack([n for _, n in good])
    idx = [int(np.argmin(np.abs(times - h))) for h in checkpoints]
    if any(abs(times[i] - h) > 1e-9 * max(1.0, h) for i, h in zip(idx, checkpoints)):
        raise ConfigurationError("checkpoints must be sample times (multiples of record_every * dt)")
    at = norms[:, idx]
    y0_norm = math.sqrt(float(inner_product(grid, y0c, y0c)))
    conc = at.mean(axis=0) / y0_norm if y0_norm > 0 else np.zeros(len(idx))
    late = norms[:, times >= horizon * (1 - late_fraction)]
    summary = InvariantMeasureSummary(checkpoints, at, y0_norm, conc, float(late.mean()),
                                      float(late.var()), late, excluded, seeds)
    return summary


def concentration_checks(summary: InvariantMeasureSummary, threshold: float = 1e-3) -> list:
    """Zero-forcing checks: final concentration and monotone decrease."""
    c = summary.concentration
    return [
        Check.compare("concentration_final", c[-1], threshold, "<="),
        Check.compare("concentration_increases", int(np.sum(np.diff(c) >= 0)), 0, "=="),
        Check.compare("excluded_paths", summary.excluded, 0, "=="),
    ]


# ---------------------------------------------------------------------------
# forcing hypothesis


@dataclass
class HypothesisReport:
    s_grid: np.ndarray
    log_values: dict              # c -> log v_c(s) over s_grid
    window: float
    window_change: float          # relative change of the s=0 integral when the window doubles
    delta_ok: bool
    checks: list

    @property
    def passed(self) -> bool:
        return all_passed(self.checks)

    @property
    def violating(self) -> bool:
        return not self.passed

    def table(self):
        cs = sorted(self.log_values)
        return ["s"] + [f"log_v_c{c:g}" for c in cs], [
            [s] + [self.log_values[c][i] for c in cs] for i, s in enumerate(self.s_grid)
        ]


def _log_window_integral(schedule: ForcingSchedule, grid: Grid, s: float, window: float,
                         delta: float, step: float) -> float:
    """``log int_{-W}^0 exp(delta z) ||f(z + s)||^2 dz`` by trapezoid in log space."""
    zeta = np.linspace(-window, 0.0, int(round(window / step)) + 1)
    logf = schedule.log_dual_norm_sq_series(grid, zeta + s)
    terms = delta * zeta + logf
    w = np.full(len(zeta), zeta[1] - zeta[0])
    w[[0, -1]] *= 0.5
    if np.all(np.isneginf(terms)):
        return -math.inf
    return float(logsumexp(terms, b=w))


def forcing_hypothesis_check(schedule: ForcingSchedule, sigma: float, grid: Grid,
                             window: float | None = None, depth: float = 200.0,
                             cs: Sequence[float] = (0.1, 1.0, 10.0), n_s: int = 81,
                             step: float = 0.05, tolerance: float = 1e-3,
                             window_tolerance: float = 1e-2) -> HypothesisReport:
    """Growth diagnostics for a forcing schedule.

    For each ``c`` evaluates ``v_c(s) = exp(c s) int_{-W}^0 exp(delta z)
    ||f(z + s)||^2 dz`` on ``s`` from 0 down to ``-depth``. The schedule
    passes when, for every ``c``, the value at the deepest ``s`` is below
    ``tolerance`` times the maximum, when doubling the window changes the
    ``s = 0`` integral by less than ``window_tolerance`` (relative), and
    when ``delta < sigma^2 / 2``. Work is done in log space so that fast
    growing schedules are reported instead of overflowing.
    """
    delta = schedule.delta
    if window is None:
        window = 10.0 / delta if delta > 0 else 50.0
    window = max(window, 10.0 / delta) if delta > 0 else window
    s_grid = np.linspace(0.0, -depth, n_s)
    base = np.array([_log_window_integral(schedule, grid, s, window, delta, step) for s in s_grid])
    log_values = {c: c * s_grid + base for c in cs}
    checks = [Check.compare("delta_margin", 0.5 * sigma**2 - delta, 0.0, ">")]
    if schedule.kind == "zero":
        change = 0.0
    else:
        i1 = base[0]
        i2 = _log_window_integral(schedule, grid, 0.0, 2 * window, delta, step)
        change = float(-np.expm1(i1 - i2)) if np.isfinite(i2) else math.inf
        for c, lv in log_values.items():
            finite = np.isfinite(lv)
            if not finite.all():
                gap = math.inf
            else:
                gap = float(lv[-1] - lv.max())
            checks.append(Check.compare(f"log_decay_c{c:g}", gap, math.log(tolerance), "<="))
    checks.append(Check.compare("window_doubling_change", change, window_tolerance, "<="))
    return HypothesisReport(s_grid, log_values, window, change, delta < 0.5 * sigma**2, checks)


# ---------------------------------------------------------------------------
# energy audit


@dataclass
class AuditReport:
    coarse: EnergyLedger
    fine: EnergyLedger
    constant: float
    max_residual_coarse: float
    max_residual_fine: float
    halving_factor: float
    checks: list

    @property
    def passed(self) -> bool:
        return all_passed(self.checks)

    def table(self):
        return ["dt", "max_abs_residual", "max_audit_ratio", "max_ue4_ratio", "steps"], [
            [float(led.column("dt").max()), float(np.abs(led.column("audit_residual")).max()),
             float(led.audit_ratio().max()), float(_ue4_ratio(led).max()), len(led)]
            for led in (self.coarse, self.fine)
        ]


def _ue4_ratio(led: EnergyLedger) -> np.ndarray:
    scale = led.column("dt") * led.column("audit_scale")
    margin = led.column("ue4_margin")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = margin / scale
    return np.where(scale > 0, r, np.where(margin > 0, np.inf, 0.0))


def ledger_violations(led: EnergyLedger, constant: float) -> int:
    """Rows whose audit residual or energy margin exceeds ``constant * dt * Q``."""
    return int(np.sum(led.audit_ratio() > constant) + np.sum(_ue4_ratio(led) > constant))


def energy_audit_test(z0: VelocityField, fine_path: NoisePath, params: PhysicalParams,
                      forcing: ForcingSchedule, t0: float, t1: float, *,
                      calibration_window: float = 1.0, safety: float = 2.0,
                      halving_range=(1.5, 3.0), mapper: Mapper = map) -> AuditReport:
    """Run at ``dt`` (coarsened path) and ``dt/2`` (fine path) and audit both.

    The audit constant ``C`` is ``safety`` times the largest ratio
    ``|residual| / (dt Q)`` seen in the calibration window
    ``[t0, t0 + calibration_window]`` of either run. Every row of both
    runs must then satisfy ``|residual| <= C dt Q`` and
    ``ue4_margin <= C dt Q``, and the ratio of the maximal residuals of
    the two runs must lie in ``halving_range``.
    """
    coarse_path = fine_path.coarsen(2)
    runs = list(mapper(partial(_audit_job, z0=z0, params=params, forcing=forcing, t0=t0, t1=t1),
                       [coarse_path, fine_path]))
    coarse, fine = runs
    calib = []
    for led in (coarse, fine):
        mask = led.column("t") <= t0 + calibration_window
        calib.append(float(led.audit_ratio()[mask].max()))
    constant = safety * max(calib)
    mc = float(np.abs(coarse.column("audit_residual")).max())
    mf = float(np.abs(fine.column("audit_residual")).max())
    factor = mc / mf if mf > 0 else math.inf
    checks = [
        Check.compare("audit_violations_coarse", ledger_violations(coarse, constant), 0, "=="),
        Check.compare("audit_violations_fine", ledger_violations(fine, constant), 0, "=="),
        Check.compare("halving_factor_low", factor, halving_range[0], ">="),
        Check.compare("halving_factor_high", factor, halving_range[1], "<="),
    ]
    return AuditReport(coarse, fine, constant, mc, mf, factor, checks)


def _audit_job(path, *, z0, params, forcing, t0, t1):
    res = integrate(z0, path, params, forcing, t0, t1)
    led = res.ledgers[0]
    led.validate()
    return led


__all__ = [
    "AbsorbingRadius", "AbsorptionReport", "AuditReport", "Check", "DiameterReport",
    "HypothesisReport", "InvariantMeasureSummary", "PullbackRun", "StabilityReport", "TailReport",
    "absorbing_radius", "all_passed", "attractor_diameter", "concentration_checks",
    "diameter_checks", "energy_audit_test", "exponential_stability_batch",
    "exponential_stability_test", "forcing_hypothesis_check", "invariant_measure_sampler",
    "ledger_violations", "linear_decay_oracle", "pullback_absorption_test", "run_pullback",
    "tail_estimate_test",
]
