"""Pathwise integration of the transformed (random-coefficient) system.

With ``Z = Upsilon Y`` and ``Upsilon(t) = exp(-sigma y(t))`` the Ito
equation for the velocity ``Y`` becomes, for each noise path,

    dZ/dt = -nu A Z - (sigma^2/2 - sigma y) Z - Upsilon^-1 B(Z, Z)
            - alpha Upsilon^-1 J(Z) - beta Upsilon^-2 K(Z) + Upsilon P f

The time stepper is first-order IMEX: the diagonal linear part (viscosity
and the scalar damping term) is implicit, the nonlinear operators and the
forcing are explicit, and the result is re-projected. Noise coefficients
are frozen at the left end of each path interval; intervals are sub-cycled
in powers of two when the stability bound requires it.

Every step appends a row to an :class:`EnergyLedger` with the quantities of
the energy inequality and two audit numbers:

* ``audit_residual``: ``(|z'|^2 - |z|^2 - 2 dt <T(z), z>) / dt``, the
  defect of the energy identity per unit time (first order in ``dt``);
* ``ue4_margin``: left side minus right side of the energy inequality,
  with the time derivative replaced by the step difference quotient.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .fields import (
    ConfigurationError,
    Grid,
    VelocityField,
    dual_norm_sq,
    estimate_korn_constant,
    estimate_sobolev_constant,
    forward_transform,
    gradient_coeffs,
    gradient_part_coeffs,
    inner_product,
    leray_coeffs,
    parse_snapshot,
    snapshot_bytes,
    sym_gradient_coeffs,
)
from .operators import divergence_of_symmetric, frobenius_sq, matrix_square


class IntegrationFailure(RuntimeError):
    """Non-finite state encountered; carries the last good state."""

    def __init__(self, message: str, last_good=None, t: float | None = None):
        super().__init__(message)
        self.last_good = last_good
        self.t = t


class StepRefused(ValueError):
    """Requested step exceeds the stability bound."""


@dataclass(frozen=True)
class PhysicalParams:
    """Material and noise parameters.

    ``linear=True`` builds the linear test model: ``alpha`` and ``beta``
    must be zero and convection is switched off.
    """

    nu: float
    alpha: float
    beta: float
    sigma: float
    linear: bool = False

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError("nu > 0 violated")
        if not self.sigma > 0:
            raise ConfigurationError("sigma > 0 violated")
        if self.linear:
            if self.alpha != 0 or self.beta != 0:
                raise ConfigurationError("linear model requires alpha = beta = 0")
            return
        if not self.beta > 0:
            raise ConfigurationError("beta > 0 violated")
        if not abs(self.alpha) < math.sqrt(2 * self.nu * self.beta):
            raise ConfigurationError("|alpha| < sqrt(2*nu*beta) violated")
        if not self.epsilon0 > 0:
            raise ConfigurationError("|alpha| < sqrt(2*nu*beta) violated")

    @property
    def epsilon0(self) -> float:
        if self.linear:
            return 1.0
        return 1.0 - math.sqrt(self.alpha**2 / (2 * self.beta * self.nu))

    @property
    def absorption_rate(self) -> float:
        """``min{2 nu eps0, sigma^2}``."""
        return min(2 * self.nu * self.epsilon0, self.sigma**2)

    def as_dict(self) -> dict:
        return {"nu": self.nu, "alpha": self.alpha, "beta": self.beta, "sigma": self.sigma,
                "linear": self.linear}


@dataclass(frozen=True, eq=False)
class ForcingSchedule:
    """Deterministic body force ``f(x, t) = amplitude(t) * f1(x)``.

    Parameters
    ----------
    kind : {"zero", "constant_field", "time_varying"}
    coeffs : ndarray or None
        Fourier coefficients of ``f1`` with shape ``(2, n, n)``. Not
        required to be divergence-free.
    amplitude : callable or None
        Scalar time profile for ``time_varying`` schedules.
    delta : float
        Exponent used by the forcing-growth diagnostics; must satisfy
        ``0 <= delta < sigma^2 / 2`` when checked.
    """

    kind: str = "zero"
    coeffs: np.ndarray | None = None
    amplitude: Callable[[float], float] | None = None
    delta: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("zero", "constant_field", "time_varying"):
            raise ConfigurationError(f"unknown forcing kind {self.kind!r}")
        if self.kind != "zero":
            if self.coeffs is None:
                raise ConfigurationError("forcing field missing")
            c = np.array(self.coeffs, dtype=complex)
            c.flags.writeable = False
            object.__setattr__(self, "coeffs", c)
        if self.kind == "time_varying" and self.amplitude is None:
            raise ConfigurationError("time_varying forcing needs an amplitude profile")
        if self.delta < 0:
            raise ConfigurationError("delta >= 0 violated")

    @classmethod
    def zero(cls) -> "ForcingSchedule":
        return cls("zero", label="zero")

    @classmethod
    def constant(cls, grid: Grid, values: np.ndarray, delta: float = 0.0, label: str = "constant"):
        """Constant force from physical values of shape ``(2, n, n)``."""
        return cls("constant_field", forward_transform(grid, values), delta=delta, label=label)

    @classmethod
    def time_varying(cls, grid: Grid, values: np.ndarray, amplitude: Callable[[float], float],
                     delta: float = 0.0, label: str = "time_varying"):
        return cls("time_varying", forward_transform(grid, values), amplitude, delta, label)

    def scaled(self, factor: float) -> "ForcingSchedule":
        if self.kind == "zero":
            return self
        return replace(self, coeffs=self.coeffs * factor)

    def check_delta(self, sigma: float) -> None:
        if not self.delta < sigma**2 / 2:
            raise ConfigurationError("delta < sigma^2/2 violated")

    def coeffs_at(self, t: float) -> np.ndarray | None:
        if self.kind == "zero":
            return None
        if self.kind == "constant_field":
            return self.coeffs
        return self.coeffs * float(self.amplitude(t))

    def dual_norm_sq(self, grid: Grid, t: float) -> float:
        c = self.coeffs_at(t)
        return 0.0 if c is None else float(dual_norm_sq(grid, c))

    def dual_norm_sq_series(self, grid: Grid, times: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`dual_norm_sq` over an array of times."""
        times = np.asarray(times, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(times)
        base = float(dual_norm_sq(grid, self.coeffs))
        if self.kind == "constant_field":
            return np.full_like(times, base)
        amp = np.array([float(self.amplitude(t)) for t in times])
        return amp**2 * base

    def log_dual_norm_sq_series(self, grid: Grid, times: np.ndarray) -> np.ndarray:
        """``log`` of :meth:`dual_norm_sq_series` without forming the square.

        Profiles exposing ``log_value(t) = log |amplitude(t)|`` are evaluated
        exactly in log space, so fast growth never overflows.
        """
        times = np.asarray(times, dtype=float)
        if self.kind == "zero":
            return np.full_like(times, -np.inf)
        with np.errstate(divide="ignore"):
            base = math.log(float(dual_norm_sq(grid, self.coeffs))) if np.any(self.coeffs) else -math.inf
            if self.kind == "constant_field":
                return np.full_like(times, base)
            log_amp = getattr(self.amplitude, "log_value", None)
            if log_amp is None:
                la = np.log(np.abs([float(self.amplitude(t)) for t in times]))
            else:
                la = np.array([float(log_amp(t)) for t in times])
        return 2 * la + base

    def l2_norm_sq(self, grid: Grid, t: float) -> float:
        c = self.coeffs_at(t)
        return 0.0 if c is None else float(inner_product(grid, c, c))


@dataclass(frozen=True)
class PowerProfile:
    """Amplitude ``|t|^power``."""

    power: float

    def __call__(self, t: float) -> float:
        return abs(t) ** self.power

    def log_value(self, t: float) -> float:
        return self.power * math.log(abs(t)) if t != 0 else (-math.inf if self.power > 0 else 0.0)


@dataclass(frozen=True)
class ExponentialProfile:
    """Amplitude ``exp(rate |t|)``."""

    rate: float

    def __call__(self, t: float) -> float:
        return math.exp(self.rate * abs(t))

    def log_value(self, t: float) -> float:
        return self.rate * abs(t)


# ---------------------------------------------------------------------------
# kernel


class Evaluation(NamedTuple):
    """Tendency pieces for a batch ``(B, 2, n, n)`` at frozen coefficients."""

    explicit: np.ndarray      # projected explicit part N (nonlinear + forcing)
    damping: np.ndarray       # implicit symbol nu |k|^2 + sigma^2/2 - sigma y, shape (n, n)
    tendency: np.ndarray      # -damping * z + explicit
    unprojected: np.ndarray   # same terms without the Leray projection
    e_l4_4: np.ndarray        # (B,)
    sup_speed: np.ndarray     # (B,) max |z| on the padded grid
    sup_strain_sq: np.ndarray  # (B,) max |E(z)|^2 on the padded grid


class TransformedSystem:
    """Right-hand side of the transformed equation for a fixed setup."""

    def __init__(self, grid: Grid, params: PhysicalParams, forcing: ForcingSchedule,
                 forcing_offset: float = 0.0):
        self.grid = grid
        self.params = params
        self.forcing = forcing
        self.forcing_offset = forcing_offset
        self.convective = not params.linear
        self.cubic = params.beta != 0
        self.quadratic = params.alpha != 0
        self._k2 = grid.k_squared
        if forcing.kind != "zero" and forcing.coeffs.shape != (2, grid.n_modes, grid.n_modes):
            raise ConfigurationError("forcing does not match the grid")

    def damping(self, y) -> np.ndarray:
        """Implicit symbol; shape ``(n, n)`` for scalar ``y``, else ``(B, 1, n, n)``."""
        p = self.params
        return p.nu * self._k2 + (0.5 * p.sigma**2 - p.sigma * _member_axis(y))

    def evaluate(self, zh: np.ndarray, t: float, y, *, want_e4: bool = True) -> Evaluation:
        """Evaluate at time ``t``; ``y`` is a scalar or one value per member."""
        grid, p = self.grid, self.params
        ups = np.exp(-p.sigma * _member_axis(y))
        batch = zh.shape[0]
        raw = np.zeros_like(zh)
        sup_speed = np.zeros(batch)
        sup_e2 = np.zeros(batch)
        e_l4 = np.zeros(batch)

        if self.convective:
            m = grid.quadratic_size
            stack = np.concatenate(
                [zh, gradient_coeffs(grid, zh).reshape(batch, 4, *zh.shape[-2:])], axis=1
            )
            phys = grid.to_physical(stack, m)
            u = phys[:, :2]
            g = phys[:, 2:].reshape(batch, 2, 2, m, m)
            conv = u[:, None, 0] * g[:, :, 0] + u[:, None, 1] * g[:, :, 1]
            sup_speed = np.sqrt((u**2).sum(axis=1)).reshape(batch, -1).max(axis=1)
            if self.quadratic:
                e = np.stack([2 * g[:, 0, 0], 2 * g[:, 1, 1], g[:, 0, 1] + g[:, 1, 0]], axis=1)
                prods = np.concatenate([conv, matrix_square(e)], axis=1)
                hat = grid.from_physical(prods, m)
                raw += -hat[:, :2] / ups
                raw += (p.alpha / ups) * divergence_of_symmetric(grid, hat[:, 2:])
            else:
                raw += -grid.from_physical(conv, m) / ups

        if self.cubic or want_e4:
            m = grid.cubic_size
            e = grid.to_physical(sym_gradient_coeffs(grid, zh), m)
            esq = frobenius_sq(e)
            w = (grid.box_length / m) ** 2
            e_l4 = (esq**2).reshape(batch, -1).sum(axis=1) * w
            sup_e2 = esq.reshape(batch, -1).max(axis=1)
            if self.cubic:
                flux = grid.from_physical(esq[:, None] * e, m)
                raw += (p.beta / ups**2) * divergence_of_symmetric(grid, flux)

        fc = self.forcing.coeffs_at(t + self.forcing_offset)
        if fc is not None:
            raw = raw + ups * fc[None]

        explicit = leray_coeffs(grid, raw)
        lam = self.damping(y)
        tendency = explicit - lam * zh
        unprojected = raw - lam * zh  # nu Laplacian z is divergence-free
        return Evaluation(explicit, lam, tendency, unprojected, e_l4, sup_speed, sup_e2)

    def stability_limit(self, ev: Evaluation, y) -> float:
        """Largest admissible common step for the batch."""
        p, grid = self.params, self.grid
        y = np.broadcast_to(np.asarray(y, dtype=float), ev.sup_speed.shape)
        ups = np.exp(-p.sigma * y)
        kmax = grid.k_max
        limits = [0.5]
        with np.errstate(divide="ignore"):
            if self.convective:
                limits.append(np.min(0.2 * ups / (ev.sup_speed * kmax)))
            if self.cubic:
                limits.append(np.min(0.1 * ups**2 / (p.beta * ev.sup_strain_sq * kmax**2)))
            growth = np.max(p.sigma * y - 0.5 * p.sigma**2)
        if growth > 0:
            limits.append(0.5 / growth)  # keeps 1 + dt * damping > 0 on every mode
        return float(min(limits))


# ---------------------------------------------------------------------------
# ledger

LEDGER_COLUMNS = (
    "t", "dt", "z_l2_sq", "e_l2_sq", "e_l4_4", "y", "upsilon", "forcing_dual_sq",
    "audit_residual", "ue4_margin", "audit_scale",
)


@dataclass
class EnergyLedger:
    """Per-step energy bookkeeping for one trajectory.

    Rows hold the state at the start of each step and the audit numbers of
    that step. ``audit_scale`` is the state-dependent factor ``Q`` in the
    audit bound ``|audit_residual| <= C dt Q``.
    """

    rows: np.ndarray = field(default_factory=lambda: np.zeros((0, len(LEDGER_COLUMNS))))

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, len(LEDGER_COLUMNS))

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, LEDGER_COLUMNS.index(name)]

    def __len__(self) -> int:
        return len(self.rows)

    def validate(self) -> None:
        if not np.all(np.isfinite(self.rows)):
            raise IntegrationFailure("ledger contains non-finite entries")
        t = self.column("t")
        if np.any(np.diff(t) <= 0):
            raise ValueError("ledger times are not strictly increasing")

    def extend(self, other: "EnergyLedger") -> "EnergyLedger":
        return EnergyLedger(np.vstack([self.rows, other.rows]))

    def audit_ratio(self) -> np.ndarray:
        """``|audit_residual| / (dt * audit_scale)`` per row."""
        scale = self.column("dt") * self.column("audit_scale")
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.abs(self.column("audit_residual")) / scale
        return np.where(scale > 0, r, 0.0)


# ---------------------------------------------------------------------------
# stepping


@dataclass(frozen=True, eq=False)
class SolverState:
    t: float
    z: VelocityField
    ledger_row: np.ndarray | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.z.coeffs)):
            raise IntegrationFailure("non-finite state", t=self.t)


def _member_axis(y):
    """Scalar stays scalar; per-member values broadcast against ``(B, 2, n, n)``."""
    if np.ndim(y) == 0:
        return float(y)
    return np.asarray(y, dtype=float).reshape(-1, 1, 1, 1)


def _ledger_rows(system: TransformedSystem, zh, new, ev: Evaluation, t, dt, y):
    grid, p = system.grid, system.params
    b = zh.shape[0]
    y = np.broadcast_to(np.asarray(y, dtype=float), (b,))
    ups = np.exp(-p.sigma * y)
    z2 = inner_product(grid, zh, zh)
    z2_new = inner_product(grid, new, new)
    tz = inner_product(grid, ev.tendency, zh)
    e_l2 = 2 * inner_product(grid, grid.k_squared * zh, zh)
    fd = system.forcing.dual_norm_sq(grid, t + system.forcing_offset)
    residual = (z2_new - z2 - 2 * dt * tz) / dt
    lhs = ((z2_new - z2) / dt + (0.5 * p.sigma**2 - 2 * p.sigma * y) * z2
           + 0.5 * p.nu * p.epsilon0 * e_l2 + p.beta * p.epsilon0 * ev.e_l4_4 / ups**2)
    rhs = 2 * ups**2 * fd / p.absorption_rate
    lam_abs = np.abs(ev.damping)
    scale = (inner_product(grid, ev.tendency, ev.tendency)
             + 2 * np.sqrt(inner_product(grid, lam_abs * ev.tendency, ev.tendency)
                           * inner_product(grid, lam_abs * zh, zh)))
    cols = [np.full(b, t), np.full(b, dt), z2, e_l2, ev.e_l4_4, y, ups,
            np.full(b, fd), residual, lhs - rhs, scale]
    return np.stack(cols, axis=1)


def _imex_update(system: TransformedSystem, zh, ev: Evaluation, dt: float) -> np.ndarray:
    new = (zh + dt * ev.explicit) / (1.0 + dt * ev.damping)
    return leray_coeffs(system.grid, new)


@lru_cache(maxsize=32)
def _system_cached(grid, params, forcing, offset):
    return TransformedSystem(grid, params, forcing, offset)


def rhs_transformed(z: VelocityField, t: float, path, params: PhysicalParams,
                    forcing: ForcingSchedule):
    """Tendency of the transformed equation at a grid time.

    Returns
    -------
    dict
        ``tendency`` (VelocityField) and ``unprojected`` (coefficient
        array of the same terms before Leray projection).
    """
    y = path.ou_at(t)
    system = _system_cached(z.grid, params, forcing, 0.0)
    ev = system.evaluate(z.coeffs[None], t, y)
    if not np.all(np.isfinite(ev.tendency)):
        raise IntegrationFailure("non-finite tendency", t=t)
    return {
        "tendency": VelocityField(z.grid, ev.tendency[0], check=False),
        "unprojected": ev.unprojected[0],
    }


def stability_limit(z: VelocityField, t: float, path, params: PhysicalParams,
                    forcing: ForcingSchedule, y: float | None = None) -> float:
    y = path.ou_at(t) if y is None else y
    system = _system_cached(z.grid, params, forcing, 0.0)
    return system.stability_limit(system.evaluate(z.coeffs[None], t, y), y)


def step(state: SolverState, path, params: PhysicalParams, forcing: ForcingSchedule,
         dt: float, *, y: float | None = None) -> SolverState:
    """One IMEX step of size ``dt`` from ``state``.

    ``y`` overrides the noise coefficient (used for sub-steps inside a
    path interval); by default it is read from ``path`` at ``state.t``.

    Raises
    ------
    StepRefused
        If ``dt`` exceeds the stability bound at the current state.
    IntegrationFailure
        If the update produces non-finite values.
    """
    y = path.ou_at(state.t) if y is None else y
    system = _system_cached(state.z.grid, params, forcing, 0.0)
    zh = state.z.coeffs[None]
    ev = system.evaluate(zh, state.t, y)
    limit = system.stability_limit(ev, y)
    if dt > limit * (1 + 1e-12):
        raise StepRefused(f"dt={dt:.3e} exceeds stability limit {limit:.3e}")
    new = _imex_update(system, zh, ev, dt)
    if not np.all(np.isfinite(new)):
        raise IntegrationFailure("non-finite state after step", last_good=state, t=state.t)
    row = _ledger_rows(system, zh, new, ev, state.t, dt, y)[0]
    return SolverState(state.t + dt, VelocityField(state.z.grid, new[0], check=False), row)


# ---------------------------------------------------------------------------
# integrator


@dataclass
class IntegrationResult:
    """Output of :func:`integrate` for a batch sharing one noise path."""

    grid: Grid
    t: float
    z: np.ndarray                       # (B, 2, n, n) final coefficients
    sample_times: np.ndarray            # (S,)
    samples: np.ndarray | None          # (S, B, 2, n, n) or None
    ledgers: list                       # one EnergyLedger per member
    substeps: int = 0

    def field(self, member: int = 0) -> VelocityField:
        return VelocityField(self.grid, self.z[member], check=False)


def integrate(z0, path, params: PhysicalParams, forcing: ForcingSchedule, t0: float, t1: float,
              *, record_every: int | None = None, keep_ledger: bool = True,
              forcing_offset: float = 0.0, max_halvings: int = 30,
              checkpoint_at: float | None = None, canonicalize=None,
              max_steps: int | None = None) -> IntegrationResult:
    """Integrate a batch of initial data over ``[t0, t1]``.

    Parameters
    ----------
    z0 : VelocityField or tuple(Grid, ndarray)
        Initial state(s); arrays have shape ``(B, 2, n, n)``.
    path : NoisePath, ShiftedPath or sequence of them
        Supplies ``y`` at grid times; ``t0`` and ``t1`` must be grid times.
        A sequence gives each member its own path (all with the same
        ``dt``); the step size is shared across the batch.
    record_every : int or None
        Store states every this many path intervals (and at ``t0``).
    forcing_offset : float
        Forcing is evaluated at ``t + forcing_offset``.
    max_steps : int or None
        Abort with :class:`IntegrationFailure` once this many (sub)steps
        have been taken.
    checkpoint_at, canonicalize :
        When the integration reaches grid time ``checkpoint_at`` the state
        is passed through ``canonicalize`` (e.g. a snapshot round trip)
        before continuing. Used by the checkpoint machinery.
    """
    if isinstance(z0, VelocityField):
        grid = z0.grid
        zh = z0.coeffs[None].copy()
    else:
        if not isinstance(z0, tuple):
            raise ConfigurationError("z0 must be a VelocityField or (grid, array) tuple")
        grid, arr = z0
        zh = np.array(arr, dtype=complex)
    system = TransformedSystem(grid, params, forcing, forcing_offset)
    paths = list(path) if isinstance(path, (list, tuple)) else None
    if paths is not None:
        if len(paths) != zh.shape[0]:
            raise ConfigurationError("need one path per batch member")
        if any(abs(q.dt - paths[0].dt) > 0 for q in paths):
            raise ConfigurationError("paths in a batch must share dt")
        dt = paths[0].dt
        for q in paths:
            q.index(t0), q.index(t1)

        def y_at(t):
            return np.array([q.ou_at(t) for q in paths])
    else:
        dt = path.dt
        path.index(t0), path.index(t1)
        y_at = path.ou_at
    k0 = int(round(t0 / dt))
    n_int = int(round(t1 / dt)) - k0
    if n_int < 0:
        raise ConfigurationError("t1 precedes t0")
    rows = []
    sample_times, samples = [], []
    if record_every:
        sample_times.append(t0)
        samples.append(zh.copy())
    substeps = 0
    for j in range(n_int):
        t_left = (k0 + j) * dt
        y = y_at(t_left)
        t_loc = t_left
        remaining = 1.0  # fraction of the interval left
        h_frac = 1.0
        while remaining > 1e-15:
            ev = system.evaluate(zh, t_loc, y, want_e4=keep_ledger)
            limit = system.stability_limit(ev, y)
            halvings = 0
            while h_frac * dt > limit:
                h_frac *= 0.5
                halvings += 1
                if h_frac < 2.0**-max_halvings:
                    raise IntegrationFailure("step size underflow", t=t_loc)
            h = h_frac * dt
            new = _imex_update(system, zh, ev, h)
            if not np.all(np.isfinite(new)):
                raise IntegrationFailure("non-finite state", last_good=(t_loc, zh.copy()), t=t_loc)
            if keep_ledger:
                rows.append(_ledger_rows(system, zh, new, ev, t_loc, h, y))
            zh = new
            if max_steps is not None and substeps + 1 >= max_steps:
                raise IntegrationFailure("step budget exhausted", last_good=(t_loc, zh.copy()), t=t_loc)
            remaining -= h_frac
            t_loc = t_left + (1.0 - remaining) * dt
            substeps += 1
        t_right = (k0 + j + 1) * dt
        if checkpoint_at is not None and abs(t_right - checkpoint_at) < 1e-9 * max(1, abs(dt)):
            zh = canonicalize(zh)
        if record_every and (j + 1) % record_every == 0:
            sample_times.append(t_right)
            samples.append(zh.copy())
    if keep_ledger and rows:
        stacked = np.stack(rows)  # (steps, B, cols)
        ledgers = [EnergyLedger(stacked[:, b]) for b in range(zh.shape[0])]
    else:
        ledgers = [EnergyLedger() for _ in range(zh.shape[0])]
    return IntegrationResult(
        grid, t1, zh, np.array(sample_times),
        np.stack(samples) if samples else None, ledgers, substeps,
    )


# ---------------------------------------------------------------------------
# back-transform, pressure, continuity


def doss_sussman_inverse(z: VelocityField, path, t: float, sigma: float) -> VelocityField:
    """``Y = Z / Upsilon(t)``."""
    ups = math.exp(-sigma * path.ou_at(t))
    return VelocityField(z.grid, z.coeffs / ups, check=False)


def doss_sussman_forward(y_field: VelocityField, path, t: float, sigma: float) -> VelocityField:
    """``Z = Upsilon(t) Y``."""
    ups = math.exp(-sigma * path.ou_at(t))
    return VelocityField(y_field.grid, y_field.coeffs * ups, check=False)


class PressureGradients(NamedTuple):
    p1_gradient: np.ndarray
    p2_gradient: np.ndarray


def recover_pressure(z: VelocityField, t: float, path, params: PhysicalParams,
                     forcing: ForcingSchedule) -> PressureGradients:
    """Pressure gradients of the velocity equation from a transformed state.

    ``grad P1`` collects the viscous, convective, quadratic-stress and
    forcing contributions; ``grad P2`` the cubic stress. Both are the
    gradient parts ``(I - P)`` of the unprojected terms, written for the
    physical velocity ``Y = Z / Upsilon``.
    """
    from .operators import convection_coeffs, stress_j_coeffs, stress_k_coeffs

    grid = z.grid
    ups = math.exp(-params.sigma * path.ou_at(t))
    zc = z.coeffs
    viscous = -params.nu * grid.k_squared * zc / ups
    part1 = viscous - convection_coeffs(grid, zc, zc) / ups**2
    if params.alpha:
        part1 = part1 - params.alpha * stress_j_coeffs(grid, zc) / ups**2
    fc = forcing.coeffs_at(t)
    if fc is not None:
        part1 = part1 + fc
    part2 = np.zeros_like(zc)
    if params.beta:
        part2 = -params.beta * stress_k_coeffs(grid, zc) / ups**3
    return PressureGradients(gradient_part_coeffs(grid, part1), gradient_part_coeffs(grid, part2))


def curl_residual(grid: Grid, coeffs: np.ndarray) -> float:
    """Max of ``|k1 g2 - k2 g1|`` relative to ``max |k| |g|``."""
    k = grid.wavevectors
    curl = np.abs(k[0] * coeffs[1] - k[1] * coeffs[0]).max()
    scale = (np.sqrt(grid.k_squared) * np.sqrt((np.abs(coeffs) ** 2).sum(axis=0))).max()
    return float(curl / scale) if scale > 0 else 0.0


@lru_cache(maxsize=8)
def embedding_constant(grid: Grid, samples: int = 200) -> float:
    """Estimated ``M`` with ``sup |u - mean u| <= M ||E(u)||_4``.

    Composite of the sampled Sobolev and Korn ratios; an empirical
    estimate, not a proven bound.
    """
    return estimate_sobolev_constant(grid, samples) * estimate_korn_constant(grid, samples)


class Trajectory(NamedTuple):
    """States ``coeffs[s]`` (shape ``(S, 2, n, n)``) at grid times ``times[s]``."""

    grid: Grid
    times: np.ndarray
    coeffs: np.ndarray

    @classmethod
    def from_result(cls, result: IntegrationResult, member: int = 0) -> "Trajectory":
        return cls(result.grid, result.sample_times, result.samples[:, member])


class ContinuityBound(NamedTuple):
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    embedding_constant: float


def continuity_bound(z1_traj: Trajectory, z2_traj: Trajectory, path, params: PhysicalParams,
                     m_const: float | None = None) -> ContinuityBound:
    """Gronwall bound on the distance between two trajectories on one path.

    ``rhs(t) = |d(t0)|^2 exp(int_{t0}^t [2 sigma |y| + M^2/(nu eps0)
    Upsilon^-2 ||E(z1)||_4^2])`` with trapezoid quadrature over the sample
    times; ``lhs(t) = |z1(t) - z2(t)|^2``. ``M`` defaults to
    :func:`embedding_constant`, which is sampled, so ``rhs`` is an
    estimate rather than a proven bound.
    """
    grid = z1_traj.grid
    if z2_traj.grid != grid:
        raise ConfigurationError("trajectories live on different grids")
    times = np.asarray(z1_traj.times)
    if len(times) != len(z2_traj.times) or not np.allclose(times, z2_traj.times, rtol=0, atol=1e-12):
        raise ConfigurationError("trajectories are not on the same time grid")
    c1 = np.asarray(z1_traj.coeffs)
    c2 = np.asarray(z2_traj.coeffs)
    if m_const is None:
        m_const = embedding_constant(grid)
    d = c1 - c2
    lhs = inner_product(grid, d, d)
    y = np.array([path.ou_at(t) for t in times])
    ups = np.exp(-params.sigma * y)
    m = grid.cubic_size
    e = grid.to_physical(sym_gradient_coeffs(grid, c1), m)
    e4 = (frobenius_sq(e) ** 2).reshape(len(times), -1).sum(axis=1) * (grid.box_length / m) ** 2
    rate = 2 * params.sigma * np.abs(y)
    if not params.linear:
        rate = rate + m_const**2 / (params.nu * params.epsilon0) * np.sqrt(e4) / ups**2
    expo = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(times))])
    return ContinuityBound(times, lhs, lhs[0] * np.exp(expo), m_const)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def canonical_state(grid: Grid, zh: np.ndarray) -> np.ndarray:
    """Round trip a batch through the physical-grid values stored on disk."""
    return np.stack([_from_stored(grid, grid.to_physical(c)) for c in zh])


def _from_stored(grid: Grid, values: np.ndarray) -> np.ndarray:
    return leray_coeffs(grid, forward_transform(grid, values))


def save_checkpoint(filename, state: SolverState, path_seed: int, path_offset: int,
                    params: PhysicalParams, ledger_cursor: int) -> None:
    """Write ``(t, z, path seed + offset, params, ledger cursor)``.

    The state is stored as a field snapshot (physical values). A run that
    checkpoints continues from the canonicalized state so that a restart
    reproduces it bit for bit.
    """
    meta = {
        "version": CHECKPOINT_VERSION,
        "t": float(state.t).hex(),
        "path_seed": int(path_seed),
        "path_offset": int(path_offset),
        "params": params.as_dict(),
        "ledger_cursor": int(ledger_cursor),
    }
    body = snapshot_bytes(state.z.grid, state.z.physical())
    Path(filename).write_bytes(json.dumps(meta, sort_keys=True).encode() + b"\n" + body)


def load_checkpoint(filename):
    """Inverse of :func:`save_checkpoint`; returns ``(state, meta)``."""
    raw = Path(filename).read_bytes()
    nl = raw.find(b"\n")
    try:
        meta = json.loads(raw[:nl])
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"corrupt checkpoint: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError("unsupported checkpoint version")
    grid, values = parse_snapshot(raw[nl + 1:])
    t = float.fromhex(meta["t"])
    meta["params"] = PhysicalParams(**meta["params"])
    return SolverState(t, VelocityField(grid, _from_stored(grid, values), check=False)), meta


__all__ = [
    "ContinuityBound", "EnergyLedger", "Evaluation", "ExponentialProfile", "ForcingSchedule",
    "IntegrationFailure", "PowerProfile",
    "IntegrationResult", "LEDGER_COLUMNS", "PhysicalParams", "PressureGradients", "SolverState",
    "StepRefused", "Trajectory", "TransformedSystem", "canonical_state", "continuity_bound", "curl_residual",
    "doss_sussman_forward", "doss_sussman_inverse", "embedding_constant", "integrate",
    "load_checkpoint", "recover_pressure", "rhs_transformed", "save_checkpoint", "stability_limit",
    "step",
]
