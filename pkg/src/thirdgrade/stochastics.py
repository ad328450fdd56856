"""Two-sided Wiener paths and the stationary Ornstein-Uhlenbeck process.

The OU process ``y`` solves ``dy = -y dt + dW`` and is started in its
stationary law ``N(0, 1/2)`` at time 0. On each grid step the pair
``(W increment, OU innovation)`` is drawn jointly from its exact Gaussian
law::

    Var dW = dt,  Var eta = (1 - exp(-2 dt)) / 2,  Cov = 1 - exp(-dt)
    y[n+1] = exp(-dt) y[n] + eta[n]

Times ``t >= 0`` come from a forward substream. Times ``t <= 0`` come from a
second substream that drives the time-reversed process ``y~(s) = y(-s)``;
by reversibility of the stationary OU law ``y~`` is again an OU process
with its own Brownian motion ``W~``, and the forward increments are
recovered as ``dW = 2 (y(t + dt) - y(t)) + dW~``. Extending the past
therefore never changes the future, and vice versa.

Grid times are integer multiples of ``dt``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.signal import lfilter

from .fields import ConfigurationError

_GRID_TOL = 1e-9


def _grid_index(value: float, dt: float, what: str) -> int:
    q = value / dt
    k = int(round(q))
    if abs(q - k) > _GRID_TOL * max(1.0, abs(q)):
        raise ConfigurationError(f"{what}={value} is not a multiple of dt={dt}")
    return k


def _joint_draws(rng: np.random.Generator, steps: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Jointly Gaussian ``(dW, eta)`` pairs for ``steps`` OU steps of size ``dt``."""
    a = math.exp(-dt)
    var_eta = 0.5 * (1.0 - a * a)
    cov = 1.0 - a
    c11 = math.sqrt(dt)
    c21 = cov / c11
    c22 = math.sqrt(max(var_eta - c21 * c21, 0.0))
    g = rng.standard_normal((steps, 2))
    dw = c11 * g[:, 0]
    eta = c21 * g[:, 0] + c22 * g[:, 1]
    return dw, eta


def _ou_recursion(y0: float, eta: np.ndarray, dt: float) -> np.ndarray:
    """``y[0] = y0``, ``y[n+1] = exp(-dt) y[n] + eta[n]``; returns ``len(eta)+1`` values."""
    a = math.exp(-dt)
    if len(eta) == 0:
        return np.array([y0])
    tail, _ = lfilter([1.0], [1.0, -a], eta, zi=[a * y0])
    return np.concatenate([[y0], tail])


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Discretized two-sided noise path on the grid ``t_start + k dt``.

    Attributes
    ----------
    increments : ndarray
        Wiener increments, one per step (length ``steps``).
    ou_samples : ndarray
        OU values at every grid time (length ``steps + 1``).
    wiener : ndarray
        ``W(t)`` at every grid time with ``W(0) = 0``.
    """

    t_start: float
    t_end: float
    dt: float
    increments: np.ndarray
    ou_samples: np.ndarray
    seed: int
    wiener: np.ndarray = field(repr=False, default=None)
    anchor_value: float = 0.0
    mode: str = "stationary"

    def __post_init__(self):
        for name in ("increments", "ou_samples", "wiener"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)

    @property
    def steps(self) -> int:
        return len(self.increments)

    @property
    def k_start(self) -> int:
        return _grid_index(self.t_start, self.dt, "t_start")

    def times(self) -> np.ndarray:
        return (self.k_start + np.arange(self.steps + 1)) * self.dt

    def index(self, t: float) -> int:
        """Position of grid time ``t`` in the sample arrays.

        Raises
        ------
        ConfigurationError
            For off-grid or out-of-range queries.
        """
        k = _grid_index(t, self.dt, "t") - self.k_start
        if not 0 <= k <= self.steps:
            raise ConfigurationError(f"t={t} outside the path window [{self.t_start}, {self.t_end}]")
        return k

    def ou_at(self, t: float) -> float:
        return float(self.ou_samples[self.index(t)])

    def wiener_at(self, t: float) -> float:
        return float(self.wiener[self.index(t)])

    def coarsen(self, factor: int) -> "NoisePath":
        """The same realization seen on a grid ``factor`` times coarser.

        OU values are subsampled and Wiener increments summed, which is the
        exact law of the coarse discretization.
        """
        if factor < 1 or self.steps % factor or self.k_start % factor:
            raise ConfigurationError("coarsening factor must divide the grid")
        inc = self.increments.reshape(-1, factor).sum(axis=1)
        return NoisePath(
            self.t_start, self.t_end, self.dt * factor, inc, self.ou_samples[::factor],
            self.seed, self.wiener[::factor], self.anchor_value, self.mode,
        )

    def window(self, t0: float, t1: float) -> "NoisePath":
        """Restriction to ``[t0, t1]`` (both on the grid)."""
        i0, i1 = self.index(t0), self.index(t1)
        return NoisePath(
            t0, t1, self.dt, self.increments[i0:i1], self.ou_samples[i0 : i1 + 1],
            self.seed, self.wiener[i0 : i1 + 1], self.anchor_value, self.mode,
        )


def generate_path(
    seed: int,
    t_start: float,
    t_end: float,
    dt: float,
    *,
    stationary_start: bool = True,
    zero_noise: bool = False,
    y0: float | None = None,
) -> NoisePath:
    """Reproducible two-sided path on ``[t_start, t_end]``.

    Parameters
    ----------
    stationary_start : bool
        Draw ``y(0)`` from ``N(0, 1/2)``; if False ``y(0) = 0`` (or ``y0``).
    zero_noise : bool
        Test mode: all Gaussian draws are zero and the OU values decay
        deterministically from ``y(t_start) = y0`` (default 0).

    Raises
    ------
    ConfigurationError
        If ``dt <= 0``, the window is empty, or its ends are not multiples
        of ``dt``.
    """
    if not dt > 0:
        raise ConfigurationError("dt must be > 0")
    if not t_start < t_end:
        raise ConfigurationError("t_start must be < t_end")
    ks = _grid_index(t_start, dt, "t_start")
    ke = _grid_index(t_end, dt, "t_end")
    steps = ke - ks

    if zero_noise:
        y_init = 0.0 if y0 is None else float(y0)
        ou = y_init * np.exp(-dt * np.arange(steps + 1))
        inc = np.zeros(steps)
        return NoisePath(ks * dt, ke * dt, dt, inc, ou, seed, np.zeros(steps + 1), y_init, "zero")

    anchor_rng, fwd_rng, bwd_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    )
    if y0 is not None:
        anchor = float(y0)
    elif stationary_start:
        anchor = float(anchor_rng.standard_normal() * math.sqrt(0.5))
    else:
        anchor = 0.0

    # build on [k_lo, k_hi] which always contains 0, then slice
    k_lo, k_hi = min(ks, 0), max(ke, 0)
    nb, nf = -k_lo, k_hi
    dwt, eta_b = _joint_draws(bwd_rng, nb, dt)
    rev = _ou_recursion(anchor, eta_b, dt)  # rev[j] = y(-j dt)
    dw_back = 2.0 * (rev[:-1] - rev[1:]) + dwt  # forward increment on [-(j+1)dt, -j dt]
    dw_fwd, eta_f = _joint_draws(fwd_rng, nf, dt)
    fwd = _ou_recursion(anchor, eta_f, dt)

    ou_full = np.concatenate([rev[::-1], fwd[1:]])
    inc_full = np.concatenate([dw_back[::-1], dw_fwd])
    w_full = np.concatenate([[0.0], np.cumsum(inc_full)])
    w_full -= w_full[nb]

    i0, i1 = ks - k_lo, ke - k_lo
    mode = "stationary" if (stationary_start and y0 is None) else "fixed-anchor"
    return NoisePath(
        ks * dt, ke * dt, dt, inc_full[i0:i1], ou_full[i0 : i1 + 1], seed,
        w_full[i0 : i1 + 1], anchor, mode,
    )


@dataclass(frozen=True, eq=False)
class ShiftedPath:
    """The path ``theta_s omega``: ``W(t + s) - W(s)`` and ``y(t + s)``."""

    base: NoisePath
    shift: float

    def __post_init__(self):
        self.base.index(self.shift)

    @property
    def dt(self) -> float:
        return self.base.dt

    @property
    def t_start(self) -> float:
        return self.base.t_start - self.shift

    @property
    def t_end(self) -> float:
        return self.base.t_end - self.shift

    def ou_at(self, t: float) -> float:
        return self.base.ou_at(t + self.shift)

    def wiener_at(self, t: float) -> float:
        return self.base.wiener_at(t + self.shift) - self.base.wiener_at(self.shift)

    def times(self) -> np.ndarray:
        return self.base.times() - self.shift

    @property
    def ou_samples(self) -> np.ndarray:
        return self.base.ou_samples

    def index(self, t: float) -> int:
        return self.base.index(t + self.shift)


def ou_at(path, t: float) -> float:
    """``y(theta_t omega)`` at a grid time; interpolation is not offered."""
    return path.ou_at(t)


class PathSeries(NamedTuple):
    times: np.ndarray
    y: np.ndarray
    wiener: np.ndarray


def path_series(path, t0: float, t1: float) -> PathSeries:
    """Grid times in ``[t0, t1]`` with the OU and Wiener values there.

    Works for :class:`NoisePath` and :class:`ShiftedPath` (in shifted time).
    """
    shift = 0.0
    base = path
    if isinstance(path, ShiftedPath):
        shift, base = path.shift, path.base
    i0, i1 = base.index(t0 + shift), base.index(t1 + shift)
    times = (base.k_start + np.arange(i0, i1 + 1)) * base.dt - shift
    w = base.wiener[i0 : i1 + 1]
    if shift:
        w = w - base.wiener_at(shift)
    return PathSeries(times, np.array(base.ou_samples[i0 : i1 + 1]), np.array(w))


def upsilon(path, t: float, sigma: float) -> float:
    """Doss-Sussman factor ``exp(-sigma y(theta_t omega))``."""
    return math.exp(-sigma * path.ou_at(t))


class TemperednessReport(NamedTuple):
    max_ratio_y_over_t: float
    decay_samples: dict
    lags: np.ndarray
    wiener_ratio: float


def temperedness_report(path: NoisePath, sigma: float, min_lag: float = 10.0,
                        deltas=(0.01, 0.1, 1.0)) -> TemperednessReport:
    """Growth diagnostics of ``y`` and ``W`` into the past.

    Reports ``sup_{t >= min_lag} |y(theta_{-t} omega)| / t``, the sequences
    ``exp(-delta t) |y(theta_{-t} omega)|`` and ``|W(-T)| / T`` at the
    deepest available lag ``T``.

    Raises
    ------
    ConfigurationError
        If the path does not reach back at least 50 time units from 0.
    """
    del sigma  # the diagnostics are properties of omega alone
    if path.t_start > -50.0 or path.t_end < 0.0:
        raise ConfigurationError("temperedness_report needs a path covering [-50, 0]")
    i0 = path.index(0.0)
    lags = np.arange(i0 + 1) * path.dt
    y_back = np.abs(path.ou_samples[i0::-1])
    mask = lags >= min_lag
    ratio = float((y_back[mask] / lags[mask]).max())
    decay = {d: np.exp(-d * lags) * y_back for d in deltas}
    deepest = lags[-1]
    w_ratio = abs(path.wiener[0] - path.wiener[i0]) / deepest
    return TemperednessReport(ratio, decay, lags, float(w_ratio))


def path_csv(path: NoisePath, sigma: float) -> str:
    """CSV text with columns ``t, W, y, upsilon`` and a header comment."""
    buf = io.StringIO()
    buf.write(f"# seed={path.seed} dt={path.dt!r} sigma={sigma!r} mode={path.mode}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "W", "y", "upsilon"])
    for t, wv, yv in zip(path.times(), path.wiener, path.ou_samples):
        w.writerow([repr(float(t)), repr(float(wv)), repr(float(yv)), repr(math.exp(-sigma * yv))])
    return buf.getvalue()


def write_path_csv(path: NoisePath, sigma: float, filename) -> None:
    with open(filename, "w", newline="") as fh:
        fh.write(path_csv(path, sigma))


def euler_maruyama_ou(path: NoisePath, substeps: int = 100, seed: int | None = None) -> np.ndarray:
    """Reference OU values by Euler-Maruyama on a refined grid.

    The refined Brownian path is a Brownian bridge fill-in of ``path``'s
    increments, so both share the same ``W`` at coarse grid times. Starts
    from ``y(t_start)`` and returns values at the coarse grid times.
    """
    rng = np.random.default_rng(path.seed if seed is None else seed)
    h = path.dt / substeps
    y = np.empty(path.steps + 1)
    y[0] = path.ou_samples[0]
    cur = y[0]
    for n, inc in enumerate(path.increments):
        g = rng.standard_normal(substeps) * math.sqrt(h)
        # bridge: shift the fine increments so they sum to the coarse one
        g += (inc - g.sum()) / substeps
        for dw in g:
            cur = cur - cur * h + dw
        y[n + 1] = cur
    return y
