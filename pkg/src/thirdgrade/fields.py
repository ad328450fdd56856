"""Spectral field algebra on the periodic square ``[0, L)^2``.

Fourier convention
------------------
A real field ``f`` sampled on an ``n x n`` grid is represented by

    f_hat(k) = (L / n)**2 * fft2(f)

so that ``f_hat(k)`` approximates ``integral f(x) exp(-2 pi i k.x / L) dx``.
With this choice a constant field ``c`` has ``f_hat(0) = c L**2`` and
Parseval reads ``integral |f|^2 dx = (1 / L**2) sum_k |f_hat(k)|^2``.
Coefficients are stored in numpy FFT order (index ``i`` holds wavenumber
``i`` for ``i < n/2`` and ``i - n`` otherwise). Array axis 0 is ``x1`` and
axis 1 is ``x2``. The Nyquist row and column are kept at zero so that every
stored field is an exact real trigonometric polynomial.

Products are evaluated on zero-padded grids: ``3n/2`` points per axis for
quadratic terms and ``2n`` for cubic terms and quartic integrals, which
makes every truncated product and every ``L^4`` integral exact.

The mean mode is part of the state; no zero-mean restriction is imposed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft


class ConfigurationError(ValueError):
    """Raised when inputs violate a documented precondition."""


NORMALIZATION_TAG = "fhat=(L/n)^2*fft2(f)"
SNAPSHOT_FORMAT = "thirdgrade-field"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Square periodic grid.

    Parameters
    ----------
    n_modes : int
        Points (and Fourier modes) per axis; even and at least 8.
    box_length : float
        Side ``L`` of the periodic box.
    dealias_factor : float
        Padding ratio used for quadratic products, ``1.5`` or ``2``.
        Cubic products always use ``2``.
    """

    n_modes: int
    box_length: float = 2 * math.pi
    dealias_factor: float = 1.5

    def __post_init__(self):
        n = self.n_modes
        if int(n) != n or n < 8 or n % 2:
            raise ConfigurationError(f"n_modes must be an even integer >= 8, got {n}")
        if not self.box_length > 0:
            raise ConfigurationError(f"box_length must be > 0, got {self.box_length}")
        if self.dealias_factor not in (1.5, 2, 2.0):
            raise ConfigurationError("dealias_factor must be 3/2 or 2")
        if (n * self.dealias_factor) % 2:
            raise ConfigurationError("n_modes * dealias_factor must be even")

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_modes

    @property
    def quadratic_size(self) -> int:
        return int(round(self.n_modes * self.dealias_factor))

    @property
    def cubic_size(self) -> int:
        return 2 * self.n_modes

    @property
    def k_max(self) -> float:
        """Largest angular wavenumber magnitude per axis, ``2 pi (n/2) / L``."""
        return 2 * math.pi * (self.n_modes // 2) / self.box_length

    @cached_property
    def integer_wavenumbers(self) -> np.ndarray:
        return np.fft.fftfreq(self.n_modes, 1.0 / self.n_modes).astype(int)

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """Angular wavevectors ``2 pi k / L`` with shape ``(2, n, n)``."""
        k = 2 * math.pi * self.integer_wavenumbers / self.box_length
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        return np.stack([k1, k2])

    @cached_property
    def k_squared(self) -> np.ndarray:
        return self.wavevectors[0] ** 2 + self.wavevectors[1] ** 2

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """Boolean mask, True on modes that are kept (Nyquist excluded)."""
        h = self.n_modes // 2
        keep = np.ones((self.n_modes, self.n_modes), dtype=bool)
        keep[h, :] = False
        keep[:, h] = False
        return keep

    @cached_property
    def _negation_index(self) -> np.ndarray:
        return (-np.arange(self.n_modes)) % self.n_modes

    def coordinates(self, size: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Physical grid coordinates ``(x1, x2)`` with ``ij`` indexing."""
        m = self.n_modes if size is None else size
        x = np.arange(m) * (self.box_length / m)
        return np.meshgrid(x, x, indexing="ij")

    # transforms -----------------------------------------------------------

    def _pad_rows(self, size: int) -> np.ndarray:
        k = self.integer_wavenumbers
        return np.where(k >= 0, k, size + k)

    def to_physical(self, coeffs: np.ndarray, size: int | None = None) -> np.ndarray:
        """Evaluate coefficient arrays on an ``size x size`` grid.

        Leading axes of ``coeffs`` are treated as a batch; the last two are
        the ``(n, n)`` spectrum. Input must be Hermitian with zero Nyquist
        modes.
        """
        n = self.n_modes
        m = n if size is None else size
        h = n // 2
        coeffs = np.asarray(coeffs)
        half = np.zeros(coeffs.shape[:-2] + (m, m // 2 + 1), dtype=complex)
        half[..., self._pad_rows(m), :h] = coeffs[..., :, :h]
        if m == n:
            half[..., h, :] = 0.0
        return sfft.irfft2(half, s=(m, m)) * (m * m / self.box_length**2)

    def from_physical(self, values: np.ndarray, size: int | None = None) -> np.ndarray:
        """Forward transform of real values on a ``size`` grid, truncated to ``n`` modes."""
        n = self.n_modes
        values = np.asarray(values, dtype=float)
        m = values.shape[-1] if size is None else size
        if values.shape[-2:] != (m, m):
            raise ConfigurationError(
                f"expected trailing shape ({m}, {m}), got {values.shape[-2:]}"
            )
        h = n // 2
        half = sfft.rfft2(values) * (self.box_length / m) ** 2
        trunc = half[..., self._pad_rows(m), :h]
        out = np.zeros(values.shape[:-2] + (n, n), dtype=complex)
        out[..., :, :h] = trunc
        out[..., :, h + 1 :] = np.conj(trunc[..., self._negation_index, h - 1 : 0 : -1])
        out[..., h, :] = 0.0
        out[..., :, h] = 0.0
        return out


def forward_transform(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Fourier coefficients of a real field given on the ``n x n`` grid.

    Raises
    ------
    ConfigurationError
        If the trailing dimensions do not match the grid.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-2:] != (grid.n_modes, grid.n_modes):
        raise ConfigurationError(
            f"field shape {values.shape[-2:]} does not match grid {grid.n_modes}"
        )
    return grid.from_physical(values)


def inverse_transform(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Physical values on the ``n x n`` grid."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-2:] != (grid.n_modes, grid.n_modes):
        raise ConfigurationError("coefficient shape does not match grid")
    return grid.to_physical(coeffs)


def hermitian_part(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Project a coefficient array onto real fields and drop Nyquist modes."""
    idx = grid._negation_index
    flipped = np.conj(coeffs[..., idx, :][..., :, idx])
    return 0.5 * (coeffs + flipped) * grid.nyquist_mask


def inner_product(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """L^2 inner product of coefficient arrays, summed over components.

    Leading batch axes beyond the component axis are preserved.
    """
    s = np.real(a * np.conj(b)).sum(axis=(-1, -2, -3))
    return s / grid.box_length**2


def leray_coeffs(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Apply the Fourier-space Leray projector to ``(..., 2, n, n)`` arrays."""
    k = grid.wavevectors
    k2 = grid.k_squared.copy()
    k2[0, 0] = 1.0
    kdotv = k[0] * coeffs[..., 0, :, :] + k[1] * coeffs[..., 1, :, :]
    ratio = kdotv / k2
    out = np.empty_like(coeffs, dtype=complex)
    out[..., 0, :, :] = coeffs[..., 0, :, :] - k[0] * ratio
    out[..., 1, :, :] = coeffs[..., 1, :, :] - k[1] * ratio
    return out


def gradient_part_coeffs(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """``(I - P)`` applied to ``(..., 2, n, n)`` arrays; zero on the mean mode."""
    return np.asarray(coeffs) - leray_coeffs(grid, coeffs)


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Divergence-free real vector field stored by its Fourier coefficients.

    ``coeffs`` has shape ``(2, n, n)``. Instances are immutable; arithmetic
    returns new fields.
    """

    grid: Grid
    coeffs: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        n = self.grid.n_modes
        if c.shape != (2, n, n):
            raise ConfigurationError(f"coeffs must have shape (2, {n}, {n}), got {c.shape}")
        if self.check:
            div = divergence_residual(self.grid, c)
            scale = max(np.abs(c).max(), 1e-300)
            if div > 1e-12 * scale:
                raise ConfigurationError(f"field is not divergence-free (residual {div:.3e})")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid) -> "VelocityField":
        return cls(grid, np.zeros((2, grid.n_modes, grid.n_modes), dtype=complex))

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray, project: bool = True) -> "VelocityField":
        """Build a field from physical values of shape ``(2, n, n)``."""
        values = np.asarray(values, dtype=float)
        if values.shape != (2, grid.n_modes, grid.n_modes):
            raise ConfigurationError("values must have shape (2, n, n)")
        c = forward_transform(grid, values)
        if project:
            c = leray_coeffs(grid, c)
        return cls(grid, c)

    def physical(self, size: int | None = None) -> np.ndarray:
        return self.grid.to_physical(self.coeffs, size)

    def _same_grid(self, other: "VelocityField"):
        if other.grid != self.grid:
            raise ConfigurationError("grid mismatch")

    def __add__(self, other: "VelocityField") -> "VelocityField":
        self._same_grid(other)
        return VelocityField(self.grid, self.coeffs + other.coeffs, check=False)

    def __sub__(self, other: "VelocityField") -> "VelocityField":
        self._same_grid(other)
        return VelocityField(self.grid, self.coeffs - other.coeffs, check=False)

    def __mul__(self, scalar: float) -> "VelocityField":
        return VelocityField(self.grid, self.coeffs * float(scalar), check=False)

    __rmul__ = __mul__

    def __neg__(self) -> "VelocityField":
        return self * -1.0

    def inner(self, other: "VelocityField") -> float:
        self._same_grid(other)
        return float(inner_product(self.grid, self.coeffs, other.coeffs))

    def l2_sq(self) -> float:
        return self.inner(self)


def divergence_residual(grid: Grid, coeffs: np.ndarray) -> float:
    """Max over modes of ``|k . u_hat(k)|`` scaled by ``L / 2 pi``."""
    k = grid.wavevectors * (grid.box_length / (2 * math.pi))
    return float(np.abs(k[0] * coeffs[0] + k[1] * coeffs[1]).max())


def leray_project(u) -> VelocityField:
    """Divergence-free part of a vector field.

    Parameters
    ----------
    u : VelocityField or tuple(Grid, ndarray)
        Hermitian coefficients of shape ``(2, n, n)``.
    """
    grid, coeffs = _unpack(u)
    return VelocityField(grid, leray_coeffs(grid, coeffs), check=False)


def gradient_part(u) -> np.ndarray:
    """Curl-free remainder ``(I - P) u`` as a coefficient array."""
    grid, coeffs = _unpack(u)
    return gradient_part_coeffs(grid, coeffs)


def _unpack(u):
    if isinstance(u, VelocityField):
        return u.grid, u.coeffs
    grid, coeffs = u
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape != (2, grid.n_modes, grid.n_modes):
        raise ConfigurationError("vector coefficients must have shape (2, n, n)")
    return grid, coeffs


# gradients and tensors -----------------------------------------------------


def gradient_coeffs(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of ``grad u`` with ``out[..., i, j] = d_j u_i``."""
    ik = 1j * grid.wavevectors
    return coeffs[..., :, None, :, :] * ik[None, :, :, :]


def sym_gradient_coeffs(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Independent components ``(E11, E22, E12)`` of ``E(u)`` in Fourier space."""
    ik1, ik2 = 1j * grid.wavevectors
    u1 = coeffs[..., 0, :, :]
    u2 = coeffs[..., 1, :, :]
    return np.stack([2 * ik1 * u1, 2 * ik2 * u2, ik2 * u1 + ik1 * u2], axis=-3)


def expand_symmetric(comps: np.ndarray) -> np.ndarray:
    """Turn ``(..., 3, m, m)`` components into full ``(..., 2, 2, m, m)`` matrices."""
    e11, e22, e12 = comps[..., 0, :, :], comps[..., 1, :, :], comps[..., 2, :, :]
    row1 = np.stack([e11, e12], axis=-3)
    row2 = np.stack([e12, e22], axis=-3)
    return np.stack([row1, row2], axis=-4)


@dataclass(frozen=True, eq=False)
class SymTensorField:
    """Symmetric 2x2 tensor field on a physical grid.

    ``values`` has shape ``(2, 2, m, m)``; ``m`` is the grid's ``n_modes``
    unless built on a padded grid.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 4 or v.shape[:2] != (2, 2) or v.shape[2] != v.shape[3]:
            raise ConfigurationError("values must have shape (2, 2, m, m)")
        if not np.array_equal(v[0, 1], v[1, 0]):
            raise ConfigurationError("tensor values are not symmetric")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[-1]

    def trace(self) -> np.ndarray:
        return self.values[0, 0] + self.values[1, 1]

    def frobenius_sq(self) -> np.ndarray:
        return (self.values**2).sum(axis=(0, 1))

    def integral(self, pointwise: np.ndarray) -> float:
        """Trapezoid quadrature of a pointwise quantity on this tensor's grid."""
        return float(pointwise.sum() * (self.grid.box_length / self.size) ** 2)


def sym_gradient(u: VelocityField, size: int | None = None) -> SymTensorField:
    """``E(u) = grad u + (grad u)^T`` evaluated on the physical grid."""
    comps = u.grid.to_physical(sym_gradient_coeffs(u.grid, u.coeffs), size)
    return SymTensorField(u.grid, expand_symmetric(comps))


class FieldNorms(NamedTuple):
    l2_sq: float
    e_l2_sq: float
    e_l4_4: float
    grad_l4_4: float


def norms(u: VelocityField) -> FieldNorms:
    """``||u||_2^2``, ``||E(u)||_2^2``, ``||E(u)||_4^4`` and ``||grad u||_4^4``.

    Quartic integrals use the ``2n`` grid, which integrates the degree-4
    trigonometric polynomials exactly. Matrix norms are Frobenius.
    """
    grid = u.grid
    m = grid.cubic_size
    w = (grid.box_length / m) ** 2
    g = grid.to_physical(gradient_coeffs(grid, u.coeffs), m)
    e = g + np.swapaxes(g, 0, 1)
    e_sq = (e**2).sum(axis=(0, 1))
    g_sq = (g**2).sum(axis=(0, 1))
    e_hat = sym_gradient_coeffs(grid, u.coeffs)
    e_l2 = inner_product(grid, e_hat[None, :2], e_hat[None, :2])[0]
    e_l2 += 2 * inner_product(grid, e_hat[None, 2:], e_hat[None, 2:])[0]
    return FieldNorms(
        l2_sq=float(inner_product(grid, u.coeffs, u.coeffs)),
        e_l2_sq=float(e_l2),
        e_l4_4=float((e_sq**2).sum() * w),
        grad_l4_4=float((g_sq**2).sum() * w),
    )


def sup_norm(u: VelocityField, size: int | None = None) -> float:
    """Max of ``|u(x)|`` sampled on a (padded) grid."""
    v = u.physical(size or 2 * u.grid.n_modes)
    return float(np.sqrt((v**2).sum(axis=0)).max())


def dual_norm_sq(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Negative-order Sobolev norm ``(1/L^2) sum |f_hat|^2 / (1 + |k|^2)``.

    Works on ``(..., 2, n, n)`` arrays; the weight matches the norm
    ``||u||_2^2 + ||grad u||_2^2`` on the state space.
    """
    w = 1.0 / (1.0 + grid.k_squared)
    return (np.abs(coeffs) ** 2 * w).sum(axis=(-1, -2, -3)) / grid.box_length**2


# random fields -------------------------------------------------------------


def random_velocity(
    grid: Grid,
    rng: np.random.Generator,
    *,
    k_cut: int | None = None,
    slope: float = 0.0,
    l2_norm: float | None = 1.0,
    zero_mean: bool = True,
) -> VelocityField:
    """Random divergence-free band-limited field.

    Built as the perpendicular gradient of a Gaussian stream function whose
    modes ``0 < |k|_inf <= k_cut`` carry weight ``|k|^(-slope)``.

    Parameters
    ----------
    l2_norm : float or None
        Target ``||u||_2``; ``None`` keeps the raw draw.
    zero_mean : bool
        If False a random mean flow is added.
    """
    n = grid.n_modes
    kc = n // 2 - 1 if k_cut is None else min(k_cut, n // 2 - 1)
    ki = grid.integer_wavenumbers
    K1, K2 = np.meshgrid(ki, ki, indexing="ij")
    band = (np.maximum(abs(K1), abs(K2)) <= kc) & ((K1 != 0) | (K2 != 0))
    kk = np.sqrt(K1**2 + K2**2, dtype=float)
    kk[0, 0] = 1.0
    amp = np.where(band, kk ** (-slope - 1.0), 0.0)
    psi = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * amp
    psi = hermitian_part(grid, psi)
    ik1, ik2 = 1j * grid.wavevectors
    c = np.stack([ik2 * psi, -ik1 * psi])
    if not zero_mean:
        c[:, 0, 0] = rng.standard_normal(2) * grid.box_length**2 * 0.5
    if l2_norm is not None:
        nrm = math.sqrt(float(inner_product(grid, c, c)))
        if nrm > 0:
            c *= l2_norm / nrm
    return VelocityField(grid, c, check=False)


# cutoff --------------------------------------------------------------------


def smoothstep_profile(s: np.ndarray) -> np.ndarray:
    """``q(s) = s^3 (10 - 15 s + 6 s^2)`` clipped to ``[0, 1]`` outside ``[0, 1]``."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


#: sup |q'| = 15/8 at s = 1/2 and sup |q''| = 10/sqrt(3) at s = (3 -+ sqrt 3)/6.
PROFILE_DERIVATIVE_BOUND = max(15.0 / 8.0, 10.0 / math.sqrt(3.0))


@dataclass(frozen=True)
class Cutoff:
    """Radial cutoff ``rho(|x - c|^2 / k^2)`` centred at the cell centre.

    ``rho`` vanishes for arguments ``<= 1``, equals one for arguments
    ``>= 2`` and follows the quintic smoothstep in between.
    """

    radius_k: float
    derivative_bound: float = PROFILE_DERIVATIVE_BOUND

    def __post_init__(self):
        if not self.radius_k > 0:
            raise ConfigurationError("cutoff radius must be > 0")

    def profile(self, xi: np.ndarray) -> np.ndarray:
        return smoothstep_profile(np.asarray(xi, dtype=float) - 1.0)

    def weights(self, grid: Grid, size: int | None = None) -> np.ndarray:
        if self.radius_k >= grid.box_length / 2:
            raise ConfigurationError(
                f"cutoff radius {self.radius_k} must be < L/2 = {grid.box_length / 2}"
            )
        x1, x2 = grid.coordinates(size)
        c = grid.box_length / 2
        xi = ((x1 - c) ** 2 + (x2 - c) ** 2) / self.radius_k**2
        return self.profile(xi)


def tail_mass(u: VelocityField, cut: Cutoff) -> float:
    """Quadrature of ``rho^2 |u|^2`` over the cell on the ``2n`` grid."""
    m = u.grid.cubic_size
    rho = cut.weights(u.grid, m)
    v = u.physical(m)
    return float((rho**2 * (v**2).sum(axis=0)).sum() * (u.grid.box_length / m) ** 2)


def inner_mass(u: VelocityField, radius: float) -> float:
    """Mass of ``|u|^2`` within ``radius`` of the cell centre (same quadrature)."""
    grid = u.grid
    m = grid.cubic_size
    x1, x2 = grid.coordinates(m)
    c = grid.box_length / 2
    inside = (x1 - c) ** 2 + (x2 - c) ** 2 < radius**2
    v = u.physical(m)
    return float(((v**2).sum(axis=0) * inside).sum() * (grid.box_length / m) ** 2)


# discrete functional-inequality constants ---------------------------------


def _constant_candidates(grid: Grid, samples: int, seed: int):
    rng = np.random.default_rng(seed)
    slopes = np.linspace(0.0, 3.0, 7)
    for i in range(samples):
        kc = int(rng.integers(1, grid.n_modes // 2))
        yield random_velocity(grid, rng, k_cut=kc, slope=slopes[i % len(slopes)])


def estimate_korn_constant(grid: Grid, samples: int = 200, seed: int = 0) -> float:
    """Largest observed ``||grad u||_4 / ||E(u)||_4`` over random fields.

    Samples are zero-mean divergence-free band-limited fields with varied
    bandwidth and spectral slope. The result is a lower bound for the
    discrete Korn constant.
    """
    if samples < 100:
        raise ConfigurationError("samples must be >= 100")
    best = 0.0
    for u in _constant_candidates(grid, samples, seed):
        nr = norms(u)
        best = max(best, (nr.grad_l4_4 / nr.e_l4_4) ** 0.25)
    return best


def estimate_sobolev_constant(grid: Grid, samples: int = 200, seed: int = 1) -> float:
    """Largest observed ``||u||_inf / ||grad u||_4`` over zero-mean random fields."""
    if samples < 100:
        raise ConfigurationError("samples must be >= 100")
    best = 0.0
    for u in _constant_candidates(grid, samples, seed):
        best = max(best, sup_norm(u) / norms(u).grad_l4_4**0.25)
    return best


# snapshots -----------------------------------------------------------------


def snapshot_bytes(grid: Grid, values: np.ndarray) -> bytes:
    values = np.asarray(values, dtype=float)
    if values.shape[-2:] != (grid.n_modes, grid.n_modes):
        raise ConfigurationError("snapshot values do not match grid")
    header = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "n_modes": grid.n_modes,
        "box_length": grid.box_length,
        "normalization": NORMALIZATION_TAG,
        "shape": list(values.shape),
        "dtype": "<f8",
        "order": "component-major, row-major",
    }
    line = json.dumps(header, sort_keys=True).encode() + b"\n"
    return line + np.ascontiguousarray(values, dtype="<f8").tobytes()


def write_snapshot(path, field_or_values, grid: Grid | None = None) -> None:
    """Write physical-grid values (or a :class:`VelocityField`) to ``path``."""
    if isinstance(field_or_values, VelocityField):
        grid = field_or_values.grid
        values = field_or_values.physical()
    else:
        values = field_or_values
    Path(path).write_bytes(snapshot_bytes(grid, values))


def read_snapshot(path) -> tuple[Grid, np.ndarray]:
    """Read a snapshot; returns the grid and the raw physical values."""
    return parse_snapshot(Path(path).read_bytes())


def parse_snapshot(raw: bytes) -> tuple[Grid, np.ndarray]:
    nl = raw.find(b"\n")
    if nl < 0:
        raise ConfigurationError("snapshot header missing")
    try:
        header = json.loads(raw[:nl])
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"corrupt snapshot header: {exc}") from exc
    if header.get("format") != SNAPSHOT_FORMAT or header.get("version") != SNAPSHOT_VERSION:
        raise ConfigurationError("unsupported snapshot format")
    if header.get("normalization") != NORMALIZATION_TAG:
        raise ConfigurationError("snapshot normalization tag mismatch")
    shape = tuple(header["shape"])
    body = raw[nl + 1 :]
    if len(body) != 8 * int(np.prod(shape)):
        raise ConfigurationError("snapshot payload has the wrong length")
    grid = Grid(int(header["n_modes"]), float(header["box_length"]))
    values = np.frombuffer(body, dtype="<f8").reshape(shape).astype(float)
    return grid, values


def read_velocity_snapshot(path) -> VelocityField:
    grid, values = read_snapshot(path)
    return VelocityField.from_physical(grid, values)
