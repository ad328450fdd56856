"""Nonlinear operators of the third-grade model on the periodic box.

Sign conventions: ``(grad u)_{ij} = d_j u_i``, ``(div T)_i = d_j T_{ij}`` and
``|A|^2 = A:A`` (Frobenius). For symmetric ``T`` and periodic ``y``,
``<-div T, y> = (1/2) integral T : E(y)``.

* convection ``B(u, v) = P (u . grad) v``
* quadratic stress ``J(z) = -P div(E(z) E(z))``
* cubic stress ``K(z) = -P div(|E(z)|^2 E(z))``
* Stokes operator ``A z = -P Laplacian z``

Each nonlinear operator is evaluated pseudo-spectrally on a padded grid and
returned both before and after Leray projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import (
    ConfigurationError,
    Grid,
    VelocityField,
    expand_symmetric,
    gradient_coeffs,
    inner_product,
    leray_coeffs,
    sym_gradient_coeffs,
)


@dataclass(frozen=True, eq=False)
class OperatorOutput:
    """Operator value after projection plus the raw vector field before it."""

    projected: VelocityField
    unprojected: np.ndarray


def _check_grid(*fields: VelocityField) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ConfigurationError("grid mismatch between operator arguments")
    return grid


def divergence_of_symmetric(grid: Grid, comps_hat: np.ndarray) -> np.ndarray:
    """``div T`` for ``T`` given by Fourier components ``(T11, T22, T12)``."""
    ik1, ik2 = 1j * grid.wavevectors
    t11, t22, t12 = comps_hat[..., 0, :, :], comps_hat[..., 1, :, :], comps_hat[..., 2, :, :]
    return np.stack([ik1 * t11 + ik2 * t12, ik1 * t12 + ik2 * t22], axis=-3)


def matrix_square(e: np.ndarray) -> np.ndarray:
    """Components ``(11, 22, 12)`` of ``E E`` from physical ``(E11, E22, E12)``."""
    e11, e22, e12 = e[..., 0, :, :], e[..., 1, :, :], e[..., 2, :, :]
    sq12 = e12 * e12
    return np.stack([e11 * e11 + sq12, e22 * e22 + sq12, e12 * (e11 + e22)], axis=-3)


def frobenius_sq(e: np.ndarray) -> np.ndarray:
    """``|E|^2`` from physical components ``(E11, E22, E12)``."""
    return e[..., 0, :, :] ** 2 + e[..., 1, :, :] ** 2 + 2 * e[..., 2, :, :] ** 2


def convection_coeffs(grid: Grid, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Unprojected ``(u . grad) v`` with 3/2-rule dealiasing."""
    m = grid.quadratic_size
    up = grid.to_physical(u, m)
    gv = grid.to_physical(gradient_coeffs(grid, v), m)
    prod = up[..., None, 0, :, :] * gv[..., :, 0, :, :] + up[..., None, 1, :, :] * gv[..., :, 1, :, :]
    return grid.from_physical(prod, m)


def stress_j_coeffs(grid: Grid, z: np.ndarray) -> np.ndarray:
    """Unprojected ``-div(E(z) E(z))``."""
    m = grid.quadratic_size
    e = grid.to_physical(sym_gradient_coeffs(grid, z), m)
    return -divergence_of_symmetric(grid, grid.from_physical(matrix_square(e), m))


def stress_k_coeffs(grid: Grid, z: np.ndarray) -> np.ndarray:
    """Unprojected ``-div(|E(z)|^2 E(z))`` with factor-2 padding."""
    m = grid.cubic_size
    e = grid.to_physical(sym_gradient_coeffs(grid, z), m)
    flux = frobenius_sq(e)[..., None, :, :] * e
    return -divergence_of_symmetric(grid, grid.from_physical(flux, m))


def convection(u: VelocityField, v: VelocityField) -> OperatorOutput:
    """``B(u, v)``; the projected part pairs with ``w`` as ``b(u, v, w)``."""
    grid = _check_grid(u, v)
    raw = convection_coeffs(grid, u.coeffs, v.coeffs)
    return OperatorOutput(VelocityField(grid, leray_coeffs(grid, raw), check=False), raw)


def stress_J(z: VelocityField) -> OperatorOutput:
    raw = stress_j_coeffs(z.grid, z.coeffs)
    return OperatorOutput(VelocityField(z.grid, leray_coeffs(z.grid, raw), check=False), raw)


def stress_K(z: VelocityField) -> OperatorOutput:
    raw = stress_k_coeffs(z.grid, z.coeffs)
    return OperatorOutput(VelocityField(z.grid, leray_coeffs(z.grid, raw), check=False), raw)


def laplacian_A(z: VelocityField) -> VelocityField:
    """``-P Laplacian z``: multiplication by ``|2 pi k / L|^2`` then projection."""
    grid = z.grid
    return VelocityField(grid, leray_coeffs(grid, grid.k_squared * z.coeffs), check=False)


def trilinear(u: VelocityField, v: VelocityField, w: VelocityField) -> float:
    """``b(u, v, w) = integral (u . grad) v . w`` through the spectral kernel."""
    _check_grid(u, v, w)
    return float(inner_product(u.grid, convection_coeffs(u.grid, u.coeffs, v.coeffs), w.coeffs))


# independent quadrature oracle --------------------------------------------


def _direct_evaluate(grid: Grid, coeffs: np.ndarray, m: int) -> np.ndarray:
    """Evaluate a trigonometric polynomial on an ``m`` grid by explicit sums.

    Uses separable matrix products with explicit exponentials rather than
    FFTs so that it shares no code path with the padded transforms.
    """
    k = grid.integer_wavenumbers
    x = np.arange(m) / m
    phase = np.exp(2j * math.pi * np.outer(x, k))
    vals = np.einsum("ak,...kl,bl->...ab", phase, coeffs, phase, optimize=True)
    return np.real(vals) / grid.box_length**2


def _oracle_fields(z: VelocityField, m: int):
    grid = z.grid
    ik = 1j * grid.wavevectors
    u = _direct_evaluate(grid, z.coeffs, m)
    g = np.empty((2, 2, m, m))
    for i in range(2):
        for j in range(2):
            g[i, j] = _direct_evaluate(grid, ik[j] * z.coeffs[i], m)
    return u, g


def oracle_weak_form(op_tag: str, z: VelocityField, y: VelocityField, w: VelocityField | None = None,
                     refine: int = 4) -> float:
    """Weak form of an operator by direct quadrature on a refined grid.

    ``A``: ``integral grad z : grad y``; ``B``: ``integral (z . grad) w . y``
    with ``w`` defaulting to ``y``; ``J``: ``(1/2) integral E(z)E(z) : E(y)``;
    ``K``: ``(1/2) integral |E(z)|^2 E(z) : E(y)``.
    """
    if op_tag not in {"A", "B", "J", "K"}:
        raise ConfigurationError(f"unknown operator tag {op_tag!r}")
    grid = _check_grid(z, y) if w is None else _check_grid(z, y, w)
    m = refine * grid.n_modes
    dx2 = (grid.box_length / m) ** 2
    uz, gz = _oracle_fields(z, m)
    uy, gy = _oracle_fields(y, m)
    if op_tag == "A":
        return float((gz * gy).sum() * dx2)
    if op_tag == "B":
        gw = gy if w is None else _oracle_fields(w, m)[1]
        conv = np.einsum("jab,ijab->iab", uz, gw)
        return float((conv * uy).sum() * dx2)
    ez = gz + gz.transpose(1, 0, 2, 3)
    ey = gy + gy.transpose(1, 0, 2, 3)
    if op_tag == "J":
        flux = np.einsum("ikab,kjab->ijab", ez, ez)
    else:
        flux = (ez**2).sum(axis=(0, 1)) * ez
    return float(0.5 * (flux * ey).sum() * dx2)


# identities ----------------------------------------------------------------


def _padded_strain(z: VelocityField, m: int) -> np.ndarray:
    e = z.grid.to_physical(sym_gradient_coeffs(z.grid, z.coeffs), m)
    return e


def monotonicity_sides(z1: VelocityField, z2: VelocityField, beta: float):
    """Both sides of the cubic-stress monotonicity identity.

    Returns ``(lhs, rhs)`` with ``lhs = beta <K(z1) - K(z2), z1 - z2>`` from
    the spectral kernel and

        rhs = (beta/4) int (|E1|^2 - |E2|^2)^2 + (beta/4) int |E(z1 - z2)|^2 (|E1|^2 + |E2|^2)

    by quadrature on the ``2n`` grid (exact for these polynomials).
    """
    grid = _check_grid(z1, z2)
    d = z1 - z2
    k1 = stress_k_coeffs(grid, z1.coeffs)
    k2 = stress_k_coeffs(grid, z2.coeffs)
    lhs = beta * float(inner_product(grid, k1 - k2, d.coeffs))
    m = grid.cubic_size
    s1 = frobenius_sq(_padded_strain(z1, m))
    s2 = frobenius_sq(_padded_strain(z2, m))
    sd = frobenius_sq(_padded_strain(d, m))
    w = (grid.box_length / m) ** 2
    rhs = 0.25 * beta * (((s1 - s2) ** 2).sum() + (sd * (s1 + s2)).sum()) * w
    return lhs, float(rhs)


def j_difference_bound(z1: VelocityField, z2: VelocityField, alpha: float):
    """``(|alpha <J(z1) - J(z2), z1 - z2>|, (|alpha|/2) int |E(d)|^2 (|E1| + |E2|))``."""
    grid = _check_grid(z1, z2)
    d = z1 - z2
    jd = stress_j_coeffs(grid, z1.coeffs) - stress_j_coeffs(grid, z2.coeffs)
    lhs = abs(alpha * float(inner_product(grid, jd, d.coeffs)))
    m = grid.cubic_size
    s1 = np.sqrt(frobenius_sq(_padded_strain(z1, m)))
    s2 = np.sqrt(frobenius_sq(_padded_strain(z2, m)))
    sd = frobenius_sq(_padded_strain(d, m))
    rhs = 0.5 * abs(alpha) * (sd * (s1 + s2)).sum() * (grid.box_length / m) ** 2
    return lhs, float(rhs)


def coercivity_margin(z: VelocityField, nu: float, alpha: float, beta: float, upsilon: float) -> float:
    """Slack in the combined coercivity bound for the dissipative terms.

    Returns ``D - |alpha Y^-1 <J(z), z>| - eps0 * D`` with
    ``D = nu ||E||_2^2 / 2 + (beta/2) Y^-2 ||E||_4^4``, which is
    nonnegative whenever ``alpha^2 < 2 nu beta``.
    """
    grid = z.grid
    eps0 = 1.0 - math.sqrt(alpha * alpha / (2 * beta * nu))
    m = grid.cubic_size
    e = _padded_strain(z, m)
    w = (grid.box_length / m) ** 2
    e_l2 = float(frobenius_sq(e).sum() * w)
    e_l4 = float((frobenius_sq(e) ** 2).sum() * w)
    jz = abs(alpha / upsilon * float(inner_product(grid, stress_j_coeffs(grid, z.coeffs), z.coeffs)))
    dissipation = 0.5 * nu * e_l2 + 0.5 * beta * e_l4 / upsilon**2
    return dissipation - jz - eps0 * dissipation


def strain_matrices(z: VelocityField, size: int | None = None) -> np.ndarray:
    """Full ``(2, 2, m, m)`` strain tensor, a convenience for diagnostics."""
    e = z.grid.to_physical(sym_gradient_coeffs(z.grid, z.coeffs), size)
    return expand_symmetric(e)
