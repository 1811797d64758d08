"""Spatial discretization on an interval with homogeneous Dirichlet ends.

State vectors hold the interior nodes only; the boundary values are
identically zero and never stored.  All operators below act on such
interior vectors:

    inner(x, y)  = h * sum_j x_j conj(y_j)      (antilinear in y)
    lap          = 3-point Laplacian, ghost values 0 outside the interval
    grad         = central difference, same ghost convention
    B2hat x      = -i b2(x) x                   (bilinear coupling operator)
    M1 x         = -2 b2' x' - b2'' x           (first commutator [A_hat, B2hat])
    [M1, B2hat]x = 2i (b2')^2 x

b2 is the real control potential.  Closed-form families carry analytic
first and second derivatives; sampled potentials fall back to central
differences of the samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpatialGrid",
    "Potential",
    "bump_potential",
    "sine_potential",
    "zero_potential",
    "sampled_potential",
    "inner",
    "l2_norm",
    "apply_laplacian",
    "apply_gradient",
    "apply_B2hat",
    "apply_M1",
    "apply_M1_adjoint",
    "apply_M1_B2_commutator",
    "laplacian_matrix",
    "m1_matrix",
]


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on (x_lo, x_hi) with n_x cells, interior nodes only."""

    x_lo: float
    x_hi: float
    n_x: int

    def __post_init__(self):
        if self.n_x < 2:
            raise ValueError(f"n_x must be >= 2, got {self.n_x}")
        if not self.x_hi > self.x_lo:
            raise ValueError(f"need x_hi > x_lo, got ({self.x_lo}, {self.x_hi})")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_x

    @property
    def n_interior(self) -> int:
        return self.n_x - 1

    @property
    def x(self) -> np.ndarray:
        """Interior node coordinates, length n_x - 1."""
        return self.x_lo + self.h * np.arange(1, self.n_x)

    def refined(self, factor: int = 2) -> "SpatialGrid":
        return SpatialGrid(self.x_lo, self.x_hi, self.n_x * factor)


def inner(grid: SpatialGrid, x: np.ndarray, y: np.ndarray) -> complex:
    """Rectangle-rule L2 pairing, linear in x and antilinear in y."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch in inner: {x.shape} vs {y.shape}")
    return grid.h * complex(np.dot(x, np.conj(y)))


def l2_norm(grid: SpatialGrid, x: np.ndarray) -> float:
    return float(np.sqrt(grid.h) * np.linalg.norm(x))


def apply_laplacian(grid: SpatialGrid, x: np.ndarray) -> np.ndarray:
    """3-point Laplacian with zero Dirichlet ghost values."""
    out = -2.0 * x.astype(np.result_type(x, float), copy=True)
    out[:-1] += x[1:]
    out[1:] += x[:-1]
    return out / grid.h**2


def apply_gradient(grid: SpatialGrid, x: np.ndarray) -> np.ndarray:
    """Central difference with zero Dirichlet ghost values."""
    out = np.zeros_like(x, dtype=np.result_type(x, float))
    out[:-1] += x[1:]
    out[1:] -= x[:-1]
    return out / (2.0 * grid.h)


def laplacian_matrix(grid: SpatialGrid) -> np.ndarray:
    """Dense 3-point Laplacian, for small-grid cross checks only."""
    n = grid.n_interior
    m = -2.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
    return m / grid.h**2


@dataclass(frozen=True)
class Potential:
    """b2 samples on the interior nodes together with b2' and b2''."""

    values: np.ndarray
    grad: np.ndarray
    lap: np.ndarray
    boundary_compatible: bool = True
    label: str = "custom"

    def __post_init__(self):
        for name in ("values", "grad", "lap"):
            v = getattr(self, name)
            if np.iscomplexobj(v):
                raise ValueError(f"potential {name} must be real")
        if not (self.values.shape == self.grad.shape == self.lap.shape):
            raise ValueError("potential sample arrays must share one shape")


def bump_potential(grid: SpatialGrid, amplitude: float = 1.0) -> Potential:
    """b2(x) = c * s^2 (1-s)^2 with s the normalized coordinate in (0, 1).

    Vanishes to first order at both ends, so it sits in the admissible
    potential class without caveats.
    """
    L = grid.x_hi - grid.x_lo
    s = (grid.x - grid.x_lo) / L
    vals = amplitude * s**2 * (1.0 - s) ** 2
    dvals = amplitude * (2.0 * s - 6.0 * s**2 + 4.0 * s**3) / L
    d2vals = amplitude * (2.0 - 12.0 * s + 12.0 * s**2) / L**2
    return Potential(vals, dvals, d2vals, boundary_compatible=True, label="bump")


def sine_potential(grid: SpatialGrid, amplitude: float = 1.0) -> Potential:
    """b2(x) = c * sin(pi s).  Nonzero slope at the ends, flagged as such."""
    L = grid.x_hi - grid.x_lo
    s = (grid.x - grid.x_lo) / L
    vals = amplitude * np.sin(np.pi * s)
    dvals = amplitude * np.pi / L * np.cos(np.pi * s)
    d2vals = -amplitude * (np.pi / L) ** 2 * np.sin(np.pi * s)
    return Potential(vals, dvals, d2vals, boundary_compatible=False, label="sine")


def zero_potential(grid: SpatialGrid) -> Potential:
    z = np.zeros(grid.n_interior)
    return Potential(z, z.copy(), z.copy(), boundary_compatible=True, label="zero")


def sampled_potential(
    grid: SpatialGrid,
    values: np.ndarray,
    grad: np.ndarray | None = None,
    lap: np.ndarray | None = None,
) -> Potential:
    """Potential from raw samples; missing derivatives come from central
    differences of the samples (zero ghost values at the ends)."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_interior,):
        raise ValueError(
            f"expected {grid.n_interior} potential samples, got {values.shape}"
        )
    if grad is None:
        grad = apply_gradient(grid, values)
    if lap is None:
        lap = apply_laplacian(grid, values)
    return Potential(
        values, np.asarray(grad, float), np.asarray(lap, float), label="sampled"
    )


def apply_B2hat(pot: Potential, x: np.ndarray) -> np.ndarray:
    """Coupling operator (B2hat x)(x) = -i b2(x) x."""
    return -1j * pot.values * x


def apply_M1(grid: SpatialGrid, pot: Potential, x: np.ndarray) -> np.ndarray:
    """First commutator M1 = [A_hat, B2hat]:  M1 x = -2 b2' x' - b2'' x."""
    return -2.0 * pot.grad * apply_gradient(grid, x) - pot.lap * x


def apply_M1_adjoint(grid: SpatialGrid, pot: Potential, x: np.ndarray) -> np.ndarray:
    """Exact discrete adjoint of apply_M1 under inner().

    M1 assembles as -2 diag(b2') D - diag(b2'') with D the central-difference
    matrix; D^T = -D holds exactly including the Dirichlet truncation, so the
    transpose is 2 D diag(b2') - diag(b2''), applied here stencil-wise.
    Consistent with 2 b2' x' + b2'' x at O(h^2).
    """
    return 2.0 * apply_gradient(grid, pot.grad * x) - pot.lap * x


def apply_M1_B2_commutator(pot: Potential, x: np.ndarray) -> np.ndarray:
    """Second commutator [M1, B2hat] x = 2i (b2')^2 x."""
    return 2j * pot.grad**2 * x


def m1_matrix(grid: SpatialGrid, pot: Potential) -> np.ndarray:
    """Dense assembly of M1, for adjoint and commutator cross checks."""
    n = grid.n_interior
    d = (np.eye(n, k=1) - np.eye(n, k=-1)) / (2.0 * grid.h)
    return -2.0 * np.diag(pot.grad) @ d - np.diag(pot.lap)


def apply_M1_discrete(grid: SpatialGrid, pot: Potential, x: np.ndarray) -> np.ndarray:
    """Commutator of the assembled operators: [-lap_h, b2] x.

    Agrees with apply_M1 to O(h^2), but closes the discrete operator algebra
    exactly.  Its matrix is antisymmetric (commutator of two symmetric
    matrices), so the exact adjoint is the negation; the Goh-transform
    pipelines rely on that.  The sampled-derivative form apply_M1 would leave
    an O(h^2) residue there that no amount of time refinement removes.
    """
    b2 = pot.values
    return -(apply_laplacian(grid, b2 * x) - b2 * apply_laplacian(grid, x))


def apply_M1_B2_commutator_discrete(
    grid: SpatialGrid, pot: Potential, x: np.ndarray
) -> np.ndarray:
    """Nested exact commutator [M1, B2hat] x with M1 in assembled form.

    Consistent with 2i (b2')^2 x at O(h^2); symmetric real matrix times -i.
    """
    b2 = pot.values
    return -1j * (
        apply_M1_discrete(grid, pot, b2 * x) - b2 * apply_M1_discrete(grid, pot, x)
    )
