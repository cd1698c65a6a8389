r"""Piecewise-linear finite elements on uniform 1D radial meshes.

Radially symmetric diffusion in polar coordinates contributes a convection-like
term (1/r) du/dr.  Testing it against the nodal hat functions gives the matrix

    A[i, j] = \int (1/r) phi_j'(r) phi_i(r) dr,

which is perfectly regular,

    \int_a^b (1/r) phi(r) dr  =  (1/h) * (b ln(b/a) - h)        (left hat)
                               =  (1/h) * (h - a ln(b/a))        (right hat)

for every element [a, b] with a > 0, but hypersingular on the element touching
r = 0.  There the two offending entries are assigned their Hadamard
finite-part values

    A[0, 0] = (1 - ln h) / h,        A[0, 1] = (ln h - 1) / h,

obtained from lim_{eps->0} [ \int_eps^h f(r)/r dr + f(0) ln(eps) ].  All other
entries of the first element are ordinary integrals because the right-hand hat
vanishes at the origin.

Mass and stiffness matrices are the familiar unweighted P1 element matrices;
no r-weight appears in any inner product.  All matrices are tridiagonal and
are solved with the Thomas algorithm, falling back to banded LU with partial
pivoting when a pivot degenerates.  Everything in this module is pure:
functions return fresh arrays and never mutate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularMatrixError

# Relative pivot floor for the Thomas sweep; below this we refactor with
# partial pivoting instead of dividing by a nearly-zero pivot.
PIVOT_RTOL = 1e-14


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh on [r_start, r_end] with num_elements linear elements."""

    r_start: float
    r_end: float
    num_elements: int
    h: float
    nodes: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.num_elements + 1

    @property
    def touches_origin(self) -> bool:
        return self.r_start == 0.0


def build_mesh(r_start: float, r_end: float, num_elements: int) -> Mesh1D:
    """Build a uniform mesh; r_start may be 0 (ER domain) or positive."""
    if not (math.isfinite(r_start) and math.isfinite(r_end)):
        raise ValueError("mesh endpoints must be finite")
    if r_start < 0.0:
        raise ValueError(f"r_start must be nonnegative, got {r_start}")
    if r_end <= r_start:
        raise ValueError(f"need r_end > r_start, got [{r_start}, {r_end}]")
    if num_elements < 1:
        raise ValueError(f"need at least one element, got {num_elements}")
    nodes = np.linspace(r_start, r_end, num_elements + 1)
    h = (r_end - r_start) / num_elements
    return Mesh1D(r_start, r_end, num_elements, h, nodes)


@dataclass
class BandedMatrix:
    """Tridiagonal matrix stored as (sub, main, super) diagonal bands.

    Treated as immutable after construction; assembly routines always
    allocate fresh band arrays.
    """

    lower: np.ndarray  # length n-1, entry k sits at (k+1, k)
    diag: np.ndarray  # length n
    upper: np.ndarray  # length n-1, entry k sits at (k, k+1)

    def __post_init__(self):
        n = self.diag.shape[0]
        if self.lower.shape[0] != n - 1 or self.upper.shape[0] != n - 1:
            raise ValueError("band lengths inconsistent with matrix dimension")

    @property
    def dim(self) -> int:
        return self.diag.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[:-1] += self.upper * x[1:]
        y[1:] += self.lower * x[:-1]
        return y

    def to_dense(self) -> np.ndarray:
        n = self.dim
        dense = np.zeros((n, n))
        dense[np.arange(n), np.arange(n)] = self.diag
        dense[np.arange(n - 1), np.arange(1, n)] = self.upper
        dense[np.arange(1, n), np.arange(n - 1)] = self.lower
        return dense

    def row_sums(self) -> np.ndarray:
        s = self.diag.copy()
        s[:-1] += self.upper
        s[1:] += self.lower
        return s


def _empty_bands(n: int):
    return np.zeros(n - 1), np.zeros(n), np.zeros(n - 1)


def assemble_mass(mesh: Mesh1D) -> BandedMatrix:
    """Mass matrix \\int phi_i phi_j dr (element blocks h/6 * [[2,1],[1,2]])."""
    lower, diag, upper = _empty_bands(mesh.num_nodes)
    h = mesh.h
    for e in range(mesh.num_elements):
        diag[e] += h / 3.0
        diag[e + 1] += h / 3.0
        upper[e] += h / 6.0
        lower[e] += h / 6.0
    return BandedMatrix(lower, diag, upper)


def assemble_stiffness(mesh: Mesh1D) -> BandedMatrix:
    """Stiffness matrix \\int phi_i' phi_j' dr (element blocks 1/h * [[1,-1],[-1,1]])."""
    lower, diag, upper = _empty_bands(mesh.num_nodes)
    inv_h = 1.0 / mesh.h
    for e in range(mesh.num_elements):
        diag[e] += inv_h
        diag[e + 1] += inv_h
        upper[e] -= inv_h
        lower[e] -= inv_h
    return BandedMatrix(lower, diag, upper)


def _hat_over_r(a: float, b: float):
    """Exact integrals of (left hat)/r and (right hat)/r over [a, b], a > 0."""
    h = b - a
    log_ba = math.log(b / a)
    j_left = (b * log_ba - h) / h
    j_right = (h - a * log_ba) / h
    return j_left, j_right


def _convection_element(a: float, b: float, singular: bool):
    """2x2 element block of \\int (1/r) phi_m' phi_l dr on [a, b].

    With singular=True the element starts at a = 0 and the left-hat integral
    takes its Hadamard finite-part value (1/h)(h ln h - h); the right-hat
    integral is an ordinary one because that hat vanishes at the origin.
    """
    h = b - a
    if singular:
        j_left = math.log(h) - 1.0
        j_right = 1.0
    else:
        j_left, j_right = _hat_over_r(a, b)
    inv_h = 1.0 / h
    return np.array(
        [
            [-j_left * inv_h, j_left * inv_h],
            [-j_right * inv_h, j_right * inv_h],
        ]
    )


def assemble_convection(mesh: Mesh1D) -> BandedMatrix:
    """Convection matrix A[i,j] = \\int (1/r) phi_j' phi_i dr.

    On a mesh touching the origin the first element's left-hat row is
    hypersingular and carries Hadamard finite-part values; everywhere else the
    entries come from the closed-form logarithmic antiderivatives.  Every row
    sums to zero because the hat functions partition unity.
    """
    lower, diag, upper = _empty_bands(mesh.num_nodes)
    nodes = mesh.nodes
    for e in range(mesh.num_elements):
        a = float(nodes[e])
        b = float(nodes[e + 1])
        block = _convection_element(a, b, singular=(e == 0 and mesh.touches_origin))
        diag[e] += block[0, 0]
        upper[e] += block[0, 1]
        lower[e] += block[1, 0]
        diag[e + 1] += block[1, 1]
    return BandedMatrix(lower, diag, upper)


def singular_entry_values(h: float):
    """The two finite-part entries of the first row on an origin mesh."""
    if h <= 0.0:
        raise ValueError("element size must be positive")
    return (1.0 - math.log(h)) / h, (math.log(h) - 1.0) / h


def _thomas(lower, diag, upper, rhs, pivot_floor: float):
    """Thomas elimination on plain Python lists; None signals a tiny pivot."""
    n = len(diag)
    piv = diag[0]
    if abs(piv) <= pivot_floor:
        return None
    cp = [0.0] * (n - 1)
    xp = [0.0] * n
    xp[0] = rhs[0] / piv
    for i in range(1, n):
        cp[i - 1] = upper[i - 1] / piv
        piv = diag[i] - lower[i - 1] * cp[i - 1]
        if abs(piv) <= pivot_floor:
            return None
        xp[i] = (rhs[i] - lower[i - 1] * xp[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        xp[i] -= cp[i] * xp[i + 1]
    return xp


def _band_magnitude(lower, diag, upper) -> float:
    mags = [abs(float(np.max(np.abs(diag))))]
    if len(lower):
        mags.append(float(np.max(np.abs(lower))))
        mags.append(float(np.max(np.abs(upper))))
    return max(mags)


def solve_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a tridiagonal system given raw bands (fast path for steppers)."""
    scale = _band_magnitude(lower, diag, upper)
    if scale == 0.0:
        raise SingularMatrixError("all matrix bands are zero")
    x = _thomas(list(lower), list(diag), list(upper), list(rhs), PIVOT_RTOL * scale)
    if x is not None:
        return np.asarray(x)
    # Pivot degenerated: refactor with partial pivoting via LAPACK.
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    try:
        return scipy.linalg.solve_banded((1, 1), ab, np.asarray(rhs))
    except scipy.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"tridiagonal solve failed: {exc}") from exc


def solve_banded(matrix: BandedMatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve matrix @ x = rhs.

    Thomas elimination first; if a pivot falls below 1e-14 relative to the
    largest band magnitude the system is refactored with banded LU and
    partial pivoting, and only if that also fails is the matrix declared
    singular.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (matrix.dim,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({matrix.dim},)")
    return solve_tridiagonal(matrix.lower, matrix.diag, matrix.upper, rhs)
