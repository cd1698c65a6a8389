r"""Convergence verification for the radial diffusion operator on [0, L].

Manufactured-solution studies for the operator -D (w'' + w'/r) discretized
with P1 elements and the finite-part treatment of the 1/r term at the origin.
Two cases:

  steady    -D (v'' + v'/r) = s           with v(r) = cos(pi r / L)
  transient w_t - D (w'' + w'/r) = s      with w(r, t) = e^{-t} cos(pi r / L)

Both choices have v'(0) = v'(L) = 0, so the natural boundary condition at the
origin is exact.  The steady problem with two Neumann ends carries a constant
nullspace; it is pinned by a Dirichlet row at r = L.  The transient case uses
backward Euler with dt proportional to h^2 so the observed rate isolates the
spatial order.  Errors are discrete L2 norms sqrt(e^T M e) against the nodal
interpolant; second order is expected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fem_core

DEFAULT_MESHES = (10, 20, 40, 80, 160)
DEFAULT_DIFFUSIVITY = 220.0
DOMAIN_LENGTH = 1.5
TRANSIENT_HORIZON = 0.2


def exact_steady(r: np.ndarray, length: float = DOMAIN_LENGTH) -> np.ndarray:
    return np.cos(np.pi * r / length)


def steady_source(r: np.ndarray, diffusivity: float, length: float = DOMAIN_LENGTH) -> np.ndarray:
    """s = -D (v'' + v'/r) for v = cos(pi r / L), with the r=0 limit filled in."""
    k = np.pi / length
    r = np.asarray(r, dtype=float)
    out = diffusivity * k * k * np.cos(k * r)
    with np.errstate(invalid="ignore", divide="ignore"):
        radial = diffusivity * k * np.sin(k * r) / r
    radial = np.where(r == 0.0, diffusivity * k * k, radial)
    return out + radial


def _l2_error(mass: fem_core.BandedMatrix, err: np.ndarray) -> float:
    return float(math.sqrt(err @ mass.matvec(err)))


def steady_case_error(num_elements: int, diffusivity: float = DEFAULT_DIFFUSIVITY) -> float:
    """Solve the pinned steady problem on num_elements; return the L2 error."""
    mesh = fem_core.build_mesh(0.0, DOMAIN_LENGTH, num_elements)
    mass = fem_core.assemble_mass(mesh)
    stiff = fem_core.assemble_stiffness(mesh)
    conv = fem_core.assemble_convection(mesh)

    lower = diffusivity * (stiff.lower - conv.lower)
    diag = diffusivity * (stiff.diag - conv.diag)
    upper = diffusivity * (stiff.upper - conv.upper)
    rhs = mass.matvec(steady_source(mesh.nodes, diffusivity))

    # Dirichlet pin at r = L removes the Neumann nullspace
    diag[-1] = 1.0
    lower[-1] = 0.0
    rhs[-1] = exact_steady(np.array([mesh.nodes[-1]]))[0]

    solution = fem_core.solve_tridiagonal(lower, diag, upper, rhs)
    return _l2_error(mass, solution - exact_steady(mesh.nodes))


def transient_case_error(
    num_elements: int,
    diffusivity: float = DEFAULT_DIFFUSIVITY,
    horizon: float = TRANSIENT_HORIZON,
) -> float:
    """Backward-Euler run with dt = horizon (h/L)^2; L2 error at the horizon."""
    mesh = fem_core.build_mesh(0.0, DOMAIN_LENGTH, num_elements)
    mass = fem_core.assemble_mass(mesh)
    stiff = fem_core.assemble_stiffness(mesh)
    conv = fem_core.assemble_convection(mesh)

    num_steps = num_elements * num_elements  # horizon / (horizon (h/L)^2)
    dt = horizon / num_steps
    lower = mass.lower / dt + diffusivity * (stiff.lower - conv.lower)
    diag = mass.diag / dt + diffusivity * (stiff.diag - conv.diag)
    upper = mass.upper / dt + diffusivity * (stiff.upper - conv.upper)

    base = steady_source(mesh.nodes, diffusivity)
    profile = exact_steady(mesh.nodes)
    w = profile.copy()  # exact at t = 0
    for n in range(1, num_steps + 1):
        t_next = n * dt
        # s(r, t) = e^{-t} (steady_source(r) - cos(pi r / L))
        source = math.exp(-t_next) * (base - profile)
        w = fem_core.solve_tridiagonal(lower, diag, upper, mass.matvec(w / dt + source))
    return _l2_error(mass, w - math.exp(-horizon) * profile)


@dataclass(frozen=True)
class ConvergenceRow:
    case: str
    num_elements: int
    h: float
    l2_error: float
    order: float  # NaN on the coarsest mesh


def run_convergence_study(
    meshes: tuple = DEFAULT_MESHES, diffusivity: float = DEFAULT_DIFFUSIVITY
) -> list:
    """Errors and observed orders for both cases over the mesh sequence."""
    rows = []
    for case, runner in (("steady", steady_case_error), ("transient", transient_case_error)):
        prev = None
        for num in meshes:
            err = runner(num, diffusivity)
            order = math.nan if prev is None else math.log2(prev / err)
            rows.append(ConvergenceRow(case, num, DOMAIN_LENGTH / num, err, order))
            prev = err
    return rows


def write_convergence_csv(path, rows) -> None:
    with open(path, "w") as fh:
        fh.write("case,num_elements,h,l2_error,order\n")
        for row in rows:
            order = "" if math.isnan(row.order) else f"{row.order:.17g}"
            fh.write(
                f"{row.case},{row.num_elements},{row.h:.17g},{row.l2_error:.17g},{order}\n"
            )
