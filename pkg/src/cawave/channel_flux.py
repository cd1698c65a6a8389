"""Membrane flux laws for the cytosol/ER calcium model.

All fluxes are in uM * um / s and act as Neumann data on the 1D radial
domains.  Sign conventions: plasma_flux > 0 carries calcium into the cytosol
across the outer membrane; er_flux > 0 carries calcium out of the cytosol
into the ER across the membrane at the shared interface (the ER equation
receives +er_flux, the cytosol equation -er_flux).

Parameter defaults reproduce the reference axon cross-section scenario used
throughout the test-suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Concentrations at or below this are treated as a broken ER state: the SERCA
# term divides by u_e, so the model is meaningless there.
ER_CONCENTRATION_FLOOR = 1e-12


def _require_finite(name, value):
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class PlasmaParams:
    """Outer-membrane pump/exchanger/leak coefficients.

    pmca_scale / pmca_k  : PMCA pump magnitude (uM*um/s) and Hill constant (uM)
    ncx_scale / ncx_k    : Na/Ca exchanger magnitude and Michaelis constant
    leak                 : leak conductance (um/s)
    c_out                : extracellular calcium concentration (uM)
    """

    pmca_scale: float = 8.5
    pmca_k: float = 0.06
    ncx_scale: float = 37.6
    ncx_k: float = 1.8
    leak: float = 0.0045
    c_out: float = 1000.0

    def __post_init__(self):
        for name in ("pmca_scale", "ncx_scale", "leak", "c_out"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.pmca_k <= 0 or self.ncx_k <= 0:
            raise ValueError("Hill/Michaelis constants must be positive")


@dataclass(frozen=True)
class ErParams:
    """ER-membrane coefficients: RyR conductance, SERCA pump, leak.

    ryr_scale   : conductance of the open RyR population (um/s)
    serca_scale : SERCA magnitude (uM^2*um/s, divided by u_e)
    serca_k     : SERCA Michaelis constant (uM)
    leak        : ER leak conductance (um/s)
    """

    ryr_scale: float = 0.829468
    serca_scale: float = 11000.0
    serca_k: float = 0.18
    leak: float = 0.038

    def __post_init__(self):
        if self.ryr_scale < 0 or self.serca_scale < 0 or self.leak < 0:
            raise ValueError("conductances must be nonnegative")
        if self.serca_k <= 0:
            raise ValueError("serca_k must be positive")


@dataclass(frozen=True)
class BufferParams:
    """Single immobile buffer: total concentration and rate constants."""

    total: float = 40.0
    unbind_rate: float = 16.65
    bind_rate: float = 27.0

    def __post_init__(self):
        if self.total < 0 or self.unbind_rate < 0 or self.bind_rate < 0:
            raise ValueError("buffer parameters must be nonnegative")


def pmca(u: float, params: PlasmaParams = PlasmaParams()) -> float:
    """PMCA pump rate scale*u^2/(k^2 + u^2); outward, saturating."""
    _require_finite("u", u)
    if u < 0:
        raise ValueError(f"negative cytosolic concentration: {u}")
    return params.pmca_scale * u * u / (params.pmca_k**2 + u * u)


def ncx(u: float, params: PlasmaParams = PlasmaParams()) -> float:
    """Na/Ca exchanger rate scale*u/(k + u); outward, saturating."""
    _require_finite("u", u)
    if u < 0:
        raise ValueError(f"negative cytosolic concentration: {u}")
    return params.ncx_scale * u / (params.ncx_k + u)


def plasma_flux(u: float, params: PlasmaParams = PlasmaParams()) -> float:
    """Net outer-membrane flux into the cytosol: leak in, PMCA and NCX out."""
    return params.leak * (params.c_out - u) - ncx(u, params) - pmca(u, params)


def er_flux(
    u: float,
    u_e: float,
    open_probability: float,
    params: ErParams = ErParams(),
) -> float:
    """Net ER-membrane flux, positive from cytosol into the ER.

    RyR release (open fraction times the concentration gap) and the ER leak
    both drain the store when u_e > u; SERCA pumps against them.
    """
    _require_finite("u", u)
    _require_finite("u_e", u_e)
    if u < 0:
        raise ValueError(f"negative cytosolic concentration: {u}")
    if u_e <= ER_CONCENTRATION_FLOOR:
        raise ValueError(f"ER concentration out of range: {u_e}")
    if not 0.0 <= open_probability <= 1.0:
        raise ValueError(f"open probability outside [0, 1]: {open_probability}")
    release = params.ryr_scale * open_probability * (u - u_e)
    serca = params.serca_scale * u / ((params.serca_k + u) * u_e)
    leak = params.leak * (u_e - u)
    return release + serca - leak


def buffer_reaction(u: float, b: float, params: BufferParams = BufferParams()) -> float:
    """Reaction rate shared by calcium and free buffer: unbinding minus binding."""
    _require_finite("u", u)
    _require_finite("b", b)
    if u < 0:
        raise ValueError(f"negative cytosolic concentration: {u}")
    if b < -1e-9 or b > params.total + 1e-9:
        raise ValueError(f"free buffer outside [0, {params.total}]: {b}")
    return params.unbind_rate * (params.total - b) - params.bind_rate * b * u
