"""Closed-form spin-flip rates and T1 for donor-bound electrons.

Rates follow the admixture (spin-orbit) mechanism with piezoelectric phonon
coupling in an isotropic elastic medium::

    Gamma(B || c) = Lambda * D1**3 * D2**2 / (hbar * E1s**4)
    Gamma(B _|_ c) = Lambda * D1**5 / (2 * hbar * E1s**4)

with D1 = g mu_B B and D2 = D1 - hbar*omega_c / 2, and the finite-temperature
relaxation time T1 = tanh(gamma / 2) / Gamma, gamma = D1 / (k_B T).
"""
from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .material import CONSTANTS, DerivedDonorParameters, MaterialParameters, PhysicalConstants

LWA_WARN_QA0 = 0.3


class LWAWarning(UserWarning):
    """q a0 is not small; the long-wave approximation is stretched."""


class Geometry(str, enum.Enum):
    FARADAY = "faraday"   # B parallel to c
    VOIGT = "voigt"       # B perpendicular to c

    @classmethod
    def parse(cls, value: "Geometry | str") -> "Geometry":
        if isinstance(value, Geometry):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"geometry must be 'faraday' or 'voigt', got {value!r}") from None


@dataclass(frozen=True)
class EnergyScales:
    B: float
    delta1: float          # eV
    hbar_omega_c: float    # eV
    delta2: float          # eV
    q_l: float             # 1/m
    q_t: float             # 1/m
    qa0_l: float
    qa0_t: float


@dataclass(frozen=True)
class RatePoint:
    B: float
    geometry: Geometry
    gamma_down_up: float
    T: float
    n_ph: float
    t1: float
    delta1: float = math.nan
    delta2: float = math.nan
    E1s: float = math.nan


def energy_scales(mat: MaterialParameters, derived: DerivedDonorParameters, B: float,
                  constants: PhysicalConstants = CONSTANTS) -> EnergyScales:
    if B < 0:
        raise ValueError("B must be non-negative")
    delta1 = mat.g_e * constants.mu_B * B
    # hbar e B / m*, converted J -> eV by the 1/e
    hbar_wc = constants.hbar_Js * B / (mat.m_star_ratio * constants.m0)
    delta2 = delta1 - hbar_wc / 2
    q_l = delta1 / (constants.hbar * mat.s_l)
    q_t = delta1 / (constants.hbar * mat.s_t)
    return EnergyScales(B=B, delta1=delta1, hbar_omega_c=hbar_wc, delta2=delta2,
                        q_l=q_l, q_t=q_t, qa0_l=q_l * derived.a0, qa0_t=q_t * derived.a0)


def lambda_coefficient(mat: MaterialParameters, interference: bool = False,
                       constants: PhysicalConstants = CONSTANTS) -> float:
    """Dimensionless coupling constant Lambda.

    By default this is the published closed form, which keeps only the
    squared piezo-constant terms of the angular average. ``interference=True``
    adds the h_i h_j cross terms that the exact average over phonon
    directions also produces (the phonon-quadrature oracle reproduces this
    variant to rounding error).
    """
    bracket = sum(lambda_branch_terms(mat, interference))
    e_alpha = constants.e_charge * constants.to_joule(mat.alpha_so)
    return 9 * e_alpha**2 / (448 * math.pi * mat.rho * constants.hbar_Js**3) * bracket


def lambda_branch_terms(mat: MaterialParameters, interference: bool = False) -> tuple[float, float]:
    """Longitudinal and transverse bracket terms of Lambda (s^5 m^-5 V^2 m^-2)."""
    h33, h31, h15 = mat.h33, mat.h31, mat.h15
    lt = 5 * h33**2 + 8 * h31**2 + 32 * h15**2
    tt = 4 * h33**2 + 4 * h31**2 + 52 * h15**2
    if interference:
        lt += 8 * h31 * h33 + 16 * h15 * h33 + 32 * h15 * h31
        tt += -8 * h31 * h33 + 8 * h15 * h33 - 8 * h15 * h31
    return lt / (5 * mat.s_l**5), tt / (5 * mat.s_t**5)


def spin_flip_rate(mat: MaterialParameters, derived: DerivedDonorParameters, B: float,
                   geometry: Geometry | str, interference: bool = False,
                   constants: PhysicalConstants = CONSTANTS) -> float:
    """Zero-temperature phonon-emission rate Gamma_{down,up} in 1/s."""
    geometry = Geometry.parse(geometry)
    es = energy_scales(mat, derived, B, constants)
    lam = lambda_coefficient(mat, interference, constants)
    # eV**5 / (eV s * eV**4) -> 1/s
    if geometry is Geometry.FARADAY:
        return lam * es.delta1**3 * es.delta2**2 / (constants.hbar * derived.E1s**4)
    return lam * es.delta1**5 / (2 * constants.hbar * derived.E1s**4)


def phonon_occupation(delta: float, T: float, constants: PhysicalConstants = CONSTANTS) -> float:
    """Bose occupation at energy ``delta`` (eV); 0 at T = 0."""
    if T == 0:
        return 0.0
    if delta == 0:
        return math.inf
    return _bose(delta / (constants.k_B * T))


def _bose(gam: float) -> float:
    # written in e^-gamma so large gamma underflows to 0 instead of overflowing
    return math.exp(-gam) / -math.expm1(-gam)


def t1(gamma_down_up: float, B: float, T: float, g: float = 2.0,
       geometry: Geometry | str = Geometry.VOIGT,
       constants: PhysicalConstants = CONSTANTS) -> RatePoint:
    """Relaxation time from the zero-temperature rate and the bath temperature."""
    if not gamma_down_up > 0:
        raise ValueError("gamma_down_up must be positive")
    if T < 0:
        raise ValueError("T must be non-negative")
    if B < 0:
        raise ValueError("B must be non-negative")
    delta1 = g * constants.mu_B * B
    if T == 0:
        return RatePoint(B, Geometry.parse(geometry), gamma_down_up, T, 0.0, 1.0 / gamma_down_up, delta1)
    if B == 0:
        raise ValueError("B = 0 with T > 0 leaves the thermal factor undefined")
    gam = delta1 / (constants.k_B * T)
    n_ph = _bose(gam)
    t1_value = math.tanh(gam / 2) / gamma_down_up
    return RatePoint(B, Geometry.parse(geometry), gamma_down_up, T, n_ph, t1_value, delta1)


def sweep_field(mat: MaterialParameters, derived: DerivedDonorParameters,
                geometry: Geometry | str, B_grid: Sequence[float], T: float,
                interference: bool = False,
                constants: PhysicalConstants = CONSTANTS) -> list[RatePoint]:
    """T1 over a sorted grid of positive fields.

    Emits :class:`LWAWarning` once if any grid point has q a0 > 0.3 for
    transverse phonons.
    """
    geometry = Geometry.parse(geometry)
    grid = np.asarray(list(B_grid), dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("B_grid must be a non-empty list of fields")
    if np.any(~np.isfinite(grid)) or np.any(grid <= 0):
        raise ValueError("B_grid values must be strictly positive")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("B_grid must be sorted ascending without duplicates")

    points = []
    worst_qa0 = 0.0
    for B in grid:
        es = energy_scales(mat, derived, float(B), constants)
        worst_qa0 = max(worst_qa0, es.qa0_t)
        rate = spin_flip_rate(mat, derived, float(B), geometry, interference, constants)
        rp = t1(rate, float(B), T, mat.g_e, geometry, constants)
        points.append(RatePoint(B=float(B), geometry=geometry, gamma_down_up=rate, T=T,
                                n_ph=rp.n_ph, t1=rp.t1, delta1=es.delta1, delta2=es.delta2,
                                E1s=derived.E1s))
    if worst_qa0 > LWA_WARN_QA0:
        warnings.warn(f"q*a0 for transverse phonons reaches {worst_qa0:.3f} (> {LWA_WARN_QA0}); "
                      "long-wave approximation is marginal", LWAWarning, stacklevel=2)
    return points


SWEEP_HEADER = ["B_T", "geometry", "delta1_eV", "delta2_eV", "gamma_s1", "n_ph", "T1_s", "E1s_eV"]


def _g12(x: float) -> str:
    return format(x, ".12g")


def write_sweep_csv(points: Iterable[RatePoint], stream: TextIO, run_id: str | None = None) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SWEEP_HEADER + (["run_id"] if run_id else []))
    for p in points:
        row = [_g12(p.B), p.geometry.value, _g12(p.delta1), _g12(p.delta2), _g12(p.gamma_down_up),
               _g12(p.n_ph), _g12(p.t1), _g12(p.E1s)]
        writer.writerow(row + ([run_id] if run_id else []))
