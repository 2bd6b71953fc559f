"""Zeeman-resolved PL spectra and PLE scans of the donor-bound exciton ensemble."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import voigt_profile

from .dynamics import (EnsembleSpec, LevelSystem, Optics,
                       _transition_energies, detection_vector, lorentzian, rate_matrix, steady_state)
from .material import CONSTANTS, MaterialParameters
from .relaxation import Geometry

# Ga donor satellite-band lines (eV); emitted as labels only
SATELLITE_LABELS = {"TES": 3.318, "1LO": 3.288, "1LO-TES": 3.247, "2LO": 3.214}

VISIBLE = {
    Geometry.FARADAY: ("sigma_plus", "sigma_minus"),
    Geometry.VOIGT: ("H_down", "H_up", "V_down", "V_up"),
}


@dataclass
class Spectrum:
    energy: np.ndarray
    expected: np.ndarray
    sampled: np.ndarray | None
    lines: dict[str, float]
    labels: dict[str, float] = field(default_factory=lambda: dict(SATELLITE_LABELS))
    metadata: dict = field(default_factory=dict)

    @property
    def err(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.sampled, 1))


def line_positions(geometry: Geometry | str, B: float, mat: MaterialParameters | None = None,
                   optics: Optics | None = None, line_center: float | None = None) -> dict[str, float]:
    """Energies of the optically visible transitions of one donor line."""
    geometry = Geometry.parse(geometry)
    mat = mat or MaterialParameters()
    optics = optics or Optics()
    if line_center is not None:
        optics = Optics(**{**optics.__dict__, "line_center": line_center})
    energies = _transition_energies(geometry, B, mat, optics)
    if B == 0:
        return {"zero_field": optics.line_center}
    return {name: energies[name] for name in VISIBLE[geometry]}


def simulate_spectrum(ensemble: EnsembleSpec, geometry: Geometry | str, B: float,
                      mat: MaterialParameters | None = None,
                      line_centers: Sequence[float] = (3.3599,), optics: Optics | None = None,
                      energy: np.ndarray | None = None, peak_counts: float | None = 1e4,
                      seed: int | None = None) -> Spectrum:
    """PL spectrum under above-gap excitation.

    Each visible transition is a Voigt profile: Gaussian of the ensemble's
    inhomogeneous FWHM convolved with the lifetime-limited Lorentzian. Both
    excited states are taken as equally populated, so line weights are the
    branching fractions. With ``peak_counts`` set, the spectrum is scaled to
    that maximum and Poisson-sampled.
    """
    geometry = Geometry.parse(geometry)
    if B < 0:
        raise ValueError("B must be non-negative")
    mat = mat or MaterialParameters()
    optics = optics or Optics()
    z = 1.0 / (optics.z_suppression + 1)
    weights = {"sigma_plus": 1 - z, "sigma_minus": 1 - z, "H_down": optics.voigt_h_fraction,
               "H_up": optics.voigt_h_fraction, "V_down": 1 - optics.voigt_h_fraction,
               "V_up": 1 - optics.voigt_h_fraction, "zero_field": 1.0}

    lines: dict[str, float] = {}
    for k, c in enumerate(line_centers):
        for name, e in line_positions(geometry, B, mat, optics, c).items():
            lines[name if len(line_centers) == 1 else f"{name}@{k}"] = e

    sigma_g = ensemble.sigma
    gamma_l = CONSTANTS.hbar / optics.radiative_lifetime / 2   # HWHM of the lifetime-limited line
    if energy is None:
        lo = min(lines.values()) - 6 * ensemble.inhomogeneous_fwhm
        hi = max(lines.values()) + 6 * ensemble.inhomogeneous_fwhm
        step = ensemble.inhomogeneous_fwhm / 40
        energy = lo + step * np.arange(int(math.ceil((hi - lo) / step)) + 1)
    energy = np.asarray(energy, float)
    y = np.zeros_like(energy)
    for name, e in lines.items():
        y += weights[name.split("@")[0]] * voigt_profile(energy - e, sigma_g, gamma_l)

    sampled = None
    if peak_counts is not None:
        y = y * (peak_counts / y.max())
        sampled = np.random.default_rng(seed).poisson(y)
    meta = {"geometry": geometry.value, "B_T": B, "seed": seed,
            "inhomogeneous_fwhm_eV": ensemble.inhomogeneous_fwhm,
            "lorentz_fwhm_eV": 2 * gamma_l}
    return Spectrum(energy, y, sampled, lines, metadata=meta)


@dataclass
class PLECurve:
    energy: np.ndarray
    expected: np.ndarray
    metadata: dict = field(default_factory=dict)


DEFAULT_PLE_DRIVES = {
    Geometry.FARADAY: {"sigma_plus": 1.0},
    Geometry.VOIGT: {"H_down": 1.0, "V_down": 1.0},
}


def simulate_ple(ensemble: EnsembleSpec, system: LevelSystem, scan: Sequence[float],
                 rate: float = 1.0, drives: dict[str, float] | None = None,
                 detection: Sequence[str] = ("satellite",), n_grid: int = 401) -> PLECurve:
    """Steady-state collected photon rate (1/s) versus laser energy.

    Each scan point drives the transitions in ``drives`` (relative strengths)
    at ``rate`` times the homogeneous Lorentzian of its detuning, for every
    sub-ensemble on a dense grid over the Gaussian inhomogeneous
    distribution. The default rate keeps optical pumping in the linear regime
    so the curve follows the ensemble line shape. Voigt drives both
    ``H_down`` and ``V_down`` (impure polarization), giving two peaks split by
    the hole Zeeman energy.
    """
    scan = np.asarray(scan, float)
    drives = drives or DEFAULT_PLE_DRIVES[system.geometry]
    sigma = ensemble.sigma
    shifts = np.linspace(-5 * sigma, 5 * sigma, n_grid)
    w = np.exp(-shifts**2 / (2 * sigma**2))
    w /= w.sum()
    c = detection_vector(system, detection)
    base = rate_matrix(system)
    scale = ensemble.n_donors * system.optics.collection_efficiency

    out = np.empty(scan.size)
    for j, E in enumerate(scan):
        Ms = np.broadcast_to(base, (n_grid, 4, 4)).copy()
        for name, strength in drives.items():
            g, x = system.transitions[name]
            r = rate * strength * lorentzian(E - system.transition_energies[name] - shifts,
                                             system.homogeneous_linewidth)
            Ms[:, x, g] += r
            Ms[:, g, g] -= r
            Ms[:, g, x] += r
            Ms[:, x, x] -= r
        p = steady_state(Ms)
        out[j] = scale * float(w @ (p @ c))
    out += system.optics.dark_count_rate
    return PLECurve(scan, out, {"rate_s1": rate, "drives": dict(drives), "geometry": system.geometry.value,
                                "B_T": system.B})
