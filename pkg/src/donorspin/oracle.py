"""Brute-force golden-rule evaluation of the donor spin-flip rate.

The closed form in :mod:`donorspin.relaxation` comes from averaging the
piezoelectric matrix elements over phonon directions by hand. This module
redoes that average numerically: it enumerates one longitudinal and two
transverse phonon branches at every node of a spherical quadrature rule,
contracts the full wurtzite piezotensor, and resolves the energy-conserving
delta function analytically per branch (q = g mu_B B / (hbar s)).

Bookkeeping
-----------
The simplified matrix elements contain m* beta / hbar^2. With the hydrogenic
relations a0 = hbar^2 eps / (m* e^2) and E1s = e^2 / (2 eps a0) this equals
9 e^2 / (8 E1s^2), which is what the oracle uses, so oracle and closed form
share a single E1s. Phonon amplitudes use a unit normalisation volume; the
volume cancels against the density of states.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .material import CONSTANTS, DerivedDonorParameters, MaterialParameters, PhysicalConstants
from .relaxation import Geometry, energy_scales, spin_flip_rate

MIN_QUAD_ORDER = 5
DEFAULT_QUAD_ORDER = 64
BRANCHES = ("longitudinal", "transverse1", "transverse2")


@dataclass(frozen=True)
class PiezoTensor:
    h31: float
    h33: float
    h15: float

    @classmethod
    def from_material(cls, mat: MaterialParameters) -> "PiezoTensor":
        return cls(h31=mat.h31, h33=mat.h33, h15=mat.h15)

    def full(self) -> np.ndarray:
        """beta[i, j, k]; i is the field index, (j, k) the symmetric strain pair."""
        x, y, z = 0, 1, 2
        b = np.zeros((3, 3, 3))
        b[z, x, x] = b[z, y, y] = self.h31
        b[z, z, z] = self.h33
        b[x, x, z] = b[x, z, x] = b[y, y, z] = b[y, z, y] = self.h15
        return b

    def parts(self) -> list["PiezoTensor"]:
        """Split into one tensor per independent constant."""
        return [PiezoTensor(self.h31, 0.0, 0.0), PiezoTensor(0.0, self.h33, 0.0),
                PiezoTensor(0.0, 0.0, self.h15)]


@dataclass(frozen=True)
class PhononMode:
    branch: str
    xi: np.ndarray
    e_pol: np.ndarray
    speed: float

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise ValueError(f"unknown branch {self.branch!r}")
        xi = np.asarray(self.xi, dtype=float)
        e = np.asarray(self.e_pol, dtype=float)
        _check_unit(xi, "xi")
        _check_unit(e, "e_pol")
        if self.branch == "longitudinal":
            if not np.allclose(e, xi, atol=1e-12):
                raise ValueError("longitudinal polarization must equal xi")
        elif abs(np.dot(e, xi)) > 1e-12:
            raise ValueError("transverse polarization must be orthogonal to xi")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "e_pol", e)


@dataclass(frozen=True)
class QuadratureRule:
    """Product rule: Gauss-Legendre in cos(theta) x trapezoid in phi.

    ``order`` polar nodes and ``2 * order`` azimuthal nodes; exact for
    polynomials in the direction cosines up to degree ``2 * order - 1``.
    """

    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    order: int

    @property
    def degree(self) -> int:
        return 2 * self.order - 1

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def product_rule(order: int = DEFAULT_QUAD_ORDER) -> QuadratureRule:
    if order < 1:
        raise ValueError("quadrature order must be at least 1")
    x, w = np.polynomial.legendre.leggauss(order)
    n_phi = 2 * order
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    cos_t, ph = np.meshgrid(x, phi, indexing="ij")
    sin_t = np.sqrt(1.0 - cos_t**2)
    nodes = np.stack([sin_t * np.cos(ph), sin_t * np.sin(ph), cos_t], axis=-1).reshape(-1, 3)
    weights = np.repeat(w, n_phi) * (2 * np.pi / n_phi)
    return QuadratureRule(nodes=nodes, weights=weights, order=order)


def _check_unit(v: np.ndarray, name: str, tol: float = 1e-6) -> None:
    norms = np.linalg.norm(np.atleast_2d(v), axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError(f"{name} must be a unit vector")


def piezo_projection(tensor: PiezoTensor, xi, e_pol) -> float:
    """sum_ijk beta_ijk xi_i xi_j e_k for a single direction and polarization."""
    xi = np.asarray(xi, dtype=float)
    e_pol = np.asarray(e_pol, dtype=float)
    _check_unit(xi, "xi")
    _check_unit(e_pol, "e_pol")
    return float(np.einsum("ijk,i,j,k->", tensor.full(), xi, xi, e_pol))


def _project(beta: np.ndarray, xi: np.ndarray, e: np.ndarray) -> np.ndarray:
    return np.einsum("ijk,ni,nj,nk->n", beta, xi, xi, e)


def transverse_pair(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal polarizations perpendicular to ``xi`` (rows for 2-D input).

    Gram-Schmidt against the coordinate axis least aligned with each xi.
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    xi2 = np.atleast_2d(xi)
    axis = np.zeros_like(xi2)
    axis[np.arange(len(xi2)), np.argmin(np.abs(xi2), axis=1)] = 1.0
    e1 = axis - np.sum(axis * xi2, axis=1, keepdims=True) * xi2
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(xi2, e1)
    if single:
        return e1[0], e2[0]
    return e1, e2


def _rotate_pair(e1, e2, angles):
    c = np.cos(angles)[:, None]
    s = np.sin(angles)[:, None]
    return c * e1 + s * e2, -s * e1 + c * e2


def transverse_average_check(xi, pair: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """(e1 e1^T + e2 e2^T) / 2 for a transverse pair; equals (I - xi xi^T) / 2."""
    xi = np.asarray(xi, dtype=float)
    _check_unit(xi, "xi")
    e1, e2 = pair if pair is not None else transverse_pair(xi)
    return (np.outer(e1, e1) + np.outer(e2, e2)) / 2


def _coupling(geometry: Geometry, B: float, mat: MaterialParameters,
              derived: DerivedDonorParameters, constants: PhysicalConstants) -> float:
    """Factor C with M = C * (E_x + i E_y) [Faraday] or M = C * E_x [Voigt], SI units."""
    es = energy_scales(mat, derived, B, constants)
    e = constants.e_charge
    alpha = constants.to_joule(mat.alpha_so)
    m_beta_over_hbar2 = 9 * e**2 / (8 * constants.to_joule(derived.E1s) ** 2)
    if geometry is Geometry.FARADAY:
        return constants.to_joule(2 * es.delta1 - es.hbar_omega_c) * alpha * m_beta_over_hbar2 / (2 * e)
    return constants.to_joule(es.delta1) * alpha * m_beta_over_hbar2 / e


def _field_sq(geometry: Geometry, xi: np.ndarray, amp: np.ndarray, q: float, speed: float,
              rho: float, constants: PhysicalConstants) -> np.ndarray:
    """|E_x + i E_y|^2 or |E_x|^2 for a unit-volume phonon of wave number q.

    The phonon potential energy at the donor is u e A with u^2 = hbar/(2 rho omega);
    E = -i q V_ph / e is then parallel to xi with magnitude q u A.
    """
    u_sq = constants.hbar_Js / (2 * rho * speed * q)
    mag_sq = q**2 * u_sq * amp**2
    if geometry is Geometry.FARADAY:
        return mag_sq * (xi[:, 0] ** 2 + xi[:, 1] ** 2)
    return mag_sq * xi[:, 0] ** 2


def matrix_element_sq(geometry: Geometry | str, mode: PhononMode, B: float,
                      mat: MaterialParameters, derived: DerivedDonorParameters,
                      tensor: PiezoTensor | None = None,
                      constants: PhysicalConstants = CONSTANTS) -> float:
    """V |M|^2 (J^2 m^3) for one phonon mode at the resonant wave number."""
    geometry = Geometry.parse(geometry)
    if not B > 0:
        raise ValueError("B must be positive")
    tensor = tensor or PiezoTensor.from_material(mat)
    es = energy_scales(mat, derived, B, constants)
    q = es.delta1 / (constants.hbar * mode.speed)
    xi = mode.xi[None, :]
    amp = _project(tensor.full(), xi, mode.e_pol[None, :])
    field_sq = _field_sq(geometry, xi, amp, q, mode.speed, mat.rho, constants)
    return float(_coupling(geometry, B, mat, derived, constants) ** 2 * field_sq[0])


def _branch_integrals(geometry: Geometry, B: float, mat: MaterialParameters,
                      derived: DerivedDonorParameters, rule: QuadratureRule,
                      tensor: PiezoTensor, transverse_angles, constants) -> dict[str, float]:
    es = energy_scales(mat, derived, B, constants)
    C2 = _coupling(geometry, B, mat, derived, constants) ** 2
    beta = tensor.full()
    xi = rule.nodes
    e1, e2 = transverse_pair(xi)
    if transverse_angles is not None:
        e1, e2 = _rotate_pair(e1, e2, np.broadcast_to(np.asarray(transverse_angles, float), (len(xi),)))
    out = {}
    for branch, e_pol, speed in (("longitudinal", xi, mat.s_l), ("transverse1", e1, mat.s_t),
                                 ("transverse2", e2, mat.s_t)):
        q = es.delta1 / (constants.hbar * speed)
        amp = _project(beta, xi, e_pol)
        m_sq = C2 * _field_sq(geometry, xi, amp, q, speed, mat.rho, constants)
        # sum_q -> V/(2pi)^3 int q^2 dq dOmega; delta(hbar s q - D1) -> 1/(hbar s)
        dos = q**2 / (constants.hbar_Js * speed) / (2 * np.pi) ** 3
        out[branch] = 2 * np.pi / constants.hbar_Js * dos * rule.integrate(m_sq)
    return out


def golden_rule_rate(geometry: Geometry | str, B: float, mat: MaterialParameters,
                     derived: DerivedDonorParameters, rule: QuadratureRule | None = None,
                     branches: Sequence[str] = BRANCHES, interference: bool = True,
                     transverse_angles=None,
                     constants: PhysicalConstants = CONSTANTS) -> float:
    """Golden-rule Gamma_{down,up} (1/s) by quadrature over phonon directions.

    Parameters
    ----------
    branches : subset of ``("longitudinal", "transverse1", "transverse2")``
    interference : bool
        ``True`` (default) contracts the full piezotensor, as the golden rule
        requires. ``False`` sums the three piezo constants' contributions
        incoherently, which is what the published closed form amounts to.
    transverse_angles : float or array, optional
        Rotation of the transverse pair about each xi; the rate does not
        depend on it.
    """
    geometry = Geometry.parse(geometry)
    rule = rule or product_rule()
    if rule.order < MIN_QUAD_ORDER:
        raise ValueError(f"quadrature order {rule.order} below minimum {MIN_QUAD_ORDER}")
    if B < 0:
        raise ValueError("B must be non-negative")
    unknown = set(branches) - set(BRANCHES)
    if unknown:
        raise ValueError(f"unknown branches {sorted(unknown)}")
    if B == 0:
        return 0.0
    full = PiezoTensor.from_material(mat)
    tensors = [full] if interference else full.parts()
    total = 0.0
    for tensor in tensors:
        parts = _branch_integrals(geometry, B, mat, derived, rule, tensor, transverse_angles, constants)
        total += sum(parts[b] for b in BRANCHES if b in branches)
    return total


@dataclass
class ValidationRow:
    B: float
    geometry: Geometry
    gamma_oracle: float
    gamma_analytic: float

    @property
    def rel_err(self) -> float:
        return abs(self.gamma_oracle - self.gamma_analytic) / self.gamma_analytic


@dataclass
class ValidationReport:
    rows: list[ValidationRow]
    quad_order: int
    interference: bool

    @property
    def max_rel_err(self) -> float:
        return max(r.rel_err for r in self.rows)

    def write_csv(self, stream: TextIO, run_id: str | None = None) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["B_T", "geometry", "gamma_oracle_s1", "gamma_analytic_s1", "rel_err"]
                        + (["run_id"] if run_id else []))
        for r in self.rows:
            writer.writerow([format(r.B, ".12g"), r.geometry.value, format(r.gamma_oracle, ".12g"),
                             format(r.gamma_analytic, ".12g"), format(r.rel_err, ".12g")]
                            + ([run_id] if run_id else []))


def validate_against_analytic(geometries: Geometry | str | Iterable[Geometry | str],
                              B_grid: Sequence[float], mat: MaterialParameters,
                              derived: DerivedDonorParameters,
                              rule: QuadratureRule | None = None,
                              analytic_interference: bool = False,
                              oracle_interference: bool = True,
                              constants: PhysicalConstants = CONSTANTS) -> ValidationReport:
    """Compare oracle and closed-form rates point by point.

    The defaults pit the faithful oracle against the published closed form.
    """
    if isinstance(geometries, (str, Geometry)):
        geometries = [geometries]
    geoms = [Geometry.parse(g) for g in geometries]
    if any(not b > 0 for b in B_grid):
        raise ValueError("B_grid must be strictly positive")
    rule = rule or product_rule()
    rows = []
    for g in geoms:
        for B in B_grid:
            oracle = golden_rule_rate(g, B, mat, derived, rule, interference=oracle_interference,
                                      constants=constants)
            analytic = spin_flip_rate(mat, derived, B, g, interference=analytic_interference,
                                      constants=constants)
            rows.append(ValidationRow(float(B), g, oracle, analytic))
    return ValidationReport(rows, rule.order, oracle_interference)
