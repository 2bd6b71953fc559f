"""Physical constants, ZnO material parameters and donor-scale quantities.

Energies are carried in eV throughout the package. SI joules appear only
inside golden-rule prefactors, and every conversion factor lives on
:class:`PhysicalConstants`.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration documents.

    ``key`` holds the offending key path (``None`` for whole-document errors).
    """

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA-2018 constants.

    ``rydberg`` and ``bohr_radius_H`` are derived from hbar, m0, e and eps0
    rather than taken from the table, so that hydrogenic identities such as
    ``Ry = hbar**2 / (2 m0 a_H**2)`` hold to rounding error. They agree with
    the tabulated CODATA values to better than 2e-9 relative.
    """

    mu_B: float = 5.7883818060e-5        # eV/T
    k_B: float = 8.617333262e-5          # eV/K
    hbar_Js: float = 1.054571817e-34     # J s
    e_charge: float = 1.602176634e-19    # C
    eps0: float = 8.8541878128e-12       # F/m
    m0: float = 9.1093837015e-31         # kg

    @property
    def hbar(self) -> float:
        """Reduced Planck constant in eV s."""
        return self.hbar_Js / self.e_charge

    @property
    def bohr_radius_H(self) -> float:
        """Hydrogen Bohr radius (m)."""
        return 4 * math.pi * self.eps0 * self.hbar_Js**2 / (self.m0 * self.e_charge**2)

    @property
    def rydberg(self) -> float:
        """Hydrogen Rydberg energy (eV)."""
        return self.hbar_Js**2 / (2 * self.m0 * self.bohr_radius_H**2) / self.e_charge

    def to_joule(self, energy_eV: float) -> float:
        return energy_eV * self.e_charge


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class MaterialParameters:
    """Isotropic-model ZnO parameters; the defaults are the published table.

    Attributes
    ----------
    rho : mass density (kg/m^3)
    m_star_ratio : averaged effective mass m*/m0
    eps : averaged static dielectric constant
    alpha_so : spin-orbit constant (eV m)
    g_e : electron g-factor used by the relaxation theory
    h33, h31, h15 : piezoelectric constants (V/m)
    s_l, s_t : longitudinal / transverse sound velocities (m/s)
    g_h_perp, g_h_par : hole g-factors, used only for optical spectra
    a0 : donor Bohr radius (m); ``None`` means hydrogenic
    E1s : donor binding energy (eV); ``None`` means hydrogenic
    """

    rho: float = 5.6e3
    m_star_ratio: float = 0.25
    eps: float = 8.1
    alpha_so: float = 1.1e-13
    g_e: float = 2.0
    h33: float = 1.5e10
    h31: float = -0.6e10
    h15: float = -0.6e10
    s_l: float = 6.1e3
    s_t: float = 2.9e3
    g_h_perp: float = 0.34
    g_h_par: float = -1.22
    a0: float | None = 1.5e-9
    E1s: float | None = 54.6e-3

    def __post_init__(self):
        for name in ("rho", "m_star_ratio", "eps", "s_l", "s_t"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive", key=name)
        if self.s_l <= self.s_t:
            raise ConfigError("s_l must exceed s_t", key="s_l")
        for name in ("a0", "E1s"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive", key=name)

    def replace(self, **changes) -> "MaterialParameters":
        return MaterialParameters(**{**asdict(self), **changes})


# config key -> (attribute, power of ten from document units to internal units)
_CONFIG_KEYS: dict[str, tuple[str, int]] = {
    "rho_kg_m3": ("rho", 0),
    "m_star_ratio": ("m_star_ratio", 0),
    "eps_static": ("eps", 0),
    "alpha_so_meV_A": ("alpha_so", -13),
    "g_e": ("g_e", 0),
    "h33_V_m": ("h33", 0),
    "h31_V_m": ("h31", 0),
    "h15_V_m": ("h15", 0),
    "s_l_m_s": ("s_l", 0),
    "s_t_m_s": ("s_t", 0),
    "g_h_perp": ("g_h_perp", 0),
    "g_h_par": ("g_h_par", 0),
    "a0_nm": ("a0", -9),
    "E1s_meV": ("E1s", -3),
}


def _shift(value: float, exponent: int) -> float:
    """value * 10**exponent, scaled in decimal.

    Values with at most 15 significant digits survive a load/dump round trip
    unchanged; longer ones may move by one ulp.
    """
    if exponent == 0:
        return value
    return float(Decimal(repr(value)).scaleb(exponent))


def load_material_config(source: str | Path | Mapping[str, Any] | None = None) -> MaterialParameters:
    """Build :class:`MaterialParameters` from a flat JSON document.

    ``source`` may be a path, a JSON string, an already-parsed mapping or
    ``None``. Missing keys fall back to the table defaults; unknown keys
    produce a warning. ``a0_nm`` / ``E1s_meV`` may be ``null`` to request the
    hydrogenic values.
    """
    if source is None:
        doc: Any = {}
    elif isinstance(source, Mapping):
        doc = dict(source)
    else:
        text = str(source)
        path = Path(text)
        if not text.lstrip().startswith("{") and path.exists():
            text = path.read_text(encoding="utf-8")
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("top-level document must be an object")

    kwargs: dict[str, Any] = {}
    for key, value in doc.items():
        if key not in _CONFIG_KEYS:
            warnings.warn(f"unknown material config key {key!r} ignored", stacklevel=2)
            continue
        attr, scale = _CONFIG_KEYS[key]
        if value is None and attr in ("a0", "E1s"):
            kwargs[attr] = None
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("must be a number", key=key)
        kwargs[attr] = _shift(float(value), scale)
    return MaterialParameters(**kwargs)


def dump_material_config(mat: MaterialParameters) -> dict[str, Any]:
    """Inverse of :func:`load_material_config` (document units)."""
    out: dict[str, Any] = {}
    for key, (attr, scale) in _CONFIG_KEYS.items():
        value = getattr(mat, attr)
        out[key] = None if value is None else _shift(value, -scale)
    return out


def piezo_from_stress_moduli(e33: float, e31: float, e15: float, eps: float,
                             constants: PhysicalConstants = CONSTANTS) -> tuple[float, float, float]:
    """Convert piezoelectric stress moduli (C/m^2) to h_ij = e_ij / (eps eps0) in V/m."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    denom = eps * constants.eps0
    return e33 / denom, e31 / denom, e15 / denom


@dataclass(frozen=True)
class DerivedDonorParameters:
    """Donor-scale quantities.

    ``beta_pol`` is the in-plane polarizability 9 eps a0^3 / 2 in Gaussian
    bookkeeping (units of m^3). The relaxation formulas never use it directly;
    they go through ``E1s`` (see :mod:`donorspin.oracle`).
    """

    a0: float
    E1s: float
    beta_pol: float
    rydberg_eff: float
    mode: str = field(default="explicit")


def derive_donor(mat: MaterialParameters, mode: str | tuple[float, float] = "default",
                 constants: PhysicalConstants = CONSTANTS) -> DerivedDonorParameters:
    """Derive a0, E1s, polarizability and effective Rydberg.

    Parameters
    ----------
    mode : ``"hydrogenic"``, ``"default"`` or ``(a0, E1s)``
        ``"default"`` uses ``mat.a0`` / ``mat.E1s`` where set and the
        hydrogenic value otherwise. A tuple forces explicit values
        (metres, eV).
    """
    ryd_eff = constants.rydberg * mat.m_star_ratio / mat.eps**2
    a0_h = constants.bohr_radius_H * mat.eps / mat.m_star_ratio
    if isinstance(mode, tuple):
        a0, E1s = mode
        if not (a0 > 0 and E1s > 0):
            raise ValueError("explicit a0 and E1s must be positive")
        label = "explicit"
    elif mode == "hydrogenic":
        a0, E1s, label = a0_h, ryd_eff, "hydrogenic"
    elif mode == "default":
        a0 = mat.a0 if mat.a0 is not None else a0_h
        E1s = mat.E1s if mat.E1s is not None else ryd_eff
        label = "hydrogenic" if mat.a0 is None and mat.E1s is None else "explicit"
    else:
        raise ValueError(f"unknown donor mode {mode!r}")
    return DerivedDonorParameters(a0=a0, E1s=E1s, beta_pol=9 * mat.eps * a0**3 / 2,
                                  rydberg_eff=ryd_eff, mode=label)

