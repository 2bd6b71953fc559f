"""Rate-equation model of the four-level D0 / D0X system and measurement protocols.

Levels are indexed ``0 = |down>``, ``1 = |up>``, ``2 = |X, hole down>``,
``3 = |X, hole up>``. Optical drive is an incoherent rate (no coherences):
a laser drives absorption g -> x and stimulated emission x -> g at the same
rate R * L(detuning), with L a unit-peak Lorentzian of the homogeneous width.

Inhomogeneous broadening is handled by splitting the ensemble into
sub-ensembles at deterministic Gaussian quantiles; every sub-ensemble shares
the spin-flip rates and differs only in its optical detuning.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.stats import norm

from .material import CONSTANTS, ConfigError, DerivedDonorParameters, MaterialParameters, derive_donor
from .relaxation import Geometry, spin_flip_rate

DOWN, UP, X_HOLE_DOWN, X_HOLE_UP = range(4)
LEVEL_NAMES = ("down", "up", "X_hole_down", "X_hole_up")
GA_LINE_CENTER = 3.3599  # eV
H_PLANCK_EV = 2 * math.pi * CONSTANTS.hbar

TRANSITIONS: dict[Geometry, dict[str, tuple[int, int]]] = {
    Geometry.VOIGT: {
        "H_down": (DOWN, X_HOLE_DOWN),
        "H_up": (UP, X_HOLE_UP),
        "V_down": (DOWN, X_HOLE_UP),
        "V_up": (UP, X_HOLE_DOWN),
    },
    Geometry.FARADAY: {
        "sigma_plus": (DOWN, X_HOLE_UP),
        "sigma_minus": (UP, X_HOLE_DOWN),
        "z_down": (DOWN, X_HOLE_DOWN),
        "z_up": (UP, X_HOLE_UP),
    },
}


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Optics:
    """Optical parameters the measurement protocols need but the theory does not fix."""

    radiative_lifetime: float = 1e-9
    z_suppression: float = 50.0
    voigt_h_fraction: float = 0.5
    homogeneous_linewidth: float = 1e9 * H_PLANCK_EV   # eV, FWHM
    collection_efficiency: float = 1e-3
    dark_count_rate: float = 0.0
    satellite_fraction: float = 0.1
    g_e_optical: float = 1.97
    line_center: float = GA_LINE_CENTER

    def __post_init__(self):
        if not self.radiative_lifetime > 0:
            raise ValueError("radiative_lifetime must be positive")
        if not self.z_suppression > 0:
            raise ValueError("z_suppression must be positive")
        if not 0 <= self.voigt_h_fraction <= 1:
            raise ValueError("voigt_h_fraction must lie in [0, 1]")
        if not self.homogeneous_linewidth > 0:
            raise ValueError("homogeneous_linewidth must be positive")


@dataclass(frozen=True)
class EnsembleSpec:
    n_donors: float = 1e6
    inhomogeneous_fwhm: float = 84.8e-6   # eV
    n_sub: int = 21

    def __post_init__(self):
        if not self.inhomogeneous_fwhm > 0:
            raise ValueError("inhomogeneous_fwhm must be positive")
        if self.n_sub < 1:
            raise ValueError("n_sub must be at least 1")

    @property
    def sigma(self) -> float:
        return self.inhomogeneous_fwhm / (2 * math.sqrt(2 * math.log(2)))

    def detunings(self) -> tuple[np.ndarray, np.ndarray]:
        """Sub-ensemble optical shifts (eV) and weights summing to 1."""
        if self.n_sub == 1:
            return np.zeros(1), np.ones(1)
        u = (np.arange(self.n_sub) + 0.5) / self.n_sub
        return self.sigma * norm.ppf(u), np.full(self.n_sub, 1.0 / self.n_sub)


@dataclass(frozen=True)
class LevelSystem:
    geometry: Geometry
    B: float
    T: float
    populations: np.ndarray
    radiative_rate: float
    branching: dict[str, float]
    spin_flip_down_up: float      # |up> -> |down|, phonon emission
    spin_flip_up_down: float      # |down> -> |up>, phonon absorption
    transition_energies: dict[str, float]
    homogeneous_linewidth: float
    optics: Optics = field(default_factory=Optics)
    gamma0: float = 0.0
    gamma0_table: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def transitions(self) -> dict[str, tuple[int, int]]:
        return TRANSITIONS[self.geometry]

    @property
    def t1(self) -> float:
        return 1.0 / (self.spin_flip_down_up + self.spin_flip_up_down)

    def with_populations(self, populations) -> "LevelSystem":
        return replace(self, populations=np.asarray(populations, dtype=float))

    def flip_rates(self, detuning: float = 0.0) -> tuple[float, float]:
        """(down_up, up_down) including any phenomenological extra rate.

        The extra rate is split so detailed balance is preserved.
        """
        g0 = self.gamma0
        if self.gamma0_table is not None:
            g0 += float(np.interp(detuning, *self.gamma0_table))
        k_du, k_ud = self.spin_flip_down_up, self.spin_flip_up_down
        if g0:
            total = k_du + k_ud
            k_du, k_ud = k_du + g0 * k_du / total, k_ud + g0 * k_ud / total
        return k_du, k_ud


def thermal_ground(k_du: float, k_ud: float) -> np.ndarray:
    total = k_du + k_ud
    return np.array([k_du / total, k_ud / total, 0.0, 0.0])


def _transition_energies(geometry: Geometry, B: float, mat: MaterialParameters, optics: Optics) -> dict[str, float]:
    mu = CONSTANTS.mu_B * B
    g_h = mat.g_h_par if geometry is Geometry.FARADAY else mat.g_h_perp
    ground = {DOWN: -optics.g_e_optical * mu / 2, UP: optics.g_e_optical * mu / 2}
    # hole convention: Faraday sigma+/sigma- split by (g_e - g_h) mu_B B
    excited = {X_HOLE_DOWN: optics.line_center + g_h * mu / 2,
               X_HOLE_UP: optics.line_center - g_h * mu / 2}
    return {name: excited[x] - ground[g] for name, (g, x) in TRANSITIONS[geometry].items()}


def build_level_system(geometry: Geometry | str, B: float, T: float,
                       mat: MaterialParameters | None = None,
                       derived: DerivedDonorParameters | None = None,
                       optics: Optics | None = None, t1_override: float | None = None,
                       gamma0: float = 0.0, gamma0_table=None) -> LevelSystem:
    """Four-level system at field ``B`` and temperature ``T``.

    Spin-flip rates come from the closed-form theory unless ``t1_override``
    fixes T1 directly (the thermal ratio e^-gamma is kept either way).
    """
    geometry = Geometry.parse(geometry)
    if B < 0 or T < 0:
        raise ValueError("B and T must be non-negative")
    mat = mat or MaterialParameters()
    derived = derived or derive_donor(mat)
    optics = optics or Optics()

    if geometry is Geometry.VOIGT:
        h = optics.voigt_h_fraction
        branching = {"H_down": h, "V_up": 1 - h, "H_up": h, "V_down": 1 - h}
    else:
        z = 1.0 / (optics.z_suppression + 1)
        branching = {"sigma_plus": 1 - z, "z_up": z, "sigma_minus": 1 - z, "z_down": z}

    delta1 = mat.g_e * CONSTANTS.mu_B * B
    if T > 0 and B > 0:
        ratio = math.exp(-delta1 / (CONSTANTS.k_B * T))
    elif T > 0:
        ratio = 1.0
    else:
        ratio = 0.0
    if t1_override is not None:
        if not t1_override > 0:
            raise ValueError("t1_override must be positive")
        k_du = 1.0 / (t1_override * (1 + ratio))
    else:
        gamma = spin_flip_rate(mat, derived, B, geometry) if B > 0 else 0.0
        n_ph = ratio / (1 - ratio) if ratio < 1 else math.inf
        k_du = gamma * (n_ph + 1) if math.isfinite(n_ph) else 0.0
    k_ud = k_du * ratio
    if k_du == 0 and k_ud == 0:
        populations = np.array([0.5, 0.5, 0.0, 0.0])
    else:
        populations = thermal_ground(k_du, k_ud)
    return LevelSystem(
        geometry=geometry, B=B, T=T, populations=populations,
        radiative_rate=1.0 / optics.radiative_lifetime, branching=branching,
        spin_flip_down_up=k_du, spin_flip_up_down=k_ud,
        transition_energies=_transition_energies(geometry, B, mat, optics),
        homogeneous_linewidth=optics.homogeneous_linewidth, optics=optics,
        gamma0=gamma0,
        gamma0_table=None if gamma0_table is None else tuple(np.asarray(a, float) for a in gamma0_table),
    )


# --------------------------------------------------------------------------- sequences

SEGMENT_KINDS = ("pump", "wait", "scramble", "probe")


@dataclass(frozen=True)
class Segment:
    """One pulse-sequence element.

    ``drives`` maps extra transitions to relative strengths (imperfect
    polarization); the laser frequency is fixed by ``transition`` and
    ``detuning`` (eV).
    """

    kind: str
    duration: float = 0.0
    transition: str | None = None
    rate: float = 0.0
    collect: bool = False
    detuning: float = 0.0
    drives: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.kind != "scramble" and not self.duration > 0:
            raise ValueError("segment duration must be positive")
        if self.kind in ("pump", "probe"):
            if self.transition is None:
                raise ValueError(f"{self.kind} segment needs a transition")
            if self.rate < 0:
                raise ValueError("rate must be non-negative")
        if self.kind in ("wait", "scramble") and self.collect:
            raise ValueError(f"{self.kind} segment cannot collect")

    @classmethod
    def pump(cls, transition: str, rate: float, duration: float, collect: bool = True, **kw) -> "Segment":
        return cls("pump", duration, transition, rate, collect, **kw)

    @classmethod
    def probe(cls, transition: str, rate: float, duration: float, collect: bool = True, **kw) -> "Segment":
        return cls("probe", duration, transition, rate, collect, **kw)

    @classmethod
    def wait(cls, duration: float) -> "Segment":
        return cls("wait", duration)

    @classmethod
    def scramble(cls) -> "Segment":
        return cls("scramble")


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple[Segment, ...]
    repetitions: int = 1
    detection: tuple[str, ...] = ("satellite",)
    bin_width: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "detection", tuple(self.detection))
        if not any(s.collect for s in self.segments):
            raise ValueError("sequence needs at least one collecting segment")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "PulseSequence":
        raw = doc.get("segments")
        if not isinstance(raw, list) or not raw:
            raise ConfigError("must be a non-empty list", key="segments")
        segments = [segment_from_dict(s, i) for i, s in enumerate(raw)]
        try:
            return cls(segments, repetitions=int(doc.get("repetitions", 1)),
                       detection=tuple(doc.get("detect", ("satellite",))),
                       bin_width=float(doc.get("bin_width_s", 1e-6)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), key="sequence") from exc


def segment_from_dict(doc: Any, index: int) -> Segment:
    key = f"segments[{index}]"
    if not isinstance(doc, Mapping):
        raise ConfigError("must be an object", key=key)
    known = {"kind", "duration_s", "transition", "rate_s1", "collect", "detuning_ueV", "drives"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown fields {sorted(extra)}", key=key)
    try:
        return Segment(kind=doc.get("kind"), duration=float(doc.get("duration_s", 0.0)),
                       transition=doc.get("transition"), rate=float(doc.get("rate_s1", 0.0)),
                       collect=bool(doc.get("collect", doc.get("kind") in ("pump", "probe"))),
                       detuning=float(doc.get("detuning_ueV", 0.0)) * 1e-6,
                       drives=dict(doc.get("drives", {})))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), key=key) from exc


# --------------------------------------------------------------------------- records

@dataclass
class TraceRecord:
    time: np.ndarray            # bin start times (s) from sequence start
    bin_width: np.ndarray       # per-bin widths (s)
    segment_index: np.ndarray   # which segment each bin belongs to
    expected: np.ndarray        # expected counts per bin, all repetitions
    sampled: np.ndarray         # Poisson draw of ``expected``
    metadata: dict = field(default_factory=dict)

    @property
    def err(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.sampled, 1))

    def select(self, segment: int) -> "TraceRecord":
        m = self.segment_index == segment
        return TraceRecord(self.time[m], self.bin_width[m], self.segment_index[m],
                           self.expected[m], self.sampled[m], dict(self.metadata))


@dataclass
class RecoveryCurve:
    tau: np.ndarray
    expected: np.ndarray
    sampled: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def err(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.sampled, 1))


# --------------------------------------------------------------------------- propagation

def lorentzian(delta, fwhm: float):
    """Unit-peak Lorentzian."""
    return 1.0 / (1.0 + (2.0 * np.asarray(delta) / fwhm) ** 2)


def rate_matrix(system: LevelSystem, drive_rates: Mapping[str, float] | None = None,
                detuning: float = 0.0) -> np.ndarray:
    """Generator M of dp/dt = M p; columns sum to zero."""
    M = np.zeros((4, 4))

    def add(src: int, dst: int, k: float) -> None:
        M[dst, src] += k
        M[src, src] -= k

    for name, (g, x) in system.transitions.items():
        add(x, g, system.radiative_rate * system.branching[name])
    k_du, k_ud = system.flip_rates(detuning)
    add(UP, DOWN, k_du)
    add(DOWN, UP, k_ud)
    for name, r in (drive_rates or {}).items():
        g, x = system.transitions[name]
        add(g, x, r)
        add(x, g, r)
    return M


def _drive_rates(system: LevelSystem, seg: Segment, shift: float) -> dict[str, float]:
    if seg.kind not in ("pump", "probe") or seg.rate == 0:
        return {}
    energies = system.transition_energies
    if seg.transition not in energies:
        raise ValueError(f"transition {seg.transition!r} does not exist in {system.geometry.value} geometry")
    laser = energies[seg.transition] + seg.detuning
    weights = {seg.transition: 1.0, **seg.drives}
    rates = {}
    for name, w in weights.items():
        if name not in energies:
            raise ValueError(f"transition {name!r} does not exist in {system.geometry.value} geometry")
        rates[name] = seg.rate * w * float(lorentzian(laser - energies[name] - shift,
                                                      system.homogeneous_linewidth))
    return rates


def detection_vector(system: LevelSystem, detection: Sequence[str]) -> np.ndarray:
    """Photon emission rate per donor into the detected channel, as c . p."""
    c = np.zeros(4)
    for name in detection:
        if name == "satellite":
            c[X_HOLE_DOWN] += system.radiative_rate * system.optics.satellite_fraction
            c[X_HOLE_UP] += system.radiative_rate * system.optics.satellite_fraction
        elif name in system.transitions:
            _, x = system.transitions[name]
            c[x] += system.radiative_rate * system.branching[name]
        else:
            raise ValueError(f"unknown detection channel {name!r}")
    return c


def _augmented(M: np.ndarray, c: np.ndarray) -> np.ndarray:
    """5x5 generator whose last state component accumulates c . p dt."""
    A = np.zeros((5, 5))
    A[:4, :4] = M
    A[4, :4] = c
    return A


class _Propagator:
    """Maps (augmented generator, dt) to a 5x5 transfer matrix."""

    RK4_LIMIT = 2.78

    def __init__(self, solver: str, step: float | None):
        if solver not in ("exact", "fixed-step"):
            raise ValueError(f"unknown solver {solver!r}")
        self.solver = solver
        self.step = step
        self._cache: dict = {}

    # y = T p puts the total population in the first coordinate; the generator's
    # columns sum to zero, so that row of T A T^-1 vanishes identically
    _T = np.eye(5)
    _T[0, :4] = 1.0
    _T_INV = np.linalg.inv(_T)

    def __call__(self, A: np.ndarray, dt: float, seg_index: int, seg_kind: str) -> np.ndarray:
        key = (A.tobytes(), dt)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        B = self._T @ A @ self._T_INV
        B[0] = 0.0
        if self.solver == "exact":
            E = expm(B * dt)
        else:
            E = self._rk4(B, dt, seg_index, seg_kind)
        # the exact propagator keeps this row at e_0; pin it so repeated
        # squaring of a stiff generator cannot amplify rounding in the total
        E[0] = 0.0
        E[0, 0] = 1.0
        out = self._T_INV @ E @ self._T
        self._cache[key] = out
        return out

    def _rk4(self, A, dt, seg_index, seg_kind):
        stiff = float(np.max(np.abs(np.linalg.eigvals(A))))
        h = self.step if self.step is not None else (0.05 / stiff if stiff > 0 else dt)
        if h * stiff > self.RK4_LIMIT:
            raise SolverError(f"segment {seg_index} ({seg_kind}): step {h:.3g} s exceeds the RK4 "
                              f"stability limit {self.RK4_LIMIT / stiff:.3g} s")
        n = max(1, math.ceil(dt / h - 1e-9))
        hA = A * (dt / n)
        P = np.eye(5)
        term = np.eye(5)
        for k in range(1, 5):
            term = term @ hA / k
            P = P + term
        return np.linalg.matrix_power(P, n)


def _segment_bins(seg: Segment, bin_width: float) -> list[float]:
    if not seg.collect:
        return [seg.duration]
    n_full = int(math.floor(seg.duration / bin_width + 1e-9))
    widths = [bin_width] * n_full
    rest = seg.duration - n_full * bin_width
    if rest > 1e-12 * seg.duration:
        widths.append(rest)
    return widths


def _evolve_expected(system: LevelSystem, seq: PulseSequence, ensemble: EnsembleSpec | None,
                     solver: str, step: float | None):
    """Expected counts per bin and mean final populations (no sampling)."""
    shifts, weights = ensemble.detunings() if ensemble else (np.zeros(1), np.ones(1))
    n_donors = ensemble.n_donors if ensemble else EnsembleSpec().n_donors
    c = detection_vector(system, seq.detection)
    prop = _Propagator(solver, step)
    scale = n_donors * system.optics.collection_efficiency * seq.repetitions

    times, widths, seg_idx = [], [], []
    t = 0.0
    for i, seg in enumerate(seq.segments):
        for w in _segment_bins(seg, seq.bin_width):
            if seg.collect:
                times.append(t)
                widths.append(w)
                seg_idx.append(i)
            t += w
    expected = np.zeros(len(times))
    final = np.zeros(4)

    for shift, weight in zip(shifts, weights):
        p = system.populations.astype(float).copy()
        b = 0
        for i, seg in enumerate(seq.segments):
            if seg.kind == "scramble":
                p = np.array([0.5, 0.5, 0.0, 0.0])
                continue
            M = rate_matrix(system, _drive_rates(system, seg, shift), shift)
            A = _augmented(M, c if seg.collect else np.zeros(4))
            for w in _segment_bins(seg, seq.bin_width):
                U = prop(A, w, i, seg.kind)
                state = U @ np.append(p, 0.0)
                p = state[:4]
                if seg.collect:
                    expected[b] += weight * state[4]
                    b += 1
            total = p.sum()
            if abs(total - 1) > 1e-9:
                raise SolverError(f"segment {i} ({seg.kind}): population drifted to {total:.12g}")
            p = np.clip(p, 0.0, None) / total
        final += weight * p

    expected = expected * scale + system.optics.dark_count_rate * np.asarray(widths) * seq.repetitions
    return (np.asarray(times), np.asarray(widths), np.asarray(seg_idx, dtype=int),
            np.maximum(expected, 0.0), final)


def evolve(system: LevelSystem, seq: PulseSequence, solver: str = "exact",
           ensemble: EnsembleSpec | None = None, seed: int | None = None,
           step: float | None = None, metadata: Mapping[str, Any] | None = None) -> TraceRecord:
    """Propagate the rate equations through ``seq`` and record collected photons.

    Parameters
    ----------
    solver : ``"exact"`` (matrix exponential per segment) or ``"fixed-step"`` (RK4)
    step : RK4 step in seconds; default 0.05 / (fastest rate)
    """
    times, widths, seg_idx, expected, final = _evolve_expected(system, seq, ensemble, solver, step)
    rng = np.random.default_rng(seed)
    sampled = rng.poisson(expected)
    meta = {"seed": seed, "solver": solver, "repetitions": seq.repetitions,
            "n_donors": (ensemble or EnsembleSpec()).n_donors,
            "n_sub": ensemble.n_sub if ensemble else 1,
            "final_populations": final.tolist()}
    meta.update(metadata or {})
    return TraceRecord(times, widths, seg_idx, expected, sampled, meta)


def steady_state(M: np.ndarray) -> np.ndarray:
    """Normalized null vector of a rate generator (batched over leading axes)."""
    M = np.array(M, dtype=float)
    M[..., -1, :] = 1.0
    rhs = np.zeros(M.shape[:-1])
    rhs[..., -1] = 1.0
    return np.linalg.solve(M, rhs[..., None])[..., 0]


# --------------------------------------------------------------------------- protocols

def run_t1_protocol(system: LevelSystem, taus: Sequence[float], pump: Segment, window: float,
                    ensemble: EnsembleSpec | None = None, seed: int | None = None,
                    repetitions: int = 100, detection: Sequence[str] | None = None,
                    solver: str = "exact") -> RecoveryCurve:
    """Pump, wait tau, pump again; count photons in the first ``window`` of pump 2.

    Each repetition starts from ``system.populations``.
    """
    taus = _check_taus(taus)
    if pump.kind != "pump":
        raise ValueError("pump segment must have kind 'pump'")
    if not 0 < window <= pump.duration:
        raise ValueError("window must be positive and no longer than the pump segment")
    if detection is None:
        detection = ("V_up",) if system.geometry is Geometry.VOIGT else ("satellite",)
    init = replace(pump, collect=False)
    gate = replace(pump, duration=window, collect=True)
    return _recovery(system, taus, init, gate, window, ensemble, seed, repetitions, detection, solver,
                     {"protocol": "t1", "pump": pump.transition, "window_s": window})


def run_pump_probe(system: LevelSystem, taus: Sequence[float], pump: Segment, probe: Segment,
                   window: float | None = None, ensemble: EnsembleSpec | None = None,
                   seed: int | None = None, repetitions: int = 100,
                   detection: Sequence[str] = ("satellite",), solver: str = "exact") -> RecoveryCurve:
    """Pump one transition, wait tau, probe another; the probe signal tracks the
    population the probe transition starts from."""
    taus = _check_taus(taus)
    window = probe.duration if window is None else window
    if not 0 < window <= probe.duration:
        raise ValueError("window must be positive and no longer than the probe segment")
    if pump.transition == probe.transition and not pump.drives and not probe.drives:
        raise ValueError("pump and probe must address different transitions")
    init = replace(pump, collect=False)
    gate = replace(probe, duration=window, collect=True)
    return _recovery(system, taus, init, gate, window, ensemble, seed, repetitions, detection, solver,
                     {"protocol": "pump_probe", "pump": pump.transition, "probe": probe.transition,
                      "window_s": window})


def _check_taus(taus) -> np.ndarray:
    taus = np.asarray(list(taus), dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ValueError("taus must be a non-empty list")
    if np.any(taus < 0) or np.any(np.diff(taus) <= 0):
        raise ValueError("taus must be non-negative and strictly increasing")
    return taus


def _recovery(system, taus, init, gate, window, ensemble, seed, repetitions, detection, solver, meta):
    expected = np.empty(len(taus))
    for j, tau in enumerate(taus):
        segs = [init] + ([Segment.wait(float(tau))] if tau > 0 else []) + [gate]
        seq = PulseSequence(segs, repetitions=repetitions, detection=tuple(detection), bin_width=window)
        _, _, _, exp_j, _ = _evolve_expected(system, seq, ensemble, solver, None)
        expected[j] = exp_j.sum()
    sampled = np.random.default_rng(seed).poisson(expected)
    meta = {**meta, "seed": seed, "repetitions": repetitions,
            "n_donors": (ensemble or EnsembleSpec()).n_donors, "system_t1_s": system.t1}
    return RecoveryCurve(taus, expected, sampled, meta)


def protocol_document(doc: Mapping[str, Any]) -> dict:
    """Deep copy of a protocol config suitable for echoing into metadata."""
    return json.loads(json.dumps(doc, sort_keys=True))

