"""Weighted nonlinear least squares and the model fits used on T1 data and spectra."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .material import CONSTANTS


class DegenerateFitError(RuntimeError):
    """The normal equations are singular: some parameter is not identifiable."""


@dataclass(frozen=True)
class Model:
    name: str
    param_names: tuple[str, ...]
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None


@dataclass
class FitResult:
    params: dict[str, float]
    std_errors: dict[str, float]
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    n_iter: int
    model: str = ""
    flags: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def to_dict(self) -> dict:
        return {"model": self.model, "params": dict(self.params), "std_errors": dict(self.std_errors),
                "covariance": np.asarray(self.covariance).tolist(),
                "residual_norm": self.residual_norm, "converged": self.converged,
                "n_iter": self.n_iter, "flags": dict(self.flags)}


@dataclass(frozen=True)
class SolverOptions:
    damping: float = 1e-3
    xtol: float = 1e-8
    gtol: float = 1e-10
    max_iter: int = 200
    absolute_sigma: bool | None = None   # default: True iff sigma supplied


def _numeric_jac(func, p, x, f0):
    J = np.empty((f0.size, p.size))
    for j in range(p.size):
        h = 1.4901161193847656e-08 * max(abs(p[j]), 1e-8)
        pj = p.copy()
        pj[j] += h
        J[:, j] = (func(pj, x) - f0) / (pj[j] - p[j])
    return J


def _column_scale(J: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.sum(J**2, axis=0))
    if np.any(d == 0) or not np.all(np.isfinite(d)):
        raise DegenerateFitError("degenerate fit: a parameter has no effect on the model")
    return d


def _check_rank(J: np.ndarray, names: Sequence[str]) -> None:
    Js = J / _column_scale(J)
    s = np.linalg.svd(Js, compute_uv=False)
    if s[-1] < 1e-10 * s[0]:
        raise DegenerateFitError(f"degenerate fit: parameters {tuple(names)} are not jointly identifiable")


def nlls_solve(model: Model, x, y, sigma=None, init: Mapping[str, float] | Sequence[float] | None = None,
               options: SolverOptions | None = None,
               bounds: Mapping[str, tuple[float, float]] | None = None) -> FitResult:
    """Levenberg-Marquardt minimisation of sum(((y - f) / sigma)**2).

    Damping starts at ``options.damping`` and is multiplied / divided by 10
    on rejected / accepted steps. Iteration stops when the relative parameter
    change drops below ``xtol`` or the gradient infinity-norm below ``gtol``;
    hitting ``max_iter`` returns ``converged=False``. ``bounds`` are enforced
    by projecting each trial step.

    Raises
    ------
    DegenerateFitError
        If the weighted Jacobian is rank deficient at the start or solution.
    """
    opts = options or SolverOptions()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    names = model.param_names
    if y.size < len(names):
        raise ValueError(f"need at least {len(names)} data points, got {y.size}")
    if sigma is None:
        w = np.ones_like(y)
    else:
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
        if np.any(~(sigma > 0)):
            raise ValueError("sigma must be positive")
        w = 1.0 / sigma
    absolute = opts.absolute_sigma if opts.absolute_sigma is not None else sigma is not None

    if init is None:
        raise ValueError("initial parameters required")
    if isinstance(init, Mapping):
        p = np.array([float(init[n]) for n in names])
    else:
        p = np.array(init, dtype=float)
    lo = np.full(p.size, -np.inf)
    hi = np.full(p.size, np.inf)
    for n, (a, b) in (bounds or {}).items():
        i = names.index(n)
        lo[i], hi[i] = a, b
    p = np.clip(p, lo, hi)

    def residual(params):
        return (y - model.func(params, x)) * w

    def jacobian(params, f0):
        if model.jac is not None:
            return model.jac(params, x) * w[:, None]
        return _numeric_jac(model.func, params, x, f0) * w[:, None]

    r = residual(p)
    cost = float(r @ r)
    lam = opts.damping
    converged = False
    n_iter = 0
    J = jacobian(p, model.func(p, x))
    _check_rank(J, names)
    for n_iter in range(1, opts.max_iter + 1):
        g = J.T @ r
        if np.max(np.abs(g)) < opts.gtol:
            converged = True
            break
        A = J.T @ J
        diag = np.diag(A).copy()
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            p_new = np.clip(p + step, lo, hi)
            r_new = residual(p_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no downhill step at any damping: stationary to working precision
            converged = True
            break
        dp = p_new - p
        p, r, cost = p_new, r_new, cost_new
        lam = max(lam / 10, 1e-12)
        J = jacobian(p, model.func(p, x))
        if np.all(np.abs(dp) <= opts.xtol * (np.abs(p) + opts.xtol)):
            converged = True
            break

    if converged:
        # one undamped Gauss-Newton step removes the bias the last damped step leaves behind
        step = np.linalg.lstsq(J, r, rcond=None)[0]
        p_new = np.clip(p + step, lo, hi)
        r_new = residual(p_new)
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new <= cost:
            p, r, cost = p_new, r_new, cost_new
            J = jacobian(p, model.func(p, x))

    _check_rank(J, names)
    scale = _column_scale(J)
    Js = J / scale
    cov = np.linalg.inv(Js.T @ Js) / np.outer(scale, scale)
    dof = y.size - p.size
    if not absolute:
        cov = cov * (cost / dof if dof > 0 else np.nan)
    cov = (cov + cov.T) / 2
    errs = np.sqrt(np.clip(np.diag(cov), 0, None))
    return FitResult(params=dict(zip(names, p.tolist())), std_errors=dict(zip(names, errs.tolist())),
                     covariance=cov, residual_norm=math.sqrt(cost), converged=converged,
                     n_iter=n_iter, model=model.name)


def _as_xy(data, sigma):
    """Accept a record with tau/time + sampled/err, or an (x, y[, sigma]) tuple."""
    if hasattr(data, "sampled"):
        x = getattr(data, "tau", None)
        if x is None:
            x = data.time - data.time[0]
        return np.asarray(x, float), np.asarray(data.sampled, float), np.asarray(data.err, float)
    x, y, *rest = data
    s = rest[0] if rest else sigma
    return np.asarray(x, float), np.asarray(y, float), None if s is None else np.asarray(s, float)


# --------------------------------------------------------------------------- exponentials

def _exp_recovery(p, t):
    T1, A, C = p
    return A * -np.expm1(-t / T1) + C


def _exp_recovery_jac(p, t):
    T1, A, C = p
    e = np.exp(-t / T1)
    return np.column_stack([-A * e * t / T1**2, 1 - e, np.ones_like(t)])


EXP_RECOVERY = Model("exp", ("T1", "amplitude", "offset"), _exp_recovery, _exp_recovery_jac)


def _seed_recovery(t, y):
    order = np.argsort(t)
    t, y = t[order], y[order]
    C = y[0]
    A = y[-1] - y[0]
    T1 = (t[-1] - t[0]) / 3 or 1.0
    if A != 0:
        frac = (y - C) / A
        m = (frac > 0.05) & (frac < 0.9) & (t > 0)
        if m.sum() >= 2:
            slope = np.polyfit(t[m], np.log1p(-frac[m]), 1)[0]
            if slope < 0:
                T1 = -1.0 / slope
    return [T1, A, C]


def fit_exponential_recovery(curve, sigma=None, init: Mapping[str, float] | None = None,
                             options: SolverOptions | None = None) -> FitResult:
    """Fit y(tau) = A (1 - exp(-tau / T1)) + C.

    ``curve`` is a :class:`~donorspin.dynamics.RecoveryCurve` (shot-noise
    weights) or a ``(tau, y[, sigma])`` tuple.
    """
    t, y, s = _as_xy(curve, sigma)
    if t.size < 4:
        raise ValueError("need at least 4 points")
    p0 = dict(zip(EXP_RECOVERY.param_names, _seed_recovery(t, y)))
    p0.update(init or {})
    return nlls_solve(EXP_RECOVERY, t, y, s, p0, options, bounds={"T1": (1e-300, np.inf)})


def _exp_decay(p, t):
    A, tau, C = p
    return A * np.exp(-t / tau) + C


EXP_DECAY = Model("exp_decay", ("amplitude", "tau", "offset"), _exp_decay)

_EXP_DECAY_LOG = Model("exp_decay", ("amplitude", "log_tau", "offset"),
                       lambda p, t: _exp_decay([p[0], math.exp(p[1]), p[2]], t),
                       lambda p, t: np.column_stack([np.exp(-t / math.exp(p[1])),
                                                     p[0] * np.exp(-t / math.exp(p[1])) * t / math.exp(p[1]),
                                                     np.ones_like(t)]))


def _fit_exp_decay(t, y, s, seed, options, bounds=None) -> FitResult:
    """Single exponential decay fitted in log(tau); reported in tau."""
    A, tau, C = seed
    res = nlls_solve(_EXP_DECAY_LOG, t, y, s, [A, math.log(tau), C], options, bounds)
    P = res.params
    tau = math.exp(P["log_tau"])
    d = np.array([1.0, tau, 1.0])
    cov = res.covariance * np.outer(d, d)
    errs = np.sqrt(np.clip(np.diag(cov), 0, None))
    return FitResult({"amplitude": P["amplitude"], "tau": tau, "offset": P["offset"]},
                     dict(zip(EXP_DECAY.param_names, errs.tolist())), cov, res.residual_norm,
                     res.converged, res.n_iter, "exp_decay", dict(res.flags))


def _dexp(p, t):
    t_f, t_s, A_f, A_s, C = p
    return A_f * np.exp(-t / t_f) + A_s * np.exp(-t / t_s) + C


def _dexp_jac(p, t):
    t_f, t_s, A_f, A_s, C = p
    ef, es = np.exp(-t / t_f), np.exp(-t / t_s)
    return np.column_stack([A_f * ef * t / t_f**2, A_s * es * t / t_s**2, ef, es, np.ones_like(t)])


DOUBLE_EXP = Model("dexp", ("t_fast", "t_slow", "A_fast", "A_slow", "offset"), _dexp, _dexp_jac)


def _dexp_log(p, t):
    return _dexp(np.concatenate([np.exp(p[:2]), p[2:]]), t)


def _dexp_log_jac(p, t):
    q = np.concatenate([np.exp(p[:2]), p[2:]])
    J = _dexp_jac(q, t)
    J[:, :2] *= q[:2]
    return J


# time constants enter through their logarithms, which keeps them positive
# without a hard bound that a long first step could get pinned against
_DOUBLE_EXP_LOG = Model("dexp", ("log_t_fast", "log_t_slow", "A_fast", "A_slow", "offset"),
                        _dexp_log, _dexp_log_jac)


def _from_log_times(res: FitResult) -> FitResult:
    v = [res.params[n] for n in _DOUBLE_EXP_LOG.param_names]
    d = np.array([math.exp(v[0]), math.exp(v[1]), 1.0, 1.0, 1.0])
    vals = [d[0], d[1], *v[2:]]
    cov = res.covariance * np.outer(d, d)
    errs = np.sqrt(np.clip(np.diag(cov), 0, None))
    names = DOUBLE_EXP.param_names
    return FitResult(dict(zip(names, vals)), dict(zip(names, errs.tolist())), cov, res.residual_norm,
                     res.converged, res.n_iter, "dexp", dict(res.flags))


def _loglin(t, z):
    slope, icpt = np.polyfit(t, np.log(z), 1)
    return (-1.0 / slope if slope < 0 else np.inf), math.exp(icpt)


def _seed_dexp(t, y):
    span = t[-1] - t[0]
    C = max(min(y.min(), np.mean(y[-max(3, y.size // 20):])) * 0.95, 0.0)
    z = y - C
    ok = z > 0
    late = ok & (t >= t[0] + 0.4 * span)
    if late.sum() < 2:
        late = ok
    t_s, A_s = _loglin(t[late], z[late])
    if not np.isfinite(t_s):
        t_s, A_s = span, max(z.max(), 1e-12)
    rest = z - A_s * np.exp(-t / t_s)
    early = (rest > 0) & (t <= t[0] + 0.2 * span)
    if early.sum() >= 2:
        t_f, A_f = _loglin(t[early], rest[early])
    else:
        t_f, A_f = np.inf, 0.0
    if not np.isfinite(t_f) or t_f >= t_s:
        t_f, A_f = t_s / 20, max(z[0] - A_s, 0.1 * z[0])
    return [t_f, t_s, A_f, A_s, C]


def fit_double_exponential(trace, sigma=None, init: Mapping[str, float] | None = None,
                           options: SolverOptions | None = None) -> FitResult:
    """Fit y(t) = A_f exp(-t/t_f) + A_s exp(-t/t_s) + C with A_f, A_s >= 0.

    The result always has t_fast <= t_slow. When the two time constants
    coincide within 1% (or either amplitude vanishes, or the problem is
    degenerate) a single-exponential fit is returned instead, with
    ``flags["fallback"] = "single_exponential"``.
    """
    t, y, s = _as_xy(trace, sigma)
    if t.size < 6:
        raise ValueError("need at least 6 points")
    t = t - t.min()
    p0 = dict(zip(DOUBLE_EXP.param_names, _seed_dexp(t, y)))
    p0.update(init or {})
    if not (p0["t_fast"] > 0 and p0["t_slow"] > 0):
        raise ValueError("initial time constants must be positive")
    p0 = [math.log(p0["t_fast"]), math.log(p0["t_slow"]), p0["A_fast"], p0["A_slow"], p0["offset"]]
    bounds = {"A_fast": (0.0, np.inf), "A_slow": (0.0, np.inf)}
    reason = None
    try:
        res = _from_log_times(nlls_solve(_DOUBLE_EXP_LOG, t, y, s, p0, options, bounds))
    except DegenerateFitError:
        res, reason = None, "degenerate"
    if res is not None:
        P = res.params
        if P["t_fast"] > P["t_slow"]:
            res = _swap_components(res)
            P = res.params
        amp_max = max(P["A_fast"], P["A_slow"])
        if abs(P["t_slow"] - P["t_fast"]) < 0.01 * P["t_slow"]:
            reason = "time constants within 1%"
        elif min(P["A_fast"], P["A_slow"]) <= 1e-9 * amp_max:
            reason = "vanishing amplitude"
    if reason is None:
        res.flags["fallback"] = None
        return res

    seed = [max(y[0] - y[-1], 1e-12), (t[-1] - t[0]) / 3, y[-1]]
    single = _fit_exp_decay(t, y, s, seed, options, bounds={"amplitude": (0.0, np.inf)})
    P = single.params
    E = single.std_errors
    return FitResult(
        params={"t_fast": P["tau"], "t_slow": P["tau"], "A_fast": 0.0, "A_slow": P["amplitude"],
                "offset": P["offset"]},
        std_errors={"t_fast": E["tau"], "t_slow": E["tau"], "A_fast": 0.0, "A_slow": E["amplitude"],
                    "offset": E["offset"]},
        covariance=single.covariance, residual_norm=single.residual_norm,
        converged=single.converged, n_iter=single.n_iter, model="dexp",
        flags={"fallback": "single_exponential", "reason": reason})


def _swap_components(res: FitResult) -> FitResult:
    perm = [1, 0, 3, 2, 4]
    names = DOUBLE_EXP.param_names
    vals = [res.params[n] for n in names]
    errs = [res.std_errors[n] for n in names]
    cov = res.covariance[np.ix_(perm, perm)]
    return FitResult(dict(zip(names, [vals[i] for i in perm])), dict(zip(names, [errs[i] for i in perm])),
                     cov, res.residual_norm, res.converged, res.n_iter, res.model, dict(res.flags))


def fit_single_exponential(trace, sigma=None, options: SolverOptions | None = None) -> FitResult:
    """y(t) = A exp(-t / tau) + C; used to compare against the double exponential."""
    t, y, s = _as_xy(trace, sigma)
    t = t - t.min()
    seed = _seed_dexp(t, y)
    return _fit_exp_decay(t, y, s, [max(y[0] - seed[4], 1e-12), seed[1], seed[4]], options)


# --------------------------------------------------------------------------- linear-in-disguise fits

def _linear_fit(X: np.ndarray, y: np.ndarray, w: np.ndarray | None, absolute: bool):
    W = np.ones_like(y) if w is None else w
    Xw = X * W[:, None]
    yw = y * W
    coef, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    resid = yw - Xw @ coef
    cost = float(resid @ resid)
    cov = np.linalg.inv(Xw.T @ Xw)
    dof = y.size - X.shape[1]
    if not absolute:
        cov = cov * (cost / dof if dof > 0 else np.nan)
    return coef, cov, math.sqrt(cost)


def fit_power_law(B, t1_values, mode: str | float = "free", sigma=None) -> FitResult:
    """T1 = a * B**(-n), fitted as a straight line in log-log space.

    ``mode`` is ``"free"`` or a fixed exponent (number, or ``"fixed:4"``).
    ``residual_norm`` is measured in log space.
    """
    B = np.asarray(B, float)
    T = np.asarray(t1_values, float)
    if np.any(B <= 0) or np.any(T <= 0):
        raise ValueError("B and T1 must be positive")
    w = None if sigma is None else T / np.asarray(sigma, float)
    absolute = sigma is not None
    lx, ly = np.log(B), np.log(T)
    if isinstance(mode, str) and mode.startswith("fixed:"):
        mode = float(mode.split(":", 1)[1])
    if mode == "free":
        if B.size < 2:
            raise ValueError("free power-law fit needs at least 2 points")
        coef, cov, rn = _linear_fit(np.column_stack([np.ones_like(lx), -lx]), ly, w, absolute)
        loga, n = coef
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
        a = math.exp(loga)
        jac = np.diag([a, 1.0])
        return FitResult({"a": a, "n": float(n)}, {"a": a * err[0], "n": float(err[1])},
                         jac @ cov @ jac.T, rn, True, 1, "powerlaw", {"log_a": float(loga)})
    n = float(mode)
    if B.size < 1:
        raise ValueError("need at least one point")
    coef, cov, rn = _linear_fit(np.ones((B.size, 1)), ly + n * lx, w, absolute)
    a = math.exp(coef[0])
    err = math.sqrt(max(cov[0, 0], 0)) if np.isfinite(cov[0, 0]) else math.nan
    return FitResult({"a": a, "n": n}, {"a": a * err, "n": 0.0}, np.array([[a * a * cov[0, 0]]]),
                     rn, True, 1, "powerlaw", {"log_a": float(coef[0]), "fixed_n": True})


def phonon_factor(T, B: float, g: float = 2.0):
    """2 N_ph + 1 = coth(g mu_B B / (2 k_B T))."""
    T = np.asarray(T, float)
    x = g * CONSTANTS.mu_B * B / (2 * CONSTANTS.k_B * T)
    return 1.0 / np.tanh(x)


def temperature_model(T, gamma_down_up: float, gamma0: float, B: float, g: float = 2.0):
    return 1.0 / (gamma_down_up * phonon_factor(T, B, g) + gamma0)


def fit_temperature_model(T, t1_values, B: float, g: float = 2.0, sigma=None,
                          options: SolverOptions | None = None) -> FitResult:
    """Fit T1(T) = 1 / (Gamma * (2 N_ph(T) + 1) + Gamma0); Gamma0 may be negative.

    Rates come out in the inverse of the units of ``t1_values``.
    """
    T = np.asarray(T, float)
    y = np.asarray(t1_values, float)
    if np.any(T <= 0):
        raise ValueError("temperatures must be positive")
    F = phonon_factor(T, B, g)
    seed, *_ = np.linalg.lstsq(np.column_stack([F, np.ones_like(F)]), 1.0 / y, rcond=None)

    def func(p, x):
        return 1.0 / (p[0] * phonon_factor(x, B, g) + p[1])

    def jac(p, x):
        Fx = phonon_factor(x, B, g)
        d = -1.0 / (p[0] * Fx + p[1]) ** 2
        return np.column_stack([d * Fx, d])

    model = Model("temp", ("gamma_down_up", "gamma0"), func, jac)
    res = nlls_solve(model, T, y, sigma, seed, options)
    res.flags.update({"B_T": B, "g": g})
    return res


def fit_zeeman_linear(B, splitting, sigma=None) -> FitResult:
    """splitting = g_eff * mu_B * B through the origin (splitting in eV)."""
    B = np.asarray(B, float)
    y = np.asarray(splitting, float)
    if B.size < 2:
        raise ValueError("need at least 2 fields")
    if np.all(B == 0):
        raise ValueError("all fields are zero; g is undetermined")
    X = (CONSTANTS.mu_B * B)[:, None]
    w = None if sigma is None else 1.0 / np.asarray(sigma, float)
    coef, cov, rn = _linear_fit(X, y, w, sigma is not None)
    return FitResult({"g_eff": float(coef[0])}, {"g_eff": float(math.sqrt(max(cov[0, 0], 0)))},
                     cov, rn, True, 1, "zeeman")


# --------------------------------------------------------------------------- line shapes

_GAUSS_K = 4 * math.log(2)


def pseudo_voigt(x, center: float, fwhm: float, eta: float, amplitude: float):
    """Unit-shape pseudo-Voigt: amplitude * (eta * L + (1 - eta) * G), both peak-normalised."""
    u = (np.asarray(x) - center) / fwhm
    return amplitude * (eta / (1 + 4 * u * u) + (1 - eta) * np.exp(-_GAUSS_K * u * u))


def _lines_model(n_lines: int) -> Model:
    names = []
    for i in range(n_lines):
        names += [f"center_{i}", f"fwhm_{i}", f"eta_{i}", f"amplitude_{i}"]
    names.append("background")

    def func(p, x):
        y = np.full_like(x, p[-1])
        for i in range(n_lines):
            y = y + pseudo_voigt(x, *p[4 * i:4 * i + 4])
        return y

    def jac(p, x):
        cols = []
        for i in range(n_lines):
            c, f, eta, amp = p[4 * i:4 * i + 4]
            u = (x - c) / f
            L = 1 / (1 + 4 * u * u)
            G = np.exp(-_GAUSS_K * u * u)
            # d/du of the shape
            dshape_du = eta * (-8 * u) * L**2 + (1 - eta) * (-2 * _GAUSS_K * u) * G
            cols += [amp * dshape_du * (-1 / f), amp * dshape_du * (-u / f), amp * (L - G),
                     eta * L + (1 - eta) * G]
        cols.append(np.ones_like(x))
        return np.column_stack(cols)

    return Model(f"lines{n_lines}", tuple(names), func, jac)


def _half_max_width(x, y, i_peak, bg):
    half = bg + (y[i_peak] - bg) / 2
    lo = i_peak
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i_peak
    while hi < y.size - 1 and y[hi] > half:
        hi += 1
    return max(x[hi] - x[lo], 2 * abs(x[1] - x[0]))


def fit_spectral_lines(spectrum, n_lines: int, init_centers: Sequence[float],
                       init_fwhm: float | None = None, sigma=None,
                       options: SolverOptions | None = None) -> FitResult:
    """Fit a sum of ``n_lines`` pseudo-Voigt profiles plus a constant background.

    ``spectrum`` is a :class:`~donorspin.spectra.Spectrum` or ``(energy, y[, sigma])``.
    Parameters are named ``center_i``, ``fwhm_i``, ``eta_i``, ``amplitude_i``
    with lines ordered by ascending center. ``flags["overlapping"]`` lists
    neighbouring pairs closer than a tenth of their width.
    """
    if n_lines < 1:
        raise ValueError("n_lines must be at least 1")
    if len(init_centers) != n_lines:
        raise ValueError("need one initial center per line")
    if hasattr(spectrum, "energy"):
        x = np.asarray(spectrum.energy, float)
        y = np.asarray(spectrum.sampled if spectrum.sampled is not None else spectrum.expected, float)
        s = sigma if sigma is not None else (spectrum.err if spectrum.sampled is not None else None)
    else:
        x, y, s = _as_xy(spectrum, sigma)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if s is not None:
        s = np.broadcast_to(np.asarray(s, float), y.shape)[order]

    bg = float(np.percentile(y, 5))
    p0 = []
    for c in sorted(init_centers):
        i = int(np.argmin(np.abs(x - c)))
        amp = max(float(y[i] - bg), 0.0)
        width = init_fwhm if init_fwhm is not None else _half_max_width(x, y, i, bg)
        p0 += [float(c), width, 0.5, amp]
    p0.append(bg)

    model = _lines_model(n_lines)
    bounds = {}
    for i in range(n_lines):
        bounds[f"fwhm_{i}"] = (1e-300, np.inf)
        bounds[f"eta_{i}"] = (0.0, 1.0)
        bounds[f"amplitude_{i}"] = (0.0, np.inf)
    res = nlls_solve(model, x, y, s, p0, options, bounds)

    # reorder lines by center
    centers = [res.params[f"center_{i}"] for i in range(n_lines)]
    idx = list(np.argsort(centers))
    if idx != list(range(n_lines)):
        perm = [4 * j + k for j in idx for k in range(4)] + [4 * n_lines]
        names = model.param_names
        vals = np.array([res.params[n] for n in names])[perm]
        errs = np.array([res.std_errors[n] for n in names])[perm]
        res = FitResult(dict(zip(names, vals.tolist())), dict(zip(names, errs.tolist())),
                        res.covariance[np.ix_(perm, perm)], res.residual_norm, res.converged,
                        res.n_iter, res.model, dict(res.flags))
    overlapping = []
    for i in range(n_lines - 1):
        sep = res.params[f"center_{i + 1}"] - res.params[f"center_{i}"]
        width = max(res.params[f"fwhm_{i}"], res.params[f"fwhm_{i + 1}"])
        if sep < 0.1 * width:
            overlapping.append((i, i + 1))
    res.flags["overlapping"] = overlapping
    return res


def line_centers(res: FitResult) -> list[float]:
    n = sum(1 for k in res.params if k.startswith("center_"))
    return [res.params[f"center_{i}"] for i in range(n)]
