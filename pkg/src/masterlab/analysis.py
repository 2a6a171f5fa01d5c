"""Rate extraction, closed-form rate formulas and drive sweeps."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import dissipators as dsp
from . import dynamics as dyn
from . import hilbert as hs
from . import model as mdl
from .environment import SpectralDensity, flat
from .exceptions import FitError, MasterlabError, NotConvergedError, NumericalError

log = logging.getLogger(__name__)

MAX_FIT_ITER = 200
# Undriven records run this much past n_decays golden-rule decay constants so
# a fitted rate slightly below the estimate still spans the window.
UNDRIVEN_SPAN_MARGIN = 1.25


@dataclass(frozen=True)
class FitResult:
    A: float
    gamma: float
    B: float
    rms_residual: float
    stderr: tuple
    n_iter: int

    def model(self, t):
        return self.A * np.exp(-self.gamma * np.asarray(t)) + self.B


def _prefit(t: np.ndarray, y: np.ndarray):
    n_tail = max(len(y) // 10, 1)
    B = float(np.mean(y[-n_tail:]))
    A = float(y[0] - B)
    r = (y - B) * np.sign(A if A != 0 else 1.0)
    # log-slope over the part of the record that is still well above the tail
    use = r > 0.05 * abs(A) if A != 0 else np.zeros_like(r, dtype=bool)
    if use.sum() < 3:
        use = r > 0
    if use.sum() < 3:
        raise FitError("no decaying component found in the data")
    slope = np.polyfit(t[use], np.log(r[use]), 1)[0]
    return A, -slope, B


def fit_exp_decay(t, y, min_decays: float = 2.0) -> FitResult:
    """Least-squares fit of ``A exp(-gamma t) + B``.

    Initialization: B from the mean of the last 10% of the record, A = y(0) - B,
    gamma from a log-linear regression of y - B. The fit itself is MINPACK's
    Levenberg-Marquardt with an analytic Jacobian, capped at 200 iterations.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 20:
        raise FitError(f"need at least 20 samples, got {len(t)}")
    A0, g0, B0 = _prefit(t, y)
    if not g0 > 0:
        raise FitError(f"pre-fit slope is non-negative (gamma estimate {g0:.3g}): no decay")
    t0 = t[0]
    tt = t - t0
    if g0 * tt[-1] < min_decays:
        raise FitError(
            f"record spans {g0 * tt[-1]:.2f} decay constants; at least {min_decays} required"
        )

    def resid(p):
        return p[0] * np.exp(-p[1] * tt) + p[2] - y

    def jac(p):
        e = np.exp(-p[1] * tt)
        return np.column_stack([e, -p[0] * tt * e, np.ones_like(tt)])

    scale = max(np.max(np.abs(y)), 1e-300)
    res = least_squares(resid, [A0, g0, B0], jac=jac, method="lm", xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=MAX_FIT_ITER, x_scale="jac")
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitError(f"fit did not converge after {MAX_FIT_ITER} iterations: {res.message}")
    A, gamma, B = res.x
    if not gamma * tt[-1] >= min_decays:
        raise FitError(
            f"record spans {gamma * tt[-1]:.2f} fitted decay constants; at least {min_decays} required"
        )
    rms = float(np.sqrt(np.mean(res.fun ** 2)))
    dof = max(len(t) - 3, 1)
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * (np.sum(res.fun ** 2) / dof)
        stderr = tuple(float(s) for s in np.sqrt(np.abs(np.diag(cov))))
    except np.linalg.LinAlgError:
        stderr = (math.nan,) * 3
    # shift amplitude back to the original time origin
    A = A * math.exp(gamma * t0)
    return FitResult(A=float(A), gamma=float(gamma), B=float(B), rms_residual=rms / scale,
                     stderr=stderr, n_iter=int(res.nfev))


# ---------------------------------------------------------------------------
# Closed-form rates
# ---------------------------------------------------------------------------


def _purcell_factor(omega_q: float, p: mdl.SystemParams) -> float:
    den = omega_q ** 2 - p.omega_r ** 2
    if den == 0:
        raise ZeroDivisionError("qubit frequency coincides with the resonator: rate formula singular")
    return (2.0 * p.omega_r * p.g / den) ** 2


def purcell_rate_analytic(p: mdl.SystemParams, J: SpectralDensity) -> float:
    """J(w_q) |2 w_r g / (w_q^2 - w_r^2)|^2."""
    if p.delta == 0 or p.sigma == 0:
        raise ZeroDivisionError("singular detuning")
    return float(J(p.omega_q)) * _purcell_factor(p.omega_q, p)


def lindblad_purcell_rate(p: mdl.SystemParams) -> float:
    """Dispersive Lindblad estimate (g / Delta)^2 kappa."""
    return (p.g / p.delta) ** 2 * p.kappa


def br_lindblad_ratio(p: mdl.SystemParams) -> float:
    return (2.0 * p.omega_r / (p.omega_r + p.omega_q)) ** 2


def stark_rate(p: mdl.SystemParams, J: SpectralDensity, nbar: float) -> float:
    """Purcell rate evaluated at the AC-Stark-shifted qubit frequency."""
    wq = mdl.stark_shifted_freq(p, nbar)
    if wq == p.omega_r:
        raise ZeroDivisionError(f"Stark-shifted qubit frequency hits the resonator at nbar={nbar}")
    return float(J(wq)) * _purcell_factor(wq, p)


def gain_from_traces(gamma_base: float, gamma_filtered: float) -> float:
    if not (gamma_base > 0 and gamma_filtered > 0):
        raise ValueError("both rates must be positive")
    return gamma_base / gamma_filtered


# ---------------------------------------------------------------------------
# Simulation set-up
# ---------------------------------------------------------------------------

DISSIPATORS = ("lindblad", "redfield-static", "redfield-td")


def build_equation(p: mdl.SystemParams, dissipator: str, density: Optional[SpectralDensity] = None,
                   drive_kind: str = "none", hamiltonian: str = "rabi",
                   omega_sec: Optional[float] = None) -> dyn.MasterEquation:
    if dissipator not in DISSIPATORS:
        raise MasterlabError(f"unknown dissipator {dissipator!r}")
    ops = mdl.operators(p)
    H0 = mdl.build_rabi(p) if hamiltonian == "rabi" else mdl.build_jc(p)
    if dissipator == "lindblad":
        diss = dyn.LindbladDissipator(ops.a, p.kappa)
    else:
        spec = dsp.CorrelationSpec(ops.X, density if density is not None else flat(p.kappa))
        diss = dyn.RedfieldDissipator(spec, H0, time_dependent=dissipator == "redfield-td",
                                      omega_sec=omega_sec)
    return dyn.MasterEquation(H0=H0, ops=ops, dissipator=diss, drive=mdl.default_drive(p, drive_kind))


def dressed_initial_state(eq: dyn.MasterEquation, p: mdl.SystemParams, name: str = "e0") -> np.ndarray:
    eig = hs.eigh(eq.H0)
    return hs.projector(eig.vectors[:, mdl.dressed_index(eig, p, name)])


def golden_rule_rate(eq: dyn.MasterEquation, p: mdl.SystemParams, name: str = "e0") -> float:
    """Total downward rate out of a dressed state in the H0 eigenbasis."""
    eig = hs.eigh(eq.H0)
    k = mdl.dressed_index(eig, p, name)
    diss = eq.dissipator
    if isinstance(diss, dyn.LindbladDissipator):
        amp = eig.to_eigenbasis(diss.jump)
        return float(diss.rate * np.sum(np.abs(amp[:k, k]) ** 2))
    A = eig.to_eigenbasis(diss.spec.coupling)
    J = diss.spec.density(eig.values[k] - eig.values[:k])
    return float(np.sum(J * np.abs(A[:k, k]) ** 2))


def truncation_populations(states: np.ndarray, N: int) -> float:
    """Largest combined population of the top two Fock levels over the states."""
    diag = np.real(np.einsum("tii->ti", np.asarray(states)))
    fock = diag.reshape(len(diag), 2, N).sum(axis=1)
    return float(np.max(fock[:, -2:].sum(axis=1)))


def auto_truncation(nbar_estimate: float, floor: int = 6) -> int:
    """Fock cutoff that keeps a coherent state's top-level weight below ~1e-7."""
    n = max(nbar_estimate, 0.0)
    return max(floor, int(math.ceil(n + 6.0 * math.sqrt(n) + 6)))


@dataclass
class DecayMeasurement:
    fit: Optional[FitResult]
    times: np.ndarray
    sigma_z: np.ndarray
    nbar: float
    truncation_ok: bool
    min_eig: float
    trajectory: dyn.Trajectory = field(repr=False)
    error: Optional[str] = None

    @property
    def no_decay(self) -> bool:
        return self.fit is None and self.error is not None and is_no_decay(self.error)

    @property
    def gamma(self) -> float:
        """Fitted rate; 0 for data with no decaying component, NaN after other failures."""
        if self.fit is not None:
            return self.fit.gamma
        return 0.0 if self.no_decay else math.nan


def measure_decay(eq: dyn.MasterEquation, p: mdl.SystemParams, n_decays: float = 3.0,
                  settle_kappa_times: float = 3.0, steps_per_period: Optional[int] = None,
                  samples: int = 400, chunk_periods: int = 200, max_time: float = 1e5,
                  gamma_guess: Optional[float] = None) -> DecayMeasurement:
    """Propagate from the dressed |e0> and fit the relaxation of <sigma_z>.

    Driven runs sample <sigma_z> stroboscopically at integer drive periods and
    fit only after ``settle_kappa_times / kappa`` so the cavity ring-up is
    excluded. The run is extended until the fit window spans ``n_decays``
    decay constants.
    """
    rho0 = dressed_initial_state(eq, p)
    gamma_est = gamma_guess or golden_rule_rate(eq, p)
    if not gamma_est > 0:
        gamma_est = 1e-3 * p.kappa
    if not eq.driven:
        t_final = UNDRIVEN_SPAN_MARGIN * n_decays / gamma_est
        times = np.linspace(0.0, t_final, samples)
        traj = dyn.propagate_constant(eq, rho0, times)
        t, y = times, traj["sigma_z"]
        nbar = float(traj["photon_number"][-1])
        trunc = truncation_populations(traj.states, p.n_trunc) < 1e-6
        try:
            fit = fit_exp_decay(t, y, min_decays=n_decays)
        except FitError as exc:
            return DecayMeasurement(None, t, y, nbar, trunc, traj.min_eig, traj, error=str(exc))
        return DecayMeasurement(fit, t, y, nbar, trunc, traj.min_eig, traj)

    prop = dyn.PeriodicPropagator(eq, steps_per_period=steps_per_period)
    T = prop.period
    t_settle = settle_kappa_times / p.kappa
    start = int(math.ceil(t_settle / T))
    target = start + int(math.ceil(n_decays / gamma_est / T))
    pieces: List[dyn.Trajectory] = []
    rho = rho0
    done = 0
    fit = None
    error = None
    while True:
        n = max(target - done, 1)
        n = min(n, max(chunk_periods, target - done))
        tr = prop.run(rho, n, rho_start_period=done)
        pieces.append(tr)
        rho = tr.meta["final"]
        done += n
        strobe_t, strobe_y = _stroboscopic(pieces)
        m = strobe_t >= start * T - 1e-12
        if done >= target:
            span = strobe_t[m][-1] - strobe_t[m][0]
            try:
                g0 = fit_exp_decay(strobe_t[m], strobe_y[m], min_decays=0.0).gamma
            except FitError:
                g0 = gamma_est
            if g0 * span >= n_decays:
                break
            need = n_decays / max(g0, 1e-12) - span
            target = done + max(int(math.ceil(need / T * 1.05)), 1)
        if done * T > max_time:
            error = f"gave up after t={done * T:.4g} ns without spanning {n_decays} decay constants"
            break
    traj = _concat(pieces)
    strobe_t, strobe_y = _stroboscopic(pieces)
    m = strobe_t >= start * T - 1e-12
    try:
        nbar = dyn.steady_mean_photon(traj, T)
    except NotConvergedError as exc:
        nbar = _final_period_mean(traj, T)
        error = error or str(exc)
    trunc = truncation_populations(np.concatenate([pc.states for pc in pieces]), p.n_trunc) < 1e-6
    if error is None:
        try:
            fit = fit_exp_decay(strobe_t[m], strobe_y[m], min_decays=n_decays)
        except FitError as exc:
            error = str(exc)
    return DecayMeasurement(fit, strobe_t, strobe_y, nbar, trunc, traj.min_eig, traj, error=error)


def _stroboscopic(pieces: Sequence[dyn.Trajectory]):
    ts, ys = [], []
    for k, pc in enumerate(pieces):
        S = pc.meta["samples_per_period"]
        sl = slice(0 if k == 0 else S, None, S)
        ts.append(pc.times[sl])
        ys.append(pc["sigma_z"][sl])
    return np.concatenate(ts), np.concatenate(ys)


def _concat(pieces: Sequence[dyn.Trajectory]) -> dyn.Trajectory:
    times = np.concatenate([pc.times if k == 0 else pc.times[1:] for k, pc in enumerate(pieces)])
    obs = {}
    for name in pieces[0].observables:
        if name == "min_eig":
            obs[name] = np.concatenate([pc[name] for pc in pieces])
        else:
            obs[name] = np.concatenate([pc[name] if k == 0 else pc[name][1:] for k, pc in enumerate(pieces)])
    states = np.concatenate([pc.states for pc in pieces])
    st = np.concatenate([pc.state_times for pc in pieces])
    keep = dyn._thin(len(states))
    return dyn.Trajectory(times=times, observables=obs, states=states[keep], state_times=st[keep],
                          meta=dict(pieces[-1].meta))


def _final_period_mean(traj: dyn.Trajectory, T: float) -> float:
    t = traj.times
    m = t >= t[-1] - T - 1e-12
    return float(np.trapezoid(traj["photon_number"][m], t[m]) / (t[m][-1] - t[m][0]))


def downward_rate(meas: DecayMeasurement, eq: dyn.MasterEquation, p: mdl.SystemParams) -> float:
    """Rate of the |g0> <- |e0> transfer, separated from any upward rate.

    For a two-level population balance <sigma_z> relaxes at the sum of the
    downward and upward rates, and the asymptote fixes their ratio: the
    steady excited population is p = (B - c_g) / (c_e - c_g), with c_e and
    c_g the <sigma_z> values of the dressed |e0> and |g0>. The downward rate
    is then gamma (1 - p).
    """
    if meas.fit is None:
        return meas.gamma
    eig = hs.eigh(eq.H0)
    vals = []
    for name in ("e0", "g0"):
        v = eig.vectors[:, mdl.dressed_index(eig, p, name)]
        vals.append(float(np.real(v.conj() @ eq.ops.sigma_z @ v)))
    c_e, c_g = vals
    p_exc = (meas.fit.B - c_g) / (c_e - c_g)
    return meas.fit.gamma * (1.0 - p_exc)


# ---------------------------------------------------------------------------
# Drive sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecaySetup:
    """Everything needed to measure one relaxation rate, minus the drive amplitude."""

    params: mdl.SystemParams
    dissipator: str = "redfield-td"
    density: Optional[SpectralDensity] = None
    drive_kind: str = "cosine"
    hamiltonian: str = "rabi"
    omega_sec: Optional[float] = None
    auto_truncation: bool = True
    n_decays: float = 2.0
    settle_kappa_times: float = 3.0
    steps_per_period: Optional[int] = None

    def nbar_estimate(self, amp: float) -> float:
        k = self.params.kappa
        if self.drive_kind == "cosine":
            return (amp / k) ** 2
        if self.drive_kind == "rwa":
            return 4.0 * (amp / k) ** 2
        return 0.0

    def at(self, amp: float) -> mdl.SystemParams:
        p = self.params.with_(drive_amp=amp)
        if self.auto_truncation:
            p = p.with_(n_trunc=auto_truncation(self.nbar_estimate(amp)))
        return p

    def equation(self, amp: float) -> dyn.MasterEquation:
        p = self.at(amp)
        kind = self.drive_kind if amp > 0 else "none"
        return build_equation(p, self.dissipator, self.density, drive_kind=kind,
                              hamiltonian=self.hamiltonian, omega_sec=self.omega_sec)


@dataclass
class SweepRow:
    drive_amp: float
    nbar: float
    gamma1: float
    gamma1_over_gamma0: float
    formula_gamma1: float
    formula_over_formula0: float = math.nan
    rel_error: float = math.nan
    n_trunc: int = 0
    steps_per_period: int = 0
    min_eig: float = math.nan
    truncation_ok: bool = True
    status: str = "ok"

    @classmethod
    def columns(cls) -> List[str]:
        return list(cls.__dataclass_fields__)

    def values(self) -> list:
        return [getattr(self, c) for c in self.columns()]


def is_no_decay(message: str) -> bool:
    """True for the fit errors that mean the data simply do not decay."""
    return "no decay" in message or "no decaying" in message


def measure_point(setup: DecaySetup, amp: float) -> SweepRow:
    """One sweep row; failures are reported in ``status`` rather than raised."""
    p = setup.at(amp)
    row = SweepRow(drive_amp=amp, nbar=math.nan, gamma1=math.nan, gamma1_over_gamma0=math.nan,
                   formula_gamma1=math.nan, n_trunc=p.n_trunc)
    try:
        eq = setup.equation(amp)
        meas = measure_decay(eq, p, n_decays=setup.n_decays, settle_kappa_times=setup.settle_kappa_times,
                             steps_per_period=setup.steps_per_period)
    except (NumericalError, MasterlabError, np.linalg.LinAlgError, FloatingPointError) as exc:
        row.status = f"error: {exc}"
        return row
    row.nbar = max(meas.nbar, 0.0) if eq.driven else 0.0
    row.gamma1 = meas.gamma
    row.min_eig = meas.min_eig
    row.truncation_ok = meas.truncation_ok
    row.steps_per_period = int(meas.trajectory.meta.get("steps_per_period", 0))
    if meas.error:
        row.status = "no-decay" if is_no_decay(meas.error) else f"error: {meas.error}"
    elif not meas.truncation_ok:
        row.status = "truncation"
    J = setup.density if setup.density is not None else flat(p.kappa)
    try:
        row.formula_gamma1 = stark_rate(p, J, row.nbar)
    except ZeroDivisionError as exc:
        row.status = f"error: {exc}"
    if row.gamma1 > 0 and row.formula_gamma1 > 0:
        row.rel_error = (row.gamma1 - row.formula_gamma1) / row.gamma1
    return row


def _normalize(rows: List[SweepRow], gamma0: float, formula0: float) -> None:
    for r in rows:
        r.gamma1_over_gamma0 = r.gamma1 / gamma0 if gamma0 > 0 else math.nan
        r.formula_over_formula0 = r.formula_gamma1 / formula0 if formula0 > 0 else math.nan


def run_sweep(setup: DecaySetup, drive_grid: Sequence[float], jobs: int = 1) -> List[SweepRow]:
    """Measure Gamma_1 for every drive amplitude (rad/ns) in a monotone grid.

    The normalized columns divide by the zero-drive fitted rate and zero-drive
    formula; if the grid has no zero amplitude an extra undriven run supplies
    them.
    """
    grid = [float(a) for a in drive_grid]
    if not grid:
        raise ValueError("empty drive grid")
    if any(a < 0 for a in grid) or any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("drive grid must be non-negative and monotone non-decreasing")
    amps = grid if grid[0] == 0.0 else [0.0] + grid
    if jobs > 1 and len(amps) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(measure_point, [setup] * len(amps), amps))
    else:
        rows = [measure_point(setup, a) for a in amps]
    base = rows[0]
    _normalize(rows, base.gamma1, base.formula_gamma1)
    return rows if grid[0] == 0.0 else rows[1:]


def mean_relative_error(rows: Sequence[SweepRow], normalized: bool = False) -> float:
    """Mean |gamma1 - formula| / gamma1 over the successful rows.

    With ``normalized`` the comparison is between the curves divided by their
    zero-drive values.
    """
    errs = []
    for r in rows:
        if r.status != "ok":
            continue
        if normalized:
            errs.append(abs(r.gamma1_over_gamma0 - r.formula_over_formula0) / r.gamma1_over_gamma0)
        else:
            errs.append(abs(r.rel_error))
    if not errs:
        raise NumericalError("no successful rows to compare")
    return float(np.mean(errs))
