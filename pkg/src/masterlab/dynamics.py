"""Time propagation of the density matrix.

Three engines share one :class:`MasterEquation` description:

* :func:`propagate` - adaptive Dormand-Prince 5(4) on any right-hand side,
  evaluated in the lab frame. General but slow for long driven runs.
* :func:`propagate_constant` - exact exponentiation of a time-independent
  generator (undriven problems).
* :class:`PeriodicPropagator` - fixed-step RK4 in the frame rotating at the
  drive frequency. The generator is periodic in the drive period, so every
  stage operator (including instantaneous Redfield factors) is computed once
  on the stage grid and reused each period.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from . import dissipators as dsp
from . import hilbert as hs
from .exceptions import IntegrationError, NotConvergedError, StiffnessError
from .model import DriveSpec, Operators

log = logging.getLogger(__name__)

MAX_STORED_STATES = 2000
TRACE_TOL = 1e-6
POSITIVITY_TOL = -1e-6
MIN_SAMPLES_PER_PERIOD = 40
# Lindblad runs promise min_eig >= POSITIVITY_TOL; at 16 RK4 steps per period
# the local error alone reaches -7e-6, at 32 it is ~1e-8.
LINDBLAD_MIN_STEPS = 32


@dataclass(frozen=True)
class PropagatorConfig:
    t_final: float
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    dt_out: Optional[float] = None
    method: str = "RK45"

    def __post_init__(self):
        if self.method not in ("RK45", "DOP853"):
            raise ValueError(f"unsupported integrator {self.method!r}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")

    def grid(self) -> np.ndarray:
        dt = self.dt_out or self.t_final / 400
        n = max(int(round(self.t_final / dt)), 1)
        return np.linspace(0.0, self.t_final, n + 1)


@dataclass
class Trajectory:
    times: np.ndarray
    observables: Dict[str, np.ndarray]
    states: Optional[np.ndarray] = field(default=None, repr=False)
    state_times: Optional[np.ndarray] = field(default=None, repr=False)
    meta: Dict[str, object] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.observables[name]

    @property
    def final_state(self) -> Optional[np.ndarray]:
        return None if self.states is None else self.states[-1]

    @property
    def min_eig(self) -> float:
        return float(np.min(self.observables["min_eig"])) if "min_eig" in self.observables else math.nan

    @property
    def positivity_violated(self) -> bool:
        return self.min_eig < POSITIVITY_TOL


def _thin(n: int) -> np.ndarray:
    if n <= MAX_STORED_STATES:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, MAX_STORED_STATES).round().astype(int))


def _observe(rhos: np.ndarray, observables: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    out = {name: np.real(np.einsum("tij,ji->t", rhos, O)) for name, O in observables.items()}
    out["trace"] = np.real(np.einsum("tii->t", rhos))
    herm = 0.5 * (rhos + np.conj(np.transpose(rhos, (0, 2, 1))))
    out["min_eig"] = np.linalg.eigvalsh(herm)[:, 0]
    return out


def _check_trace(obs: Dict[str, np.ndarray]):
    drift = float(np.max(np.abs(obs["trace"] - 1.0)))
    if drift > TRACE_TOL:
        raise IntegrationError(f"trace drifted by {drift:.2e} (limit {TRACE_TOL:.0e})")


def propagate(rhs: Callable[[float, np.ndarray], np.ndarray], rho0: np.ndarray, cfg: PropagatorConfig,
              observables: Optional[Mapping[str, np.ndarray]] = None,
              t_eval: Optional[np.ndarray] = None) -> Trajectory:
    """Integrate d rho/dt = rhs(t, rho) with an adaptive Dormand-Prince pair (5(4) or 8(5,3))."""
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    if not hs.is_hermitian(rho0, rtol=1e-10) or abs(np.trace(rho0) - 1) > 1e-10:
        raise ValueError("initial state must be Hermitian with unit trace")
    if np.linalg.eigvalsh(rho0)[0] < -1e-10:
        raise ValueError("initial state is not positive semidefinite")
    times = cfg.grid() if t_eval is None else np.asarray(t_eval, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("output times must be strictly increasing")

    def f(t, y):
        return rhs(t, y.reshape(d, d)).reshape(-1)

    sol = solve_ivp(f, (times[0], times[-1]), rho0.reshape(-1), method=cfg.method, t_eval=times,
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step)
    if sol.status != 0:
        raise StiffnessError(f"integration stopped at t={sol.t[-1] if sol.t.size else times[0]:.4g}: {sol.message}")
    rhos = sol.y.T.reshape(-1, d, d)
    obs = _observe(rhos, observables or {})
    _check_trace(obs)
    keep = _thin(len(times))
    return Trajectory(times=sol.t, observables=obs, states=rhos[keep], state_times=sol.t[keep],
                      meta={"nfev": sol.nfev, "engine": cfg.method.lower()})


def steady_mean_photon(traj: Trajectory, drive_period: float, name: str = "photon_number",
                       rtol: float = 5e-3, atol: float = 1e-9) -> float:
    """Average photon number over the final drive period.

    The trajectory must have settled: the averages over the last two periods
    may differ by at most ``rtol`` (relative) or ``atol`` (absolute).
    """
    t, n = traj.times, traj[name]
    if t[-1] - t[0] < 2 * drive_period:
        raise NotConvergedError("trajectory shorter than two drive periods")

    def avg(t0, t1):
        m = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
        return np.trapezoid(n[m], t[m]) / (t[m][-1] - t[m][0])

    last = avg(t[-1] - drive_period, t[-1])
    prev = avg(t[-1] - 2 * drive_period, t[-1] - drive_period)
    drift = abs(last - prev)
    if drift > max(atol, rtol * abs(last)):
        raise NotConvergedError(f"period-averaged photon number still drifting: {prev:.6g} -> {last:.6g}")
    return float(last)


# ---------------------------------------------------------------------------
# Master equation description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LindbladDissipator:
    jump: np.ndarray = field(repr=False)
    rate: float = 1.0

    def apply(self, t, H_t, rho):
        return dsp.lindblad_apply(rho, self.jump, self.rate)


@dataclass
class RedfieldDissipator:
    """Static (H0 eigenbasis) or time-dependent (instantaneous eigenbasis) Redfield."""

    spec: dsp.CorrelationSpec
    H0: np.ndarray = field(repr=False)
    time_dependent: bool = False
    omega_sec: Optional[float] = None

    def __post_init__(self):
        self.tensor = dsp.build_redfield(self.H0, self.spec, self.omega_sec)
        self._gauge = None

    @property
    def secular(self) -> bool:
        return self.omega_sec is not None and not math.isinf(self.omega_sec)

    def static_factors(self):
        return self.tensor.lab_factors()

    def apply(self, t, H_t, rho):
        if not self.time_dependent:
            R = self.tensor
            if not self.secular:
                A, lam = self.static_factors()
                return dsp.factored_apply(A, lam, rho)
            return R.basis.from_eigenbasis(dsp.redfield_apply(R, R.basis.to_eigenbasis(rho)))
        if not self.secular:
            A, lam = dsp.instantaneous_factors(H_t, self.spec)
            return dsp.factored_apply(A, lam, rho)
        out, _ = dsp.td_redfield_apply(H_t, self.spec, rho, omega_sec=self.omega_sec)
        return out


@dataclass
class MasterEquation:
    """d rho/dt = -i[H0 + H_d(t), rho] + D_t(rho) on the composite space."""

    H0: np.ndarray = field(repr=False)
    ops: Operators = field(repr=False)
    dissipator: object
    drive: DriveSpec = DriveSpec()

    @property
    def dim(self) -> int:
        return self.H0.shape[0]

    @property
    def driven(self) -> bool:
        return self.drive.active

    def hamiltonian(self, t: float) -> np.ndarray:
        if not self.driven:
            return self.H0
        return self.H0 + _drive_matrix(self.drive, t, self.ops)

    def rhs(self, t: float, rho: np.ndarray) -> np.ndarray:
        H = self.hamiltonian(t)
        return -1j * (H @ rho - rho @ H) + self.dissipator.apply(t, H, rho)

    def default_observables(self) -> Dict[str, np.ndarray]:
        return {"sigma_z": self.ops.sigma_z, "photon_number": self.ops.n}


def _drive_matrix(drive: DriveSpec, t: float, ops: Operators) -> np.ndarray:
    w = drive.frequency
    if drive.kind == "cosine":
        return drive.amplitude * math.cos(w * t) * ops.X
    if drive.kind == "rwa":
        ph = complex(math.cos(w * t), math.sin(w * t))
        return drive.amplitude * (ph * ops.a + ph.conjugate() * ops.adag)
    return np.zeros_like(ops.X)


def superoperator(eq: MasterEquation, t: float = 0.0) -> np.ndarray:
    """Generator at time t acting on row-major vec(rho)."""
    d = eq.dim
    basis = np.eye(d * d, dtype=complex).reshape(d * d, d, d)
    cols = [eq.rhs(t, E).reshape(-1) for E in basis]
    return np.array(cols).T


def propagate_constant(eq: MasterEquation, rho0: np.ndarray, times: np.ndarray,
                       observables: Optional[Mapping[str, np.ndarray]] = None) -> Trajectory:
    """Exact propagation for an undriven equation on a uniform time grid."""
    if eq.driven:
        raise ValueError("propagate_constant needs a time-independent generator")
    times = np.asarray(times, dtype=float)
    dt = np.diff(times)
    if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("propagate_constant needs a uniform, increasing grid")
    d = eq.dim
    step = scipy.linalg.expm(superoperator(eq) * dt[0])
    v = np.asarray(rho0, dtype=complex).reshape(-1)
    if times[0] != 0.0:
        v = scipy.linalg.expm(superoperator(eq) * times[0]) @ v
    out = np.empty((len(times), d * d), dtype=complex)
    out[0] = v
    for k in range(1, len(times)):
        v = step @ v
        out[k] = v
    rhos = out.reshape(-1, d, d)
    obs = _observe(rhos, observables if observables is not None else eq.default_observables())
    _check_trace(obs)
    keep = _thin(len(times))
    return Trajectory(times=times, observables=obs, states=rhos[keep], state_times=times[keep],
                      meta={"engine": "expm"})


# ---------------------------------------------------------------------------
# Periodic fixed-step engine
# ---------------------------------------------------------------------------


class PeriodicPropagator:
    """RK4 with ``steps_per_period`` steps in the frame rotating at the drive frequency.

    The frame is U(t) = exp(-i w_d t N_exc) with N_exc = a^dag a + sigma_z/2,
    which commutes with sigma_z and a^dag a, so those observables read the
    same in both frames. At integer drive periods U is a global phase and the
    rotating-frame state equals the lab-frame state.
    """

    def __init__(self, eq: MasterEquation, steps_per_period: Optional[int] = None,
                 min_steps: int = 16, stability_margin: float = 2.0):
        if not eq.driven:
            raise ValueError("PeriodicPropagator needs an active drive")
        diss = eq.dissipator
        if isinstance(diss, LindbladDissipator):
            min_steps = max(min_steps, LINDBLAD_MIN_STEPS)
        if isinstance(diss, RedfieldDissipator) and diss.secular:
            raise ValueError("secular-filtered Redfield has no factored form; use propagate()")
        self.eq = eq
        self.omega = eq.drive.frequency
        self.period = eq.drive.period
        nex = np.real(np.diag(eq.ops.excitations))
        self._nex = nex
        self._dn = nex[:, None] - nex[None, :]
        self._sz = np.real(np.diag(eq.ops.sigma_z))
        self._nn = np.real(np.diag(eq.ops.n))
        if steps_per_period is None:
            # probe the generator on a coarse grid, then refine until RK4 is stable
            self._set_steps(min_steps)
            radius = self.spectral_radius()
            steps_per_period = max(min_steps, int(math.ceil(self.period * radius / stability_margin)))
            if steps_per_period != self.M:
                self._set_steps(steps_per_period)
        else:
            self._set_steps(int(steps_per_period))

    def _set_steps(self, M: int):
        self.M = M
        self.h = self.period / M
        self._build()

    def spectral_radius(self, n_iter: int = 40, seed: int = 0) -> float:
        """Power-iteration estimate of max |eigenvalue| of the generator over the stage grid."""
        rng = np.random.default_rng(seed)
        d = self.eq.dim
        best = 0.0
        for i in range(0, 2 * self.M, max(1, self.M // 4)):
            v = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            v = v + v.conj().T
            lam = 0.0
            for _ in range(n_iter):
                w = self._f(i, v)
                nrm = np.linalg.norm(w)
                lam = nrm / np.linalg.norm(v)
                v = w / nrm
            best = max(best, lam)
        return 1.1 * best

    def _phase(self, tau: float) -> np.ndarray:
        return np.exp(1j * self.omega * tau * self._dn)

    def _build(self):
        eq, M = self.eq, self.M
        taus = np.arange(2 * M) * (self.h / 2)
        diss = eq.dissipator
        d = eq.dim
        self.H = np.empty((2 * M, d, d), dtype=complex)
        self.kind = "lindblad" if isinstance(diss, LindbladDissipator) else "redfield"
        if self.kind == "redfield":
            self.A = np.empty((2 * M, d, d), dtype=complex)
            self.L = np.empty((2 * M, d, d), dtype=complex)
            if not diss.time_dependent:
                A0, L0 = diss.static_factors()
        else:
            a = diss.jump
            self.jump = a
            self.jump_dag = a.conj().T
            self.jump_n = self.jump_dag @ a
            self.rate = diss.rate
        wN = self.omega * np.diag(self._nex)
        for i, tau in enumerate(taus):
            P = self._phase(tau)
            H_lab = eq.hamiltonian(tau)
            self.H[i] = P * H_lab - wN
            if self.kind == "redfield":
                if diss.time_dependent:
                    A0, L0 = dsp.instantaneous_factors(H_lab, diss.spec)
                self.A[i] = P * A0
                self.L[i] = P * L0

    def _f(self, i: int, rho: np.ndarray) -> np.ndarray:
        # For Hermitian rho both parts have the form K + K^dag:
        # -i[H, rho] with K = -i H rho, and -[A, L rho - rho L^dag] with K = -A (X - X^dag), X = L rho.
        if self.kind == "redfield":
            X = self.L[i] @ rho
            X = X - X.conj().T
            K = self.H[i] @ rho
            K *= -1j
            K -= self.A[i] @ X
            return K + K.conj().T
        W = self.H[i] @ rho
        out = -1j * (W - W.conj().T)
        Q = self.jump @ rho @ self.jump_dag
        W = self.jump_n @ rho
        out += self.rate * (Q - 0.5 * (W + W.conj().T))
        return out

    def step(self, rho: np.ndarray, j: int, with_slope: bool = False):
        """Advance one step from grid time j*h (j taken modulo M).

        With ``with_slope`` also return d rho/dt at the start of the step.
        """
        h = self.h
        i0 = 2 * (j % self.M)
        i1 = i0 + 1
        i2 = (i0 + 2) % (2 * self.M)
        k1 = self._f(i0, rho)
        k2 = self._f(i1, rho + 0.5 * h * k1)
        k3 = self._f(i1, rho + 0.5 * h * k2)
        k4 = self._f(i2, rho + h * k3)
        out = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out = 0.5 * (out + out.conj().T)
        return (out, k1) if with_slope else out

    def run(self, rho0: np.ndarray, n_periods: int, rho_start_period: int = 0,
            check_positivity: bool = True) -> Trajectory:
        """Propagate ``n_periods`` drive periods.

        Observables are computed at every step together with their time
        derivatives, then resampled with cubic Hermite interpolation onto a
        uniform grid of ``samples_per_period`` points per period (at least
        ``MIN_SAMPLES_PER_PERIOD``). Every sample at a multiple of
        ``samples_per_period`` is an exact integer-period (stroboscopic) value.
        """
        rho = np.array(rho0, dtype=complex)
        M = self.M
        n_steps = n_periods * M
        t0 = rho_start_period * self.period
        times = t0 + np.arange(n_steps + 1) * self.h
        vals = np.empty((3, n_steps + 1))
        slopes = np.empty((3, n_steps + 1))
        weights = np.array([self._sz, self._nn, np.ones_like(self._sz)])
        min_eig = []
        strobe = [rho.copy()]
        for s in range(n_steps + 1):
            vals[:, s] = weights @ np.real(np.diagonal(rho))
            if s % M == 0:
                tr = vals[2, s]
                if not np.isfinite(tr) or abs(tr - 1.0) > TRACE_TOL:
                    raise IntegrationError(
                        f"fixed-step integration unstable at t={times[s]:.4g} "
                        f"({M} steps per period); increase steps_per_period")
                if check_positivity:
                    min_eig.append(np.linalg.eigvalsh(rho)[0])
            if s == n_steps:
                k1 = self._f(2 * (s % M), rho)
            else:
                rho_next, k1 = self.step(rho, s, with_slope=True)
            slopes[:, s] = weights @ np.real(np.diagonal(k1))
            if s == n_steps:
                break
            rho = rho_next
            if (s + 1) % M == 0:
                strobe.append(rho.copy())
        sub = max(1, math.ceil(MIN_SAMPLES_PER_PERIOD / M))
        fine = t0 + np.arange(n_steps * sub + 1) * (self.h / sub)
        if sub > 1:
            spline = CubicHermiteSpline(times, vals, slopes, axis=1)
            series = spline(fine)
            series[:, ::sub] = vals  # keep the step values exact
        else:
            series = vals
        obs = {"sigma_z": series[0], "photon_number": series[1], "trace": series[2]}
        _check_trace(obs)
        if check_positivity:
            obs["min_eig"] = np.asarray(min_eig)
        strobe_t = (rho_start_period + np.arange(len(strobe))) * self.period
        strobe = np.array(strobe)
        keep = _thin(len(strobe))
        return Trajectory(times=fine, observables=obs, states=strobe[keep], state_times=strobe_t[keep],
                          meta={"engine": "periodic-rk4", "steps_per_period": M,
                                "samples_per_period": M * sub, "final": rho})
