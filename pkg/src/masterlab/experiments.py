"""The named experiments behind ``masterlab run``.

Each command takes a resolved :class:`~masterlab.config.ExperimentConfig`
and returns an :class:`ExperimentResult`: a list of tables (one per curve)
plus a JSON-serializable report. Writing files is left to the CLI.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import analysis as an
from . import dissipators as dsp
from . import dynamics as dyn
from . import environment as env
from . import hilbert as hs
from . import model as mdl
from .config import ExperimentConfig, amplitude_to_nbar
from .exceptions import MasterlabError, NumericalError

TWO_PI = mdl.TWO_PI


@dataclass
class Table:
    name: str
    columns: List[str]
    rows: List[list] = field(default_factory=list)

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]


@dataclass
class ExperimentResult:
    experiment: str
    tables: List[Table]
    report: Dict[str, object]

    def statuses(self) -> List[str]:
        out = []
        for t in self.tables:
            if "status" in t.columns:
                out.extend(t.column("status"))
        return out

    @property
    def failed(self) -> bool:
        """True if any row hit a numerical error (a flagged no-decay row is not a failure)."""
        return any(s.startswith("error") or s == "truncation" for s in self.statuses())


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _status(meas: an.DecayMeasurement) -> str:
    if meas.error:
        return "no-decay" if an.is_no_decay(meas.error) else f"error: {meas.error}"
    return "ok" if meas.truncation_ok else "truncation"


def _decay(cfg: ExperimentConfig, p: mdl.SystemParams, dissipator: str, J: Optional[env.SpectralDensity],
           hamiltonian: Optional[str] = None):
    eq = an.build_equation(p, dissipator, J, hamiltonian=hamiltonian or cfg.hamiltonian, omega_sec=cfg.omega_sec)
    prop = cfg.propagation
    meas = an.measure_decay(eq, p, n_decays=prop["n_decays"], samples=prop["samples"])
    return eq, meas


# ---------------------------------------------------------------------------
# purcell-sweep
# ---------------------------------------------------------------------------

PURCELL_COLUMNS = ["kappa_ghz", "kappa_over_g", "gamma_fit", "gamma_down", "gamma_formula",
                   "gamma_lindblad", "ratio_br_over_lindblad", "gamma_fit_over_kappa", "status"]


def _purcell_row(args) -> list:
    cfg, kappa_ghz = args
    p = cfg.system_params(kappa_ghz=kappa_ghz)
    J = cfg.density(p)
    row = [kappa_ghz, kappa_ghz / cfg.raw["system"]["g_ghz"] if cfg.raw["system"]["g_ghz"] else math.inf]
    try:
        eq, meas = _decay(cfg, p, cfg.dissipator, J)
        eq_l, meas_l = _decay(cfg, p, "lindblad", None)
        g_down = an.downward_rate(meas, eq, p)
        g_lind = an.downward_rate(meas_l, eq_l, p)
        formula = an.lindblad_purcell_rate(p) if cfg.dissipator == "lindblad" else an.purcell_rate_analytic(p, J)
        status = _status(meas)
    except (MasterlabError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
        return row + [math.nan] * 6 + [f"error: {exc}"]
    ratio = g_down / g_lind if g_lind > 0 else math.nan
    return row + [meas.gamma, g_down, formula, g_lind, ratio, meas.gamma / p.kappa, status]


def purcell_sweep(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    grid = cfg.sweep["kappa_ghz"]
    rows = _map(_purcell_row, [(cfg, k) for k in grid], jobs)
    table = Table(cfg.tag, PURCELL_COLUMNS, rows)
    fit, formula = np.array(table.column("gamma_fit")), np.array(table.column("gamma_formula"))
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.where(formula > 0, np.abs(fit - formula) / formula, np.nan)
    report = {
        "kappa_ghz": list(grid),
        "relative_deviation_from_formula": dev.tolist(),
        "deviation_monotone": bool(np.all(np.diff(dev[np.isfinite(dev)]) >= 0)),
        "ratio_formula": an.br_lindblad_ratio(cfg.system_params()),
    }
    return ExperimentResult("purcell-sweep", [table], report)


# ---------------------------------------------------------------------------
# driven-sweep
# ---------------------------------------------------------------------------


def decay_setup(cfg: ExperimentConfig, p: Optional[mdl.SystemParams] = None,
                density: Optional[env.SpectralDensity] = None) -> an.DecaySetup:
    p = p or cfg.system_params()
    prop = cfg.propagation
    return an.DecaySetup(
        params=p,
        dissipator=cfg.dissipator,
        density=density if density is not None else cfg.density(p),
        drive_kind=cfg.drive_kind(),
        hamiltonian=cfg.hamiltonian,
        omega_sec=cfg.omega_sec,
        auto_truncation=cfg.auto_truncation,
        n_decays=prop["n_decays"],
        settle_kappa_times=prop["settle_kappa_times"],
        steps_per_period=prop["steps_per_period"],
    )


SWEEP_COLUMNS = ["drive_ghz"] + an.SweepRow.columns()


def sweep_table(name: str, rows: Sequence[an.SweepRow]) -> Table:
    return Table(name, SWEEP_COLUMNS, [[r.drive_amp / TWO_PI] + r.values() for r in rows])


def sweep_summary(rows: Sequence[an.SweepRow]) -> Dict[str, object]:
    ok = [r for r in rows if r.status == "ok"]
    g = np.array([r.gamma1 for r in ok])
    out: Dict[str, object] = {"rows": len(rows), "ok_rows": len(ok)}
    if len(ok):
        out["mean_relative_error"] = an.mean_relative_error(rows)
        out["mean_relative_error_normalized"] = an.mean_relative_error(rows, normalized=True)
        out["monotone_non_increasing"] = bool(np.all(np.diff(g) <= 0))
        out["interior_maximum_above_start"] = bool(len(g) > 2 and np.max(g[1:-1]) > g[0])
    return out


def driven_sweep(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    setup = decay_setup(cfg)
    rows = an.run_sweep(setup, cfg.drive_grid(), jobs=jobs)
    report = sweep_summary(rows)
    report["adiabaticity_period_omega_c"] = adiabaticity_ratio(setup)
    return ExperimentResult("driven-sweep", [sweep_table(cfg.tag, rows)], report)


def adiabaticity_ratio(setup: an.DecaySetup) -> Optional[float]:
    """Drive period times the bath cutoff omega_c (reported, not enforced).

    None for a spectrum without a cutoff.
    """
    wc = setup.density.cutoff
    if not math.isfinite(wc):
        return None
    return 2.0 * math.pi / setup.params.omega_d * wc


# ---------------------------------------------------------------------------
# cavity-bench
# ---------------------------------------------------------------------------

BENCH_COLUMNS = ["kappa_t", "nbar_lindblad", "nbar_redfield_nonsecular", "nbar_redfield_full_secular",
                 "nbar_analytic"]


@dataclass(frozen=True)
class CavityBench:
    """Resonantly driven cavity with the qubit removed (g = 0).

    The qubit factor is dropped altogether: with g = 0 it only doubles every
    block of the generator.
    """

    omega_r: float
    kappa: float
    eps: float
    N: int
    density: env.SpectralDensity
    omega_d: Optional[float] = None

    @property
    def drive_frequency(self) -> float:
        return self.omega_r if self.omega_d is None else self.omega_d

    @property
    def analytic_nbar(self) -> float:
        """Steady |alpha|^2 = eps^2 / ((kappa/2)^2 + detuning^2)."""
        det = self.drive_frequency - self.omega_r
        return self.eps ** 2 / (0.25 * self.kappa ** 2 + det ** 2)

    def operators(self):
        a = hs.annihilation(self.N)
        return a, hs.number(self.N), a + a.conj().T

    def rhs(self, method: str):
        a, n, X = self.operators()
        H0 = self.omega_r * n
        w, eps = self.drive_frequency, self.eps
        if method == "lindblad":
            def diss(rho):
                return dsp.lindblad_apply(rho, a, self.kappa)
        else:
            omega_sec = dsp.FULL_SECULAR if method == "redfield-full-secular" else None
            R = dsp.build_redfield(H0, dsp.CorrelationSpec(X, self.density), omega_sec=omega_sec)
            if omega_sec is None:
                A, lam = R.lab_factors()

                def diss(rho):
                    return dsp.factored_apply(A, lam, rho)
            else:
                def diss(rho):
                    return R.basis.from_eigenbasis(dsp.redfield_apply(R, R.basis.to_eigenbasis(rho)))

        def rhs(t, rho):
            ph = complex(math.cos(w * t), math.sin(w * t))
            H = H0 + eps * (ph * a + ph.conjugate() * a.conj().T)
            return -1j * (H @ rho - rho @ H) + diss(rho)

        return rhs

    def run(self, method: str, times: np.ndarray, rel_tol=1e-8, abs_tol=1e-10, max_step=math.inf,
            integrator: str = "DOP853") -> dyn.Trajectory:
        """Photon number from the vacuum under one of ``BENCH_METHODS``."""
        a, n, X = self.operators()
        rho0 = hs.projector(hs.ket(self.N, 0))
        cfg = dyn.PropagatorConfig(t_final=float(times[-1]), rel_tol=rel_tol, abs_tol=abs_tol, max_step=max_step,
                                   method=integrator)
        return dyn.propagate(self.rhs(method), rho0, cfg, observables={"photon_number": n}, t_eval=times)


BENCH_METHODS = ("lindblad", "redfield-nonsecular", "redfield-full-secular")


def cavity_bench(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    p = cfg.system_params(g_ghz=0.0)
    eps = cfg.drive_amplitude()
    if cfg.drive_kind() == "cosine":
        eps = 0.5 * eps  # co-rotating part of eta cos(wt) X
    nbar = amplitude_to_nbar(eps, p.kappa, "rwa")
    N = an.auto_truncation(nbar) if cfg.auto_truncation else p.n_trunc
    bench = CavityBench(omega_r=p.omega_r, kappa=p.kappa, eps=eps, N=N, density=cfg.density(p), omega_d=p.omega_d)
    prop = cfg.propagation
    t_final = prop["kappa_t_final"] / p.kappa
    times = np.linspace(0.0, t_final, prop["samples"] * 4 + 1)
    max_step = prop["max_step_ns"] or math.inf

    def one(method):
        return bench.run(method, times, prop["rel_tol"], prop["abs_tol"], max_step,
                         prop["integrator"])["photon_number"]

    curves = _map(one, list(BENCH_METHODS), jobs)
    rows = [[p.kappa * t] + [c[k] for c in curves] + [bench.analytic_nbar] for k, t in enumerate(times)]
    T = TWO_PI / bench.drive_frequency
    tail = times >= times[-1] - T
    steady = {m: float(np.mean(c[tail])) for m, c in zip(BENCH_METHODS, curves)}
    rel = {m: (v - bench.analytic_nbar) / bench.analytic_nbar if bench.analytic_nbar else math.nan
           for m, v in steady.items()}
    report = {"n_trunc": N, "eps": eps, "nbar_analytic": bench.analytic_nbar, "steady_nbar": steady,
              "relative_error": rel}
    return ExperimentResult("cavity-bench", [Table(cfg.tag, BENCH_COLUMNS, rows)], report)


# ---------------------------------------------------------------------------
# filter-gain
# ---------------------------------------------------------------------------

GAIN_COLUMNS = ["gamma_f_ghz", "gamma_base", "gamma_filtered", "gain_fit", "gain_formula", "gain_density",
                "status"]


def gain_formula(omega_q: float, f: env.FilterSpec) -> float:
    """1 + ((w_q - w_f) / gamma_f)^2."""
    return 1.0 + ((omega_q - f.omega_f) / f.gamma_f) ** 2


def _gain_run(args):
    cfg, gamma_f = args
    p = cfg.system_params()
    J = cfg.density(p, filtered=gamma_f is not None, gamma_f_ghz=gamma_f)
    eq, meas = _decay(cfg, p, cfg.dissipator, J)
    return meas


def filter_gain(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    p = cfg.system_params()
    widths = list(cfg.sweep["gamma_f_ghz"])
    runs = _map(_gain_run, [(cfg, None)] + [(cfg, w) for w in widths], jobs)
    base, filtered = runs[0], runs[1:]
    J0 = cfg.density(p, filtered=False)
    f0 = cfg.raw["spectrum"]["filter"]
    rows = []
    tables = []
    for w, meas in zip(widths, filtered):
        f = env.FilterSpec(TWO_PI * f0["omega_f_ghz"], TWO_PI * w)
        status = _status(meas) if _status(base) == "ok" else f"base run: {_status(base)}"
        try:
            g_fit = an.gain_from_traces(base.gamma, meas.gamma)
        except ValueError:
            g_fit = math.nan
        rows.append([w, base.gamma, meas.gamma, g_fit, gain_formula(p.omega_q, f),
                     env.t1_gain(J0, env.compose(J0, f), p.omega_q), status])
    tables.append(Table(cfg.tag, GAIN_COLUMNS, rows))
    for label, meas in [("base", base)] + [(f"gf{w:g}", m) for w, m in zip(widths, filtered)]:
        tables.append(Table(f"{cfg.tag}-trace-{label}", ["t_ns", "sigma_z"],
                            [[t, y] for t, y in zip(meas.times, meas.sigma_z)]))
    report: Dict[str, object] = {
        "gain_fit": {f"{w:g}": r[3] for w, r in zip(widths, rows)},
        "gain_formula": {f"{w:g}": r[4] for w, r in zip(widths, rows)},
    }
    if cfg.sweep.get("driven"):
        curves = {"base": J0}
        curves.update({f"gf{w:g}": cfg.density(p, gamma_f_ghz=w) for w in widths})
        for label, J in curves.items():
            rows_d = an.run_sweep(decay_setup(cfg, p, J), cfg.drive_grid(), jobs=jobs)
            tables.append(sweep_table(f"{cfg.tag}-driven-{label}", rows_d))
            report[f"driven-{label}"] = sweep_summary(rows_d)
    return ExperimentResult("filter-gain", tables, report)


# ---------------------------------------------------------------------------
# rabi-vs-jc
# ---------------------------------------------------------------------------

RVJ_COLUMNS = ["hamiltonian", "dissipator", "gamma_fit", "gamma_down", "status"]
RVJ_CASES = [("rabi", "lindblad"), ("jc", "lindblad"), ("rabi", "redfield-static"), ("jc", "redfield-static")]


def _rvj_run(args):
    cfg, ham, diss = args
    p = cfg.system_params()
    eq, meas = _decay(cfg, p, diss, cfg.density(p) if diss != "lindblad" else None, hamiltonian=ham)
    return [ham, diss, meas.gamma, an.downward_rate(meas, eq, p), _status(meas)]


def rabi_vs_jc(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    rows = _map(_rvj_run, [(cfg, h, d) for h, d in RVJ_CASES], jobs)
    rate = {(r[0], r[1]): r[3] for r in rows}
    p = cfg.system_params()
    l_r, l_j = rate["rabi", "lindblad"], rate["jc", "lindblad"]
    b_r, b_j = rate["rabi", "redfield-static"], rate["jc", "redfield-static"]
    l_diff = abs(l_r - l_j) / max(abs(l_r), abs(l_j)) if max(l_r, l_j) > 0 else 0.0
    ratio = b_r / b_j if b_j > 0 else math.nan
    report = {
        "lindblad_relative_difference": l_diff,
        "lindblad_rates_coincide": bool(l_diff < 0.01),
        "br_ratio_rabi_over_jc": ratio,
        "br_ratio_formula": an.br_lindblad_ratio(p),
        "br_rates_differ": bool(abs(ratio - 1.0) > 0.01) if np.isfinite(ratio) else False,
    }
    return ExperimentResult("rabi-vs-jc", [Table(cfg.tag, RVJ_COLUMNS, rows)], report)


COMMANDS: Dict[str, Callable[[ExperimentConfig, int], ExperimentResult]] = {
    "purcell-sweep": purcell_sweep,
    "driven-sweep": driven_sweep,
    "cavity-bench": cavity_bench,
    "filter-gain": filter_gain,
    "rabi-vs-jc": rabi_vs_jc,
}


def run(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    try:
        fn = COMMANDS[cfg.experiment]
    except KeyError:
        raise MasterlabError(f"unknown experiment {cfg.experiment!r}") from None
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    return fn(cfg, jobs)


__all__ = ["Table", "ExperimentResult", "CavityBench", "run", "COMMANDS", "gain_formula", "MasterlabError", "NumericalError"]
