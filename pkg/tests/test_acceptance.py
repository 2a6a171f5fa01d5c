"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line.

Criteria that the implementation cannot meet are asserted at their stated
tolerance and left failing. The long driven sweeps are computed once per
session and shared between criteria.
"""

import math
import time

import numpy as np
import pytest

from masterlab import analysis as an
from masterlab import dissipators as dsp
from masterlab import dynamics as dyn
from masterlab import environment as env
from masterlab import experiments as ex
from masterlab import hilbert as hs
from masterlab import model as mdl
from masterlab.config import ExperimentConfig

from conftest import random_density, random_hermitian, record_criterion

TWO_PI = 2 * math.pi
KAPPA_GRID_GHZ = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 1.5, 2.0]
NBAR_TARGETS = [0, 1, 2, 4, 6, 9, 12, 15]
SWEEP_LIMIT_S = 600.0

pytestmark = pytest.mark.acceptance


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def run(raw):
    return ex.run(ExperimentConfig.from_dict(raw))


def rel(a, b):
    return abs(a - b) / abs(b)


@pytest.fixture(scope="session")
def purcell_flat():
    return run({"experiment": "purcell-sweep", "sweep": {"kappa_ghz": KAPPA_GRID_GHZ}})


@pytest.fixture(scope="session")
def driven_sweeps():
    """TDBR sweeps over n-bar in [0, 15] with the Ohmic spectrum: {(kappa, kind): (result, seconds)}."""
    out = {}
    for kappa in (0.1, 1.0):
        for kind in ("cosine", "rwa"):
            out[kappa, kind] = timed(run, {
                "experiment": "driven-sweep",
                "system": {"kappa_ghz": kappa},
                "spectrum": {"kind": "ohmic"},
                "dissipator": "redfield-td",
                "drive": {"kind": kind},
                "sweep": {"nbar_targets": NBAR_TARGETS},
            })
    return out


def test_criterion_1_decoupled_cavity():
    t0 = time.perf_counter()
    # the counter-rotating remainder adds ~(kappa/omega_r)^2 oscillations: 9e-5 here, 2.2e-3 at kappa/2pi = 0.5
    N, n0, kappa, wr = 10, 3, TWO_PI * 0.1, TWO_PI * 7.5
    a = hs.annihilation(N)
    H0 = wr * hs.number(N)
    R = dsp.build_redfield(H0, dsp.CorrelationSpec(a + a.conj().T, env.flat(kappa)))
    A, lam = R.lab_factors()
    times = np.linspace(0, 5 / kappa, 201)
    tr = dyn.propagate(lambda t, r: -1j * (H0 @ r - r @ H0) + dsp.factored_apply(A, lam, r),
                       hs.projector(hs.ket(N, n0)),
                       dyn.PropagatorConfig(t_final=times[-1], rel_tol=1e-10, abs_tol=1e-12, method="DOP853"),
                       observables={"photon_number": hs.number(N)}, t_eval=times)
    expected = n0 * np.exp(-kappa * times)
    worst = float(np.max(np.abs(tr["photon_number"] - expected) / expected))

    # superoperator identity at N = 6 (secular-cutoff form, see the decisions ledger)
    M = 6
    b = hs.annihilation(M)
    Rs = dsp.build_redfield(wr * hs.number(M), dsp.CorrelationSpec(b + b.conj().T, env.flat(kappa)), omega_sec=wr)
    basis = np.eye(M * M, dtype=complex).reshape(M * M, M, M)
    S_br = np.array([Rs.basis.from_eigenbasis(dsp.redfield_apply(Rs, Rs.basis.to_eigenbasis(E))).ravel()
                     for E in basis])
    S_l = np.array([dsp.lindblad_apply(E, b, kappa).ravel() for E in basis])
    super_err = float(np.max(np.abs(S_br - S_l)))
    elapsed = time.perf_counter() - t0

    ok = worst <= 1e-3 and super_err <= 1e-10 and elapsed < 5.0
    record_criterion(1, ok, f"max rel <n> error {worst:.2e} (<=1e-3), superoperator diff {super_err:.1e} "
                            f"(<=1e-10), {elapsed:.1f} s (<5 s)")
    assert ok


def test_criterion_2_driven_cavity_bench():
    res, elapsed = timed(run, {"experiment": "cavity-bench", "system": {"kappa_ghz": 0.5}})
    err = res.report["relative_error"]
    ns, fs = err["redfield-nonsecular"], err["redfield-full-secular"]
    ok = abs(ns) <= 0.02 and abs(fs) > 0.20 and elapsed < 30.0
    record_criterion(2, ok, f"non-secular {ns:+.2%} (within 2%), full-secular {fs:+.2%} (beyond 20%), "
                            f"{elapsed:.1f} s (<30 s)")
    assert ok


def test_criterion_3_purcell_rate(purcell_flat):
    t = purcell_flat.tables[0]
    small = [(k, f / 0.012668) for k, kg, f in zip(t.column("kappa_ghz"), t.column("kappa_over_g"),
                                                    t.column("gamma_fit_over_kappa")) if kg <= 0.25]
    worst = max(abs(x - 1) for _, x in small)
    monotone = purcell_flat.report["deviation_monotone"]
    dev = purcell_flat.report["relative_deviation_from_formula"]
    ok = bool(small) and worst <= 0.02 and monotone
    record_criterion(3, ok, f"fit/0.012668 kappa off by <= {worst:.2%} for kappa/g <= 0.25 ({len(small)} points), "
                            f"|fit-formula| monotone: {monotone} ({dev[0]:.2%} -> {dev[-1]:.2%})")
    assert ok


def test_criterion_4_br_lindblad_ratio(purcell_flat):
    t = purcell_flat.tables[0]
    ratios = [r for kg, r in zip(t.column("kappa_over_g"), t.column("ratio_br_over_lindblad")) if kg <= 0.1]
    worst = max(abs(r / 1.372 - 1) for r in ratios)
    kappa = 0.1
    ohm = run({"experiment": "purcell-sweep", "spectrum": {"kind": "ohmic"}, "sweep": {"kappa_ghz": [kappa]}})
    row = dict(zip(ohm.tables[0].columns, ohm.tables[0].rows[0]))
    flat_row = dict(zip(t.columns, t.rows[t.column("kappa_ghz").index(kappa)]))
    lind, flat, ohmic = row["gamma_lindblad"], flat_row["gamma_down"], row["gamma_down"]
    between = min(lind, flat) <= ohmic <= max(lind, flat)
    ok = bool(ratios) and worst <= 0.02 and between
    record_criterion(4, ok, f"BR/Lindblad ratio within {worst:.2%} of 1.372 (<=2%); ordering at kappa=0.1: "
                            f"Lindblad {lind / (TWO_PI * kappa):.5f}, Ohmic-BR {ohmic / (TWO_PI * kappa):.5f}, "
                            f"flat-BR {flat / (TWO_PI * kappa):.5f} kappa, Ohmic between: {between}")
    assert ok


def test_criterion_5_rabi_vs_jc():
    res = run({"experiment": "rabi-vs-jc"})
    l_diff = res.report["lindblad_relative_difference"]
    ratio = res.report["br_ratio_rabi_over_jc"]
    ratio_err = rel(ratio, res.report["br_ratio_formula"])
    ok = l_diff <= 0.01 and ratio_err <= 0.03
    record_criterion(5, ok, f"Lindblad Rabi vs JC differ by {l_diff:.2%} (<=1%); BR Rabi/JC = {ratio:.4f}, "
                            f"{ratio_err:.2%} from {res.report['br_ratio_formula']:.4f} (<=3%)")
    assert ok


def _gammas(res):
    t = res.tables[0]
    return [g for g, s in zip(t.column("gamma1"), t.column("status")) if s == "ok"], t


def test_criterion_6_drive_form_split(driven_sweeps):
    parts, ok = [], True
    for kappa in (0.1, 1.0):
        cos, _ = driven_sweeps[kappa, "cosine"]
        rwa, _ = driven_sweeps[kappa, "rwa"]
        g_cos, t_cos = _gammas(cos)
        g_rwa, t_rwa = _gammas(rwa)
        complete = len(g_cos) == len(t_cos.rows) and len(g_rwa) == len(t_rwa.rows)
        mono = bool(np.all(np.diff(g_cos) <= 0))
        bump = len(g_rwa) > 2 and max(g_rwa[1:-1]) > g_rwa[0]
        ok = ok and complete and mono and bump
        parts.append(f"kappa={kappa}: cosine monotone {mono}, RWA interior max above start {bump}"
                     f" (max/start {max(g_rwa) / g_rwa[0]:.3f})")
    record_criterion(6, ok, "; ".join(parts))
    assert ok


def test_criterion_7_stark_formula(driven_sweeps):
    parts, ok = [], True
    for kappa in (0.1, 1.0):
        res, elapsed = driven_sweeps[kappa, "cosine"]
        err = res.report["mean_relative_error"]
        norm = res.report["mean_relative_error_normalized"]
        ok = ok and err <= 0.01 and elapsed < SWEEP_LIMIT_S
        parts.append(f"kappa={kappa}: mean rel error {err:.2%} (<=1%; normalized curves {norm:.2%}), {elapsed:.0f} s")
    record_criterion(7, ok, "; ".join(parts))
    assert ok


def test_criterion_8_filter_gain():
    res = run({"experiment": "filter-gain",
               "spectrum": {"kind": "ohmic", "filter": {"omega_f_ghz": 7.5, "gamma_f_ghz": 1.5}},
               "sweep": {"gamma_f_ghz": [1.5, 1.0]}})
    t = res.tables[0]
    target = {1.5: 3.143, 1.0: 5.822}
    parts, ok = [], True
    for w, g_fit, g_formula in zip(t.column("gamma_f_ghz"), t.column("gain_fit"), t.column("gain_formula")):
        e = rel(g_fit, target[w])
        ok = ok and e <= 0.03 and rel(g_formula, target[w]) < 1e-3
        parts.append(f"gamma_f={w}: G_fit {g_fit:.3f} vs {target[w]} ({e:.2%}, <=3%)")
    record_criterion(8, ok, "; ".join(parts))
    assert ok


def test_criterion_9_invariants():
    rng = np.random.default_rng(2024)
    checks = {}

    worst_tr = worst_herm = worst_fact = 0.0
    for _ in range(20):
        d = 4
        H = random_hermitian(d, rng) * 5
        J = env.ohmic(rng.uniform(0.05, 0.5), rng.uniform(5, 30)) if rng.random() < 0.5 else env.flat(1.0)
        for cutoff in (None, 0.5):
            R = dsp.build_redfield(H, dsp.CorrelationSpec(random_hermitian(d, rng), J), omega_sec=cutoff)
            T = R.entries()
            s = max(np.max(np.abs(T)), np.finfo(float).tiny)  # an Ohmic cutoff below every gap gives T = 0
            worst_tr = max(worst_tr, np.max(np.abs(np.einsum("mmab->ab", T))) / s)
            worst_herm = max(worst_herm, np.max(np.abs(T.transpose(1, 0, 3, 2) - T.conj())) / s)
            if cutoff is None:
                rho = random_density(d, rng)
                worst_fact = max(worst_fact, np.max(np.abs(dsp.redfield_apply(R, rho)
                                                           - np.einsum("abcd,cd->ab", T, rho))))
    checks["trace"] = worst_tr <= 1e-10
    checks["hermiticity"] = worst_herm <= 1e-10
    checks["factored-vs-dense"] = worst_fact <= 1e-12

    t = np.linspace(0, 15, 200)
    fit_err = max(abs(an.fit_exp_decay(t, 2 * np.exp(-0.3 * t) + 0.1 + 1e-4 * rng.normal(size=t.size)).gamma - 0.3)
                  / 0.3 for _ in range(50))
    checks["fit"] = fit_err <= 1e-3

    p = mdl.SystemParams.reference(kappa_ghz=0.5, n_trunc=6)
    eq = an.build_equation(p, "redfield-static", env.flat(p.kappa))
    rho0 = an.dressed_initial_state(eq, p)
    times = np.linspace(0, 20, 81)
    runs = [dyn.propagate(eq.rhs, rho0, dyn.PropagatorConfig(t_final=20, rel_tol=tol, abs_tol=tol * 1e-2),
                          observables=eq.default_observables(), t_eval=times)
            for tol in (1e-6, 5e-7)]
    conv = float(np.max(np.abs(runs[0]["sigma_z"] - runs[1]["sigma_z"])))
    checks["self-convergence"] = conv < 1e-6

    ok = all(checks.values())
    record_criterion(9, ok, f"trace {worst_tr:.1e}, Hermiticity {worst_herm:.1e}, factored-vs-dense {worst_fact:.1e}, "
                            f"fit {fit_err:.1e}, tolerance halving {conv:.1e}; "
                            + ", ".join(k for k, v in checks.items() if not v))
    assert ok


def test_cosine_and_rwa_photon_numbers_agree(driven_sweeps):
    # eta = 2 eps gives the same photon number to within the counter-rotating correction
    cos, _ = driven_sweeps[0.1, "cosine"]
    rwa, _ = driven_sweeps[0.1, "rwa"]
    n_cos = np.array(cos.tables[0].column("nbar"))
    n_rwa = np.array(rwa.tables[0].column("nbar"))
    mask = n_rwa > 0
    np.testing.assert_allclose(n_cos[mask], n_rwa[mask], rtol=0.02)
