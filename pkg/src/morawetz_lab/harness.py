"""Scenario runs, parameter sweeps, refinement studies and report files.

A run evolves every configured mode on [-2, T+2] with two records per mode:
scalar probes on the full grid at every step (energies, Morawetz integrands,
the balance integrand) and the fields themselves on |x| <= near_window at the
spectral sampling stride.  Checks are assembled from these and written to

    energies.csv  t, E_total, E_ratio, E_B, E_l<ell> ...
    morawetz.csv  T, classical_bulk, refined_bulk, I, C_classical, C_refined, C_I
    spectral.csv  tau, density, weighted_density
    summary.json  checks, constants, values, flags, runtimes
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import fd
from .config import CONVERGE_DIAGNOSTICS, ConvergeSpec, ScenarioConfig
from .errors import ConfigError, LabError
from .estimates import (
    NOETHER_KAPPA,
    EnergyReport,
    exponential_bound_check,
    gen_energy_constant,
    i_functional,
    mode_probes,
    weight_ratio_sup,
)
from .model import (
    GridSpec,
    Mode,
    ModeState,
    gaussian_support_radius,
    initial_data_gaussian,
    zero_data,
)
from .multipliers import (
    WindowSet,
    alpha_balance,
    classical_multiplier,
    divergence_identity_residual,
    lemma_min_scan,
    positivity_check,
    refined_multiplier,
    resolve_refined_q_sign,
)
from .solver import ProbeSeries, ProbeSpec, RecordSpec, Trajectory, convergence_study, evolve_mode_records
from .spectral import (
    J_EXPONENT,
    approx_divergence_residual,
    approx_divergence_scale,
    build_windowed_fields,
    combine_closing,
    dft_time,
    j_functional,
    parseval_error,
    source_norms,
    spectral_density,
    tau_moment,
    w_pairing,
    weight_domination,
)

# Pointwise on |x| <= 2 the weighted-form integrand dominates the I integrand
# divided by this constant (the worst weight is x^2 / (1+x^2)^2 >= x^2 / 25).
I_DOMINATION = 25.0
TOLERANCES = {
    "energy_conservation": 1e-6,
    "noether": 1e-6,
    "exponential_bound": 1e-3,
    "energy_balance": 1e-6,
    "identity_classical": 1e-2,
    # u1_hat at frequency tau oscillates in x with wavenumber ~ tau; at tau = 32 and
    # h = 0.04 the fourth-order stencil error (tau h)^4 / 90 is a few percent
    "identity_refined": 5e-2,
    "approx_divergence": 5e-2,
    "parseval": 1e-8,
}
REFINED_TAUS = (1.0, 4.0, 32.0)
POSITIVITY_POINTS = 100_001

REFS = {
    "energy_conservation": "eps = 0: E(t) = 1/2 int |u_t|^2 + |u_x|^2 + (l(l+1)+N) V |u|^2 is constant",
    "noether": "E[Re u] - E[Im u] + eps int W Re(u) Im(u) is constant and indefinite",
    "exponential_bound": "E(t2) <= exp(eps (t2 - t1)) E(t1)",
    "energy_balance": "E(t2) - E(t1) = int int -eps W Im(conj(u_t) u)",
    "classical_morawetz": "int_0^T int |u_x|^2/(1+x^2) + x^2/(1+x^2)(l(l+1)|u|^2/(1+|x|^3) + |u_t|^2/(1+x^2)) + |u|^2/(1+|x|^3) <= C E(0)",
    "refined_morawetz": "int_0^T int |u| |u_t| / (1+|x|^3) <= C E(0)",
    "i_functional": "I(T) = int_{-2}^{T+2} int_{|x|<=2} x^2|u_t|^2 + |u_x|^2 + |u|^2 <= C (E(0) + E(T))",
    "gen_energy": "|int Re(f conj(u_x) u_t) + Re(q conj(u) u_t)| <= C E, f = -arctan x",
    "identity_classical": "Re((f conj(u_x) + q conj(u)) Lu) = d_t p_t + d_x p_x + bulk, f = -arctan x",
    "identity_refined": "tau-side identity for u1 = chi1 chix psi with f = -arctan(|tau|^alpha x), no p_t term",
    "positivity": "c_x >= 0, c_omega >= 0 and c_0 |u|^2 + c_x |u_x|^2 - eps f W Im(conj(u_x) u) >= 0",
    "cutoff_domination": "|chi1'| + |chi1''| <= C chi2",
    "approx_divergence": "L u1 = F + G, F = -2 chi1' d_t u2 - chi1'' u2, G = 2 chix' d_x u3 + chix'' u3",
    "windowed_supports": "supp F in [-1,0] u [T,T+1]; supp G in {1 <= |x| <= 2} x [-1, T+1]",
    "parseval": "sum |u1_hat|^2 dtau = 2 pi sum |u1|^2 dt",
    "j_estimate": "J(T) = int |tau|^{6/5} |u1_hat|^2 <= C (E(T) + E(0)); weight >= |tau|^{3 alpha} on |x| <= 2",
    "closing": "int |tau| |u1_hat|^2 <= 2 pi ||u1||^2 + J, ||u1||^2 <= I, |int W Im(conj(u1) d_t u1)| <= (2 pi)^-1 int |tau| |u1_hat|^2",
    "lemma": "2 - 2 alpha = 3 alpha and min_s (1-3s^2)/(1+s^2)^3 + M s^2 > 0",
}
FIELD_CHECKS = {
    "energy_conservation", "noether", "exponential_bound", "energy_balance", "classical_morawetz",
    "refined_morawetz", "i_functional", "gen_energy", "identity_classical", "identity_refined",
    "approx_divergence", "windowed_supports", "parseval", "j_estimate", "closing",
}
SPECTRAL_CHECKS = {"parseval", "j_estimate", "closing"}


@dataclass
class CheckResult:
    """Outcome of one named check.  ``margin`` is >= 0 exactly when the check passes."""

    name: str
    passed: bool
    margin: float
    value: float
    ref: str
    details: dict = field(default_factory=dict)


@dataclass
class SummaryReport:
    scenario_id: str
    checks: dict[str, CheckResult]
    constants: dict[str, float]
    values: dict[str, float]
    flags: dict
    runtimes: dict[str, float]
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return _jsonable({
            "scenario": self.scenario_id,
            "passed": self.passed,
            "error": self.error,
            "checks": {k: dataclasses.asdict(v) for k, v in self.checks.items()},
            "constants": self.constants,
            "values": self.values,
            "flags": self.flags,
            "runtimes": self.runtimes,
        })

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryReport":
        checks = {k: CheckResult(**v) for k, v in d["checks"].items()}
        return cls(d["scenario"], checks, d["constants"], d["values"], d["flags"], d["runtimes"], d.get("error"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _ratio(a: float, b: float) -> float:
    """a / b, with 0/0 = 0 so that zero data give zero constants."""
    if b > 0:
        return a / b
    return 0.0 if a == 0 else math.inf


def _check(name, passed, margin, value, **details) -> CheckResult:
    return CheckResult(name, bool(passed), float(margin), float(value), REFS[name], details)


# -- one scenario ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModeRun:
    """Records of one mode: every-step probes, the charge on the energy-report
    stride, and the fields near the trap."""

    mode: Mode
    probes: ProbeSeries
    charge: ProbeSeries
    near: Trajectory


def data_support_radius(cfg: ScenarioConfig) -> float:
    d = cfg.data
    if d.kind == "zero":
        return 0.0
    return abs(d.center) + gaussian_support_radius(d.width)


def build_grid(cfg: ScenarioConfig, spacing: float | None = None, half_length: float | None = None) -> GridSpec:
    return GridSpec.for_run(spacing or cfg.grid.spacing, cfg.model.t_horizon + 2.0,
                            data_support_radius(cfg), cfg.grid.cfl,
                            half_length if half_length is not None else cfg.grid.half_length)


def initial_state(cfg: ScenarioConfig, grid: GridSpec) -> ModeState:
    d = cfg.data
    if d.kind == "zero":
        return zero_data(grid)
    return initial_data_gaussian(grid, d.center, d.width, d.wavenumber, d.phase, d.rightward, d.amplitude)


def near_window(cfg: ScenarioConfig) -> float:
    lo, hi = cfg.profile.support
    return max(cfg.run.near_window, abs(lo) + 0.5, abs(hi) + 0.5)


MORAWETZ_PROBES = ("classical", "arctan", "refined", "refined_u2", "refined_v2")
MORAWETZ_CHECKS = {"classical_morawetz", "refined_morawetz", "i_functional", "j_estimate", "closing"}


def probe_names(checks: Sequence[str]) -> tuple[str, ...]:
    """Every-step probes needed by the enabled checks."""
    names = ["energy"]
    if "energy_balance" in checks:
        names.append("balance_rhs")
    if MORAWETZ_CHECKS.intersection(checks):
        names.extend(MORAWETZ_PROBES)
    if "gen_energy" in checks:
        names.append("gen_energy")
    return tuple(names)


def energy_stride(cfg: ScenarioConfig, grid: GridSpec) -> int:
    return max(1, int(round(cfg.run.energy_interval / grid.dt)))


def evolve_scenario_mode(cfg: ScenarioConfig, grid: GridSpec, ell: int,
                         record_stride: int | None = None,
                         probes: Sequence[str] | None = None) -> ModeRun:
    mode = Mode(ell)
    T = cfg.model.t_horizon
    names = probe_names(cfg.checks) if probes is None else tuple(probes)
    fine = ProbeSpec(mode_probes(mode, cfg.model, cfg.profile, grid.x, names=names))
    coarse = ProbeSpec(mode_probes(mode, cfg.model, cfg.profile, grid.x, names=("noether",)),
                       energy_stride(cfg, grid))
    near = RecordSpec(record_stride or cfg.run.record_stride, near_window(cfg))
    ps, charge, tr = evolve_mode_records(cfg.model, mode, grid, initial_state(cfg, grid), -2.0, T + 2.0,
                                         [fine, coarse, near], cfg.profile)
    return ModeRun(mode, ps, charge, tr)


def _forward(series: ProbeSeries, T: float) -> np.ndarray:
    tol = 1e-9 * max(1.0, T)
    return (series.times >= -tol) & (series.times <= T + tol)


def run_scenario(cfg: ScenarioConfig, output_dir=None, write: bool = True) -> SummaryReport:
    """Evolve all modes, run the enabled checks and (optionally) write the report files."""
    t_all = time.perf_counter()
    runtimes: dict[str, float] = {}
    params = cfg.model
    T = params.t_horizon
    checks = list(cfg.checks)
    results: dict[str, CheckResult] = {}
    constants: dict[str, float] = {}
    values: dict[str, float] = {}
    flags = {
        "refined_q_sign": None,
        "noether_kappa": NOETHER_KAPPA,
        "potential_shape": cfg.profile.shape,
        "finite_domain_surrogate": True,
        "mode_weighting": "unweighted sum over simulated l",
    }

    grid = build_grid(cfg)
    flags.update(half_length=grid.half_length, n_points=grid.n_points, dt=grid.dt, spacing=grid.spacing)
    runs: list[ModeRun] = []
    if FIELD_CHECKS.intersection(checks):
        t0 = time.perf_counter()
        runs = [evolve_scenario_mode(cfg, grid, ell) for ell in cfg.modes]
        runtimes["evolve"] = time.perf_counter() - t0

    if runs:
        _field_checks(cfg, runs, checks, results, constants, values, runtimes)

    t0 = time.perf_counter()
    if "positivity" in checks:
        x = np.linspace(-grid.half_length, grid.half_length, POSITIVITY_POINTS)
        rep = positivity_check(params, x, cfg.profile)
        results["positivity"] = _check(
            "positivity", rep.passed, min(rep.min_c_x, rep.min_c_omega, rep.margin), rep.margin,
            min_c_x=rep.min_c_x, min_c_omega=rep.min_c_omega, min_c_0=rep.min_c_0)
    if "positivity" in checks or "identity_refined" in checks or "j_estimate" in checks:
        flags["refined_q_sign"] = resolve_refined_q_sign(params)
    if "cutoff_domination" in checks:
        ws = WindowSet.for_horizon(T)
        ok, C = ws.domination(10_000)
        t = np.linspace(-2.0, T + 2.0, 10_000)
        slack = float(np.min(C * ws.chi2(t) - np.abs(ws.chi1(t, 1)) - np.abs(ws.chi1(t, 2))))
        results["cutoff_domination"] = _check("cutoff_domination", ok, slack if ok else -1.0, C)
        constants["domination_C"] = C
    if "lemma" in checks:
        lo, s_at = lemma_min_scan(params.m_const, 10.0, 1_000_000)
        bal = alpha_balance(params.alpha)
        results["lemma"] = _check("lemma", bal and lo > 0, lo if bal else -1.0, lo,
                                  argmin=s_at, alpha_balanced=bal)
        values["lemma_min"] = lo
    runtimes["static_checks"] = time.perf_counter() - t0

    ordered = {name: results[name] for name in checks}
    runtimes["total"] = time.perf_counter() - t_all
    report = SummaryReport(cfg.id, ordered, constants, values, flags, runtimes)
    if write:
        out = Path(output_dir if output_dir is not None else cfg.run.output_dir)
        write_outputs(out, cfg, report, runs)
    return report


def _field_checks(cfg, runs, checks, results, constants, values, runtimes):
    params = cfg.model
    T = params.t_horizon
    eps = params.epsilon
    t0 = time.perf_counter()

    ps0 = runs[0].probes
    k0, kT = ps0.index(0.0), ps0.index(T)
    fwd = slice(k0, kT + 1)
    times = ps0.times[fwd]
    per_mode = {r.mode.ell: r.probes.values["energy"][fwd] for r in runs}
    e_total = np.sum([per_mode[r.mode.ell] for r in runs], axis=0)
    cmask = _forward(runs[0].charge, T)
    charge = np.sum([r.charge.values["noether"][cmask] for r in runs], axis=0)
    report = EnergyReport(times, e_total, per_mode)
    e0, eT = float(e_total[0]), float(e_total[-1])
    values.update(E0=e0, ET=eT)
    constants["max_energy_ratio"] = float(np.max(e_total) / e0) if e0 > 0 else 1.0
    constants["final_energy_ratio"] = _ratio(eT, e0) if e0 > 0 else 1.0

    if "energy_conservation" in checks:
        drift = report.drift()
        tol = TOLERANCES["energy_conservation"]
        results["energy_conservation"] = _check("energy_conservation", drift <= tol, tol - drift, drift)
    if "noether" in checks:
        drift = _ratio(float(np.max(np.abs(charge - charge[0]))), e0)
        tol = TOLERANCES["noether"]
        results["noether"] = _check("noether", drift <= tol, tol - drift, drift,
                                    initial_charge=float(charge[0]), kappa=NOETHER_KAPPA)
    if "exponential_bound" in checks:
        ok, slack = exponential_bound_check(report, params, TOLERANCES["exponential_bound"])
        results["exponential_bound"] = _check("exponential_bound", ok, slack, constants["max_energy_ratio"])
    if "energy_balance" in checks:
        res = 0.0
        per = {}
        for r in runs:
            e = r.probes.values["energy"]
            lhs = e[kT] - e[k0]
            rhs = r.probes.integral("balance_rhs", 0.0, T)
            per[r.mode.ell] = {"lhs": float(lhs), "rhs": rhs}
            res += abs(lhs - rhs)
        rel = _ratio(res, e0)
        tol = TOLERANCES["energy_balance"]
        results["energy_balance"] = _check("energy_balance", rel <= tol, tol - rel, rel,
                                           residual=res, per_mode=per)
        values["balance_residual"] = res

    i_val = sum(i_functional(r.near, T) for r in runs)
    values["I"] = i_val
    constants["C_I"] = _ratio(i_val, e0 + eT)
    if "classical" in runs[0].probes.values:
        classical = sum(r.probes.integral("classical", 0.0, T) for r in runs)
        arctan = sum(r.probes.integral("arctan", 0.0, T) for r in runs)
        refined = sum(r.probes.integral("refined", 0.0, T) for r in runs)
        ref_u2 = sum(r.probes.integral("refined_u2", 0.0, T) for r in runs)
        ref_v2 = sum(r.probes.integral("refined_v2", 0.0, T) for r in runs)
        values.update(classical_bulk=classical, arctan_bulk=arctan, refined_bulk=refined)
        constants.update(C_classical=_ratio(classical, e0), C_arctan=_ratio(arctan, e0),
                         C_refined=_ratio(refined, e0))

    if "classical_morawetz" in checks:
        wr = weight_ratio_sup(_grid_x(runs[0]))
        ok = classical >= 0 and classical <= arctan * (1 + 1e-12) + 1e-300 and wr <= 1 + 1e-9
        results["classical_morawetz"] = _check("classical_morawetz", ok, _ratio(arctan - classical, e0),
                                               constants["C_classical"], arctan_form=constants["C_arctan"],
                                               weight_ratio_sup=wr)
    if "refined_morawetz" in checks:
        cs = math.sqrt(ref_u2 * ref_v2)
        ok = refined >= 0 and refined <= cs * (1 + 1e-12) + 1e-300
        results["refined_morawetz"] = _check("refined_morawetz", ok, _ratio(cs - refined, e0),
                                             constants["C_refined"], cauchy_schwarz_bound=cs)
    if "i_functional" in checks:
        wide = sum(r.probes.integral("classical", -2.0, T + 2.0) for r in runs)
        ok = i_val <= I_DOMINATION * wide * (1 + 1e-12) + 1e-300
        results["i_functional"] = _check("i_functional", ok, _ratio(I_DOMINATION * wide - i_val, e0 + eT),
                                         constants["C_I"], classical_bulk_wide=wide, domination=I_DOMINATION)
    if "gen_energy" in checks:
        ms = classical_multiplier(params.delta)
        worst, bound = 0.0, math.inf
        for r in runs:
            g = np.abs(r.probes.values["gen_energy"][fwd])
            e = r.probes.values["energy"][fwd]
            ratio = float(np.max(np.where(e > 0, g / np.where(e > 0, e, 1.0), 0.0)))
            worst = max(worst, ratio)
            bound = min(bound, gen_energy_constant(ms, r.mode, params, _grid_x(r)))
        ok = worst <= bound and bound <= math.pi / 2 + 1
        results["gen_energy"] = _check("gen_energy", ok, bound - worst, worst, bound=bound)
        constants["C_gen"] = worst
    runtimes["time_domain_checks"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if "identity_classical" in checks:
        ms = classical_multiplier(params.delta)
        rel = max(divergence_identity_residual(r.near, ms, t_range=(0.0, T), relative=True) for r in runs)
        tol = TOLERANCES["identity_classical"]
        results["identity_classical"] = _check("identity_classical", rel <= tol, tol - rel, rel)
    if "identity_refined" in checks:
        ws = WindowSet.for_horizon(T)
        per = {}
        for tau in REFINED_TAUS:
            ms = refined_multiplier(tau, params.alpha)
            per[tau] = max(divergence_identity_residual(r.near, ms, window=ws, relative=True) for r in runs)
        rel = max(per.values())
        tol = TOLERANCES["identity_refined"]
        results["identity_refined"] = _check("identity_refined", rel <= tol, tol - rel, rel,
                                             per_tau={str(k): v for k, v in per.items()})
    runtimes["identity_checks"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ws = WindowSet.for_horizon(T)
    wants_windows = {"approx_divergence", "windowed_supports"} | (SPECTRAL_CHECKS if cfg.spectral.enabled else set())
    if not wants_windows.intersection(checks):
        return
    f_sq = g_sq = 0.0
    approx_err = approx_scale = 0.0
    support_violation = 0.0
    parseval_worst = 0.0
    parts = []
    j_total = 0.0
    density = None
    tau_band = None
    for r in runs:
        wf = build_windowed_fields(r.near, T, ws)
        fn, gn = source_norms(wf)
        f_sq += fn * fn
        g_sq += gn * gn
        if "approx_divergence" in checks:
            approx_err += approx_divergence_residual(wf, params, cfg.profile)
            approx_scale += approx_divergence_scale(wf)
        if "windowed_supports" in checks:
            support_violation = max(support_violation, _support_violation(wf, T))
        if cfg.spectral.enabled and SPECTRAL_CHECKS.intersection(checks):
            sd = dft_time(wf, cfg.spectral.tau_max, cfg.spectral.pad_factor)
            parseval_worst = max(parseval_worst, parseval_error(wf, sd))
            j = j_functional(sd)
            j_total += j
            parts.append((tau_moment(sd, 1.0), tau_moment(sd, 0.0), j, w_pairing(wf, cfg.profile)))
            tau, dens, _ = spectral_density(sd)
            density = dens if density is None else density + dens
            tau_band = tau
            last_sd = sd
    f_norm, g_norm = math.sqrt(f_sq), math.sqrt(g_sq)
    constants["C_F"] = _ratio(f_norm, math.sqrt(e0) + math.sqrt(max(eT, 0.0)))
    constants["C_G"] = _ratio(g_norm, math.sqrt(i_val))
    values.update(F_norm=f_norm, G_norm=g_norm)

    if "approx_divergence" in checks:
        rel = _ratio(approx_err, approx_scale)
        tol = TOLERANCES["approx_divergence"]
        results["approx_divergence"] = _check("approx_divergence", rel <= tol, tol - rel, rel,
                                              residual=approx_err)
    if "windowed_supports" in checks:
        results["windowed_supports"] = _check("windowed_supports", support_violation == 0.0,
                                              -support_violation, support_violation)
    if density is not None:
        values["J"] = j_total
        constants["C_J"] = _ratio(j_total, e0 + eT)
        values["spectral_density"] = (tau_band, density)
        if "parseval" in checks:
            tol = TOLERANCES["parseval"]
            results["parseval"] = _check("parseval", parseval_worst <= tol, tol - parseval_worst, parseval_worst)
        if "j_estimate" in checks:
            wd = weight_domination(params, last_sd.tau, runs[0].near.x)
            margin = wd.min_ratio - wd.lemma_min * (1 - 1e-9)
            results["j_estimate"] = _check("j_estimate", wd.passed and math.isfinite(j_total),
                                           margin, constants["C_J"], J=j_total, min_weight_ratio=wd.min_ratio,
                                           lemma_min=wd.lemma_min, exponent=J_EXPONENT)
        if "closing" in checks:
            cr = combine_closing(parts, i_val, e0, eT, params)
            scale = max(cr.tau1_moment, 1e-300)
            slacks = [
                (cr.l2_mass + cr.j - cr.tau1_moment) / scale,
                (2 * math.pi * i_val - cr.l2_mass) / max(2 * math.pi * i_val, 1e-300),
                (cr.pairing_bound - cr.w_pairing) / max(cr.pairing_bound, 1e-300),
            ]
            if cr.tau1_moment == 0 and cr.l2_mass == 0:
                slacks = [0.0]
            margin = min(slacks)
            constants["C_close"] = cr.closing_constant
            values.update(tau1_moment=cr.tau1_moment, l2_mass=cr.l2_mass, w_pairing=cr.w_pairing)
            results["closing"] = _check("closing", margin >= -1e-12, margin, cr.closing_constant,
                                        implied_ratio=cr.implied_ratio, measured_ratio=cr.measured_ratio,
                                        interpolation_ratio=cr.interpolation_ratio)
    runtimes["window_checks"] = time.perf_counter() - t0


def _grid_x(run: ModeRun) -> np.ndarray:
    return run.near.grid.x


def _support_violation(wf, T) -> float:
    """Largest |F| outside its time support plus largest |G| outside its (t, x) support."""
    t, x = wf.t, wf.x
    f_ok = ((t >= -1.0) & (t <= 0.0)) | ((t >= T) & (t <= T + 1.0))
    g_ok = ((t >= -1.0) & (t <= T + 1.0))[:, None] & ((np.abs(x) >= 1.0) & (np.abs(x) <= 2.0))[None, :]
    bad_f = np.max(np.abs(wf.f_src[~f_ok]), initial=0.0)
    bad_g = np.max(np.abs(wf.g_src[~g_ok]), initial=0.0)
    return float(max(bad_f, bad_g))


# -- output files -------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def write_outputs(out: Path, cfg: ScenarioConfig, report: SummaryReport, runs: Sequence[ModeRun]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    spec = report.values.pop("spectral_density", None)
    if runs:
        T = cfg.model.t_horizon
        ps0, ch0 = runs[0].probes, runs[0].charge
        ells = [r.mode.ell for r in runs]
        with open(out / "energies.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "E_total", "E_ratio", "E_B"] + [f"E_l{l}" for l in ells])
            k0 = ps0.index(0.0)
            e0 = sum(r.probes.values["energy"][k0] for r in runs)
            for j in np.flatnonzero(_forward(ch0, T)):
                k = ps0.index(ch0.times[j])
                per = [r.probes.values["energy"][k] for r in runs]
                tot = sum(per)
                qb = sum(r.charge.values["noether"][j] for r in runs)
                w.writerow([_fmt(ps0.times[k]), _fmt(tot), _fmt(_ratio(tot, e0)), _fmt(qb)] + [_fmt(p) for p in per])
        c, v = report.constants, report.values
        if "classical_bulk" not in v:
            return _write_summary(out, report)
        with open(out / "morawetz.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T", "classical_bulk", "refined_bulk", "I", "C_classical", "C_refined", "C_I"])
            w.writerow([_fmt(T), _fmt(v["classical_bulk"]), _fmt(v["refined_bulk"]), _fmt(v["I"]),
                        _fmt(c["C_classical"]), _fmt(c["C_refined"]), _fmt(c["C_I"])])
    if spec is not None:
        tau, dens = spec
        with open(out / "spectral.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "density", "weighted_density"])
            for t, d in zip(tau, dens):
                w.writerow([_fmt(t), _fmt(d), _fmt(abs(t) ** J_EXPONENT * d)])
    _write_summary(out, report)


def _write_summary(out: Path, report: SummaryReport) -> None:
    with open(out / "summary.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=False)
        fh.write("\n")


def load_summary(path) -> SummaryReport:
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    with open(path) as fh:
        return SummaryReport.from_dict(json.load(fh))


# -- sweeps -------------------------------------------------------------------


def fit_constant(series: Sequence[float]) -> tuple[float, float]:
    """(max value, largest ratio between consecutive values, taken >= 1).

    >>> fit_constant([5, 5, 5])
    (5.0, 1.0)
    >>> fit_constant([4, 5])
    (5.0, 1.25)
    """
    vals = [float(v) for v in series]
    if len(vals) < 2:
        raise ValueError("need at least 2 points")
    worst = 1.0
    for a, b in zip(vals, vals[1:]):
        lo, hi = sorted((abs(a), abs(b)))
        if hi == 0:
            continue
        worst = max(worst, hi / lo if lo > 0 else math.inf)
    return max(vals), worst


STABILITY_LIMIT = 1.2
PLATEAU_LIMIT = 0.05
SWEPT_CONSTANTS = ("C_classical", "C_refined", "C_I", "C_J")


def point_config(base: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "T":
        return base.replace(model=dataclasses.replace(base.model, t_horizon=float(value)))
    if axis == "epsilon":
        return base.replace(model=dataclasses.replace(base.model, epsilon=float(value)))
    if axis == "resolution":
        return base.replace(grid=dataclasses.replace(base.grid, spacing=float(value)))
    if axis == "ell":
        if int(value) != value or value < 0:
            raise ConfigError(f"ell sweep values must be nonnegative integers, got {value}")
        return base.replace(modes=(int(value),))
    raise ConfigError(f"unknown sweep axis {axis!r}")


@dataclass
class SweepPoint:
    value: float
    report: SummaryReport | None
    error: str | None = None


@dataclass
class SweepResult:
    axis: str
    points: list[SweepPoint]
    stability: dict[str, tuple[float, float]]
    verdicts: dict[str, bool]
    orders: dict[str, list] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(p.error is None and p.report.passed for p in self.points) and all(self.verdicts.values())

    def table(self, name: str) -> list[float]:
        return [p.report.constants.get(name, math.nan) if p.report else math.nan for p in self.points]


def _run_point(args):
    cfg, out = args
    try:
        return run_scenario(cfg, out, write=out is not None), None
    except (LabError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def sweep(base: ScenarioConfig, axis: str, values: Sequence[float], output_dir=None,
          workers: int = 1) -> SweepResult:
    """Run ``base`` at each value of one parameter and track the empirical constants.

    Points that fail to run are recorded with their error; the others still run.
    """
    values = [float(v) for v in values]
    if len(values) < 2:
        raise ValueError("a sweep needs at least 2 values")
    jobs = []
    errors = {}
    for v in values:
        try:
            cfg = point_config(base, axis, v)
        except (ValueError, ConfigError) as exc:
            errors[v] = f"{type(exc).__name__}: {exc}"
            cfg = None
        out = None if output_dir is None else Path(output_dir) / f"{axis}={v:g}"
        jobs.append((cfg, out))
    runnable = [j for j in jobs if j[0] is not None]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_point, runnable))
    else:
        outcomes = [_run_point(j) for j in runnable]
    it = iter(outcomes)
    points = []
    for v, (cfg, _) in zip(values, jobs):
        if cfg is None:
            points.append(SweepPoint(v, None, errors[v]))
        else:
            rep, err = next(it)
            points.append(SweepPoint(v, rep, err))

    result = SweepResult(axis, points, {}, {})
    good = [p for p in points if p.report is not None]
    if len(good) >= 2:
        names = sorted(set().union(*(p.report.constants for p in good)))
        for name in names:
            series = [p.report.constants.get(name) for p in good]
            if all(s is not None and math.isfinite(s) for s in series):
                result.stability[name] = fit_constant(series)
        if axis == "T":
            for name in SWEPT_CONSTANTS:
                if name in result.stability:
                    result.verdicts[f"{name}_stable"] = result.stability[name][1] <= STABILITY_LIMIT
            m = [p.report.constants["max_energy_ratio"] for p in good]
            result.verdicts["energy_plateau"] = abs(m[-1] / m[-2] - 1.0) <= PLATEAU_LIMIT
        if axis == "resolution":
            hs = [p.value for p in good]
            for name in ("energy_balance", "identity_classical", "identity_refined", "approx_divergence"):
                errs = [p.report.checks[name].value for p in good if name in p.report.checks]
                if len(errs) == len(hs):
                    result.orders[name] = fd.observed_orders(hs, errs)
    if output_dir is not None:
        write_sweep(Path(output_dir), result)
    return result


def write_sweep(out: Path, result: SweepResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    names = sorted(result.stability)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([result.axis, "passed"] + names)
        for p in result.points:
            row = [_fmt(p.value), str(p.report.passed if p.report else False)]
            row += [_fmt(p.report.constants.get(n, math.nan)) if p.report else "nan" for n in names]
            w.writerow(row)
    doc = {
        "axis": result.axis,
        "passed": result.passed,
        "values": [p.value for p in result.points],
        "errors": {str(p.value): p.error for p in result.points if p.error},
        "stability": {k: {"max": v[0], "max_consecutive_ratio": v[1]} for k, v in result.stability.items()},
        "verdicts": result.verdicts,
        "orders": result.orders,
    }
    with open(out / "sweep.json", "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2)
        fh.write("\n")


# -- refinement studies ---------------------------------------------------------

ORDER_THRESHOLDS = {"solution": 3.8}
DEFAULT_ORDER_THRESHOLD = 2.8


@dataclass
class ConvergeResult:
    rows: list
    min_orders: dict[str, float | None]
    verdicts: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def converge(cfg: ScenarioConfig, spacings: Sequence[float] | None = None,
             diagnostics: Sequence[str] | None = None, output_dir=None) -> ConvergeResult:
    """Refinement study of the residuals (and of the solution itself) for one scenario.

    Grids share one half-length so that coarse points are nested in fine ones.
    Windows use ramps of ``converge.ramp_smoothness`` (C^4 by default): the C^2
    ramp's third-derivative jumps would cap every windowed residual at order 2.
    """
    spec = cfg.converge or ConvergeSpec()
    hs = [float(h) for h in (spacings or spec.spacings)]
    diagnostics = tuple(diagnostics or spec.diagnostics)
    unknown = set(diagnostics) - set(CONVERGE_DIAGNOSTICS)
    if unknown:
        raise ValueError(f"unknown diagnostics {sorted(unknown)}")
    if spec.t_horizon is not None:
        cfg = cfg.replace(model=dataclasses.replace(cfg.model, t_horizon=spec.t_horizon))
    params = cfg.model
    T = params.t_horizon
    ws = WindowSet.for_horizon(T, spec.ramp_smoothness)
    L = build_grid(cfg, spacing=max(hs)).half_length
    ms_c = classical_multiplier(params.delta)

    def scenario(h):
        grid = build_grid(cfg, spacing=h, half_length=L)
        out = {}
        bal = ident = app = 0.0
        ref = {tau: 0.0 for tau in spec.taus}
        sol = []
        for ell in cfg.modes:
            run = evolve_scenario_mode(cfg, grid, ell, record_stride=1, probes=("energy", "balance_rhs"))
            ps, near = run.probes, run.near
            if "energy_balance" in diagnostics:
                e = ps.values["energy"]
                bal += abs(e[ps.index(T)] - e[ps.index(0.0)] - ps.integral("balance_rhs", 0.0, T))
            if "identity_classical" in diagnostics:
                ident += divergence_identity_residual(near, ms_c, t_range=(0.0, T))
            if "identity_refined" in diagnostics:
                for tau in spec.taus:
                    ref[tau] += divergence_identity_residual(near, refined_multiplier(tau, params.alpha), window=ws)
            if "approx_divergence" in diagnostics:
                app += approx_divergence_residual(build_windowed_fields(near, T, ws), params, cfg.profile)
            if "solution" in diagnostics:
                # u(T) on the coarsest grid's points inside |x| <= 2
                step = int(round(max(hs) / h))
                k = near.index(T)
                idx = np.arange(len(near.x))
                keep = (np.abs(near.x) <= 2.0 + 1e-9) & (np.round((near.x + L) / h).astype(int) % step == 0)
                sol.append(near.u[k, idx[keep]])
        if "energy_balance" in diagnostics:
            out["energy_balance"] = bal
        if "identity_classical" in diagnostics:
            out["identity_classical"] = ident
        if "identity_refined" in diagnostics:
            for tau in spec.taus:
                out[f"identity_refined_tau{tau:g}"] = ref[tau]
        if "approx_divergence" in diagnostics:
            out["approx_divergence"] = app
        if "solution" in diagnostics:
            out["solution"] = np.concatenate(sol)
        return out

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = convergence_study(scenario, hs)
    min_orders: dict[str, float | None] = {}
    verdicts = {}
    for name in dict.fromkeys(r.diagnostic for r in rows):
        orders = [r.observed_order for r in rows if r.diagnostic == name and r.observed_order is not None]
        errs = [r.error for r in rows if r.diagnostic == name]
        min_orders[name] = min(orders) if orders else None
        thr = ORDER_THRESHOLDS.get(name, DEFAULT_ORDER_THRESHOLD)
        # all-zero errors (zero data) leave the order undefined; that is a pass
        verdicts[name] = (all(e == 0 for e in errs)) or (bool(orders) and min(orders) >= thr)
    result = ConvergeResult(rows, min_orders, verdicts)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "converge.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["diagnostic", "spacing", "error", "observed_order"])
            for r in rows:
                w.writerow([r.diagnostic, _fmt(r.spacing), _fmt(r.error),
                            "" if r.observed_order is None else _fmt(r.observed_order)])
        with open(out / "converge.json", "w") as fh:
            json.dump(_jsonable({"spacings": hs, "t_horizon": T, "min_orders": min_orders,
                                 "verdicts": verdicts, "passed": result.passed}), fh, indent=2)
            fh.write("\n")
    return result


# -- reading reports back -----------------------------------------------------------


def report(directory) -> tuple[bool, str]:
    """Summarize every summary.json, sweep.json and converge.json under ``directory``."""
    root = Path(directory)
    lines = []
    ok = True
    found = False
    for path in sorted(root.rglob("summary.json")):
        found = True
        s = load_summary(path)
        ok &= s.passed
        lines.append(f"{path.parent}: scenario {s.scenario_id}: {'PASS' if s.passed else 'FAIL'}")
        if s.error:
            lines.append(f"  error: {s.error}")
        for c in s.checks.values():
            lines.append(f"  {'PASS' if c.passed else 'FAIL'} {c.name:20s} value={c.value:.6g} margin={c.margin:.3g}")
        for k, v in s.constants.items():
            lines.append(f"  {k} = {v if v is None else format(v, '.6g')}")
    for name in ("sweep.json", "converge.json"):
        for path in sorted(root.rglob(name)):
            found = True
            with open(path) as fh:
                doc = json.load(fh)
            ok &= bool(doc.get("passed"))
            lines.append(f"{path}: {'PASS' if doc.get('passed') else 'FAIL'}")
            for k, v in doc.get("verdicts", {}).items():
                lines.append(f"  {'PASS' if v else 'FAIL'} {k}")
            for k, v in doc.get("stability", {}).items():
                lines.append(f"  {k}: max={v['max']:.6g} ratio={v['max_consecutive_ratio']:.4f}")
            for k, v in doc.get("min_orders", {}).items():
                lines.append(f"  {k}: min observed order {v if v is None else format(v, '.3f')}")
    if not found:
        return False, f"no reports under {root}"
    return ok, "\n".join(lines)
