"""Batch driver: stage pipeline, order studies, resonance sweeps, reports.

Each stage records its numbers and a pass flag; later independent stages
still run when one fails, except that epsilon values rejected by the gap
stage are withheld from the expensive stages. Summaries are written with
fixed precision so identical runs are byte-identical.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import ansatz, geodesic, pde, profiles, reduced, scenarios
from .util import loglog_slope

__all__ = ["RunResult", "run_scenario", "order_study", "gap_sweep", "format_summary"]

_TARGET_SLOPES = {
    ("interior_L2", 1): None,
    ("interior_sup", 1): 1.0,
    ("interior_L2", 2): 1.4,
    ("boundary_L2", 2): 1.4,
}


def _fmt(x):
    if isinstance(x, float):
        return float(f"{x:.12e}")
    return x


def _round_tree(obj):
    if isinstance(obj, dict):
        return {str(k): _round_tree(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return _fmt(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_round_tree(v) for v in obj.tolist()]
    return obj


def format_summary(summary):
    return json.dumps(_round_tree(summary), indent=1, sort_keys=True) + "\n"


@dataclass
class RunResult:
    ok: bool
    summary: dict
    outdir: str

    @property
    def exit_code(self):
        return 0 if self.ok else 1


class _Pipeline:
    """Shared objects built lazily and reused across stages."""

    def __init__(self, scn):
        self.scn = scn
        self.chart = None
        self.field = None
        self.ctx = None
        self.problem = None
        self.state = None

    def ensure_geometry(self):
        if self.chart is None:
            self.chart = scenarios.build_domain(self.scn)
            self.field = scenarios.build_field(self.scn, self.chart)
        return self.chart, self.field

    def ensure_ctx(self):
        if self.ctx is None:
            self.ctx = ansatz.build_strip_context(self.scn.p, **self.scn.grid.get("strip", {}))
        return self.ctx

    def ensure_problem(self):
        if self.problem is None:
            chart, field = self.ensure_geometry()
            eps_min = min(self.scn.epsilons)
            j_max = max(60, int(np.ceil(4.0 / eps_min)))
            self.problem = reduced.ReducedProblem(chart, field, self.ensure_ctx().lambda0, j_max=j_max)
        return self.problem

    def ensure_state(self):
        if self.state is None:
            f, e = scenarios.state_exprs(self.scn)
            self.state = ansatz.state_from_callables(f=f, e=e)
        return self.state


def _stage_profiles(pipe, tables_dir):
    scn = pipe.scn
    ps = profiles.build_profiles(scn.p)
    triple = (ps.int_w2, 2.0 * ps.sigma * ps.rho1, -2.0 * ps.integrate(ps.x * ps.w * ps.w_x))
    rel = max(abs(triple[0] - triple[1]), abs(triple[0] - triple[2])) / abs(triple[0])
    zdev = abs(ps.integrate(ps.Z**2) - 1.0)
    lam_dev = abs(ps.lambda0_fd - ps.lambda0)
    id1 = 2.0 * ps.integrate(ps.w2_x * ps.w_x)
    id1_ref = -(2.0 / (scn.p - 1.0) + 0.5) * ps.rho1
    id2 = ps.integrate(ps.w2 * ps.w) / ps.sigma
    id2_ref = (0.5 - 2.0 / (scn.p - 1.0)) * ps.rho1
    ok = rel < 1e-6 and zdev < 1e-6 and lam_dev < 1e-4
    ok = ok and abs(id1 - id1_ref) < 1e-6 * abs(ps.rho1) and abs(id2 - id2_ref) < 1e-6 * abs(ps.rho1)
    profiles.save_profiles(ps, os.path.join(tables_dir, "profiles.txt"))
    return ok, {
        "identity_triple": list(triple),
        "identity_rel_dev": rel,
        "z_norm_dev": zdev,
        "lambda0": ps.lambda0,
        "lambda0_fd_dev": lam_dev,
        "rho1": ps.rho1,
        "rho2": ps.rho2,
        "passed": ok,
    }


def _stage_chart(pipe, tables_dir):
    chart, _ = pipe.ensure_geometry()
    from .geometry import export_chart_tables

    export_chart_tables(chart, os.path.join(tables_dir, "chart_coeffs.txt"))
    info = {
        "k1": chart.k1,
        "k2": chart.k2,
        "b1": chart.b1,
        "b2": chart.b2,
        "b3": chart.b3,
        "b4": chart.b4,
        "jacobian_min": chart.jacobian_min,
    }
    ok = chart.jacobian_min > 0.0
    if pipe.scn.domain.get("kind") == "flat_channel":
        ts = np.linspace(-chart.delta0 * 0.9, chart.delta0 * 0.9, 9)
        hs = np.linspace(0.0, 1.0, 9)
        tt, hh = np.meshgrid(ts, hs, indexing="ij")
        met = chart.metric(tt, hh)
        dev = max(np.max(np.abs(met["g11"] - 1.0)), np.max(np.abs(met["g12"])), np.max(np.abs(met["g22"] - 1.0)))
        info["flat_metric_dev"] = float(dev)
        ok = ok and dev < 1e-12
    info["passed"] = ok
    return ok, info


def _stage_gap(pipe, tables_dir):
    scn = pipe.scn
    ctx = pipe.ensure_ctx()
    _, field = pipe.ensure_geometry()
    ledgers = {}
    ok = True
    for eps in scn.epsilons:
        led = reduced.gap_check(eps, scn.gap_constant, ctx.lambda0, field.ell)
        ledgers[eps] = led
        ok = ok and led.passes
    info = {
        "lambda_star": ledgers[scn.epsilons[0]].lambda_star,
        "entries": [
            {"eps": e, "margin": led.margin, "passes": led.passes, "argmin_j": led.argmin_j}
            for e, led in ledgers.items()
        ],
        "passed": ok,
    }
    return ok, info, ledgers


def _stage_geodesic(pipe, tables_dir):
    chart, field = pipe.ensure_geometry()
    _, res, sup = geodesic.stationarity_residual(chart, field)
    scale = float(np.max(field.V0(np.linspace(0, 1, 101))))
    stationary = sup < 1e-10 * max(scale, 1.0)
    info = {"stationarity_sup": sup, "stationary": stationary}
    j0 = geodesic.weighted_length(chart, field, 0.0)
    info["weighted_length"] = j0
    if stationary:
        rep = geodesic.nondegeneracy_test(chart, field)
        info.update(
            {
                "smallest_singular": rep.smallest[-1],
                "threshold": rep.threshold,
                "nondegenerate": rep.nondegenerate,
            }
        )
        ok = rep.nondegenerate
    else:
        ok = False
        info["nondegenerate"] = False
    info["passed"] = ok
    return ok, info


def _stage_ansatz(pipe, tables_dir, ledgers):
    scn = pipe.scn
    chart, field = pipe.ensure_geometry()
    ctx = pipe.ensure_ctx()
    state = pipe.ensure_state()
    usable = [e for e in scn.epsilons if ledgers is None or ledgers[e].passes]
    rows = []
    reports = {}
    ok = True
    for eps in usable:
        bundle = ansatz.assemble_ansatz(
            scn.tier, state, eps, ctx, chart, field, reduced_problem=pipe.ensure_problem()
        )
        rep = ansatz.interior_residual(bundle)
        bnd = ansatz.boundary_residual(bundle)
        rows.append([eps, rep.sup, rep.l2, rep.l2_E12, bnd.l2_g02 + bnd.l2_g12])
        reports[eps] = (bundle, rep, bnd)
        ok = ok and not rep.quadrature_flag
    rows = np.asarray(rows)
    np.savetxt(
        os.path.join(tables_dir, "residual_norms.txt"),
        rows,
        header="eps sup L2 L2_E12 boundary_rest",
        fmt="%.12e",
    )
    info = {"rows": rows.tolist(), "tier": scn.tier}
    if usable:
        bundle, rep, _ = reports[usable[0]]
        ansatz.export_strip_table(rep, os.path.join(tables_dir, "residual_table.txt"))
        if bundle.h_solution is not None:
            info["h_norm_star"] = bundle.h_solution.norm_star
            info["h_norm_over_sqrt_eps"] = bundle.h_solution.norm_star / np.sqrt(usable[0])
    if rows.shape[0] >= 3:
        info["slope_E12"] = loglog_slope(rows[:, 0], rows[:, 3])[0]
        info["slope_boundary"] = loglog_slope(rows[:, 0], rows[:, 4])[0]
        ok = ok and info["slope_E12"] >= 1.4 and info["slope_boundary"] >= 1.4
    if usable and (scn.f_expr or scn.e_expr):
        eps_probe = min(usable)
        bundle, rep, _ = reports[eps_probe]
        proj = ansatz.project_residual(bundle, rep)
        info["projection"] = proj.to_dict()
        np.savetxt(
            os.path.join(tables_dir, "projections.txt"),
            np.column_stack([proj.z, proj.measured_wx, proj.predicted_wx, proj.measured_Z, proj.predicted_Z]),
            header="z measured_wx predicted_wx measured_Z predicted_Z",
            fmt="%.12e",
        )
        ok = ok and proj.rel_dev_wx <= 0.15 and proj.rel_dev_Z <= 0.15
    info["passed"] = ok
    return ok, info


def _stage_reduced(pipe, tables_dir, ledgers):
    scn = pipe.scn
    chart, field = pipe.ensure_geometry()
    ctx = pipe.ensure_ctx()
    problem = pipe.ensure_problem()
    basis = problem.basis
    info = {
        "gram_deviation": basis.gram_deviation(),
        "yprime_bound": basis.yprime_bound(),
        "lambda_min": float(np.min(np.abs(basis.lam))),
    }
    # resonance sweep for the plotting table
    sweep_eps = np.linspace(0.08, 0.32, 121)
    norms = []
    co = ansatz.layer_coeffs(chart, field)
    op = reduced.EOperator(field.beta, co.hbar5, co.b5_tilde, co.b6_tilde)
    for e in sweep_eps:
        led = reduced.gap_check(e, scn.gap_constant, ctx.lambda0, field.ell)
        sol = reduced.solve_e_problem(lambda th: np.exp(th), e, co.b5_tilde, co.b6_tilde, field.beta, co.hbar5, ctx.lambda0, operator=op)
        norms.append([e, led.margin, float(np.max(np.abs(sol.values)))])
    np.savetxt(os.path.join(tables_dir, "resonance_sweep.txt"), np.asarray(norms), header="eps margin e_sup", fmt="%.12e")
    ok = info["lambda_min"] > 1e-8
    info["passed"] = ok
    return ok, info


def _stage_pde(pipe, tables_dir, ledgers):
    scn = pipe.scn
    chart, field = pipe.ensure_geometry()
    ctx = pipe.ensure_ctx()
    eps = scn.pde_eps
    if ledgers is not None and eps in ledgers and not ledgers[eps].passes:
        return False, {"skipped": True, "reason": "gap condition failed", "passed": False}
    grid = scn.grid.get("pde", {})
    t_nodes = pde.graded_nodes(eps, chart.delta0, fine_per_layer=grid.get("fine_per_layer", 12))
    th_nodes = np.linspace(0.0, 1.0, grid.get("n_theta", 49))
    if scn.domain.get("kind") == "flat_channel":
        mesh = pde.rectangle_mesh(t_nodes, th_nodes, field)
    else:
        mesh = pde.chart_mesh(chart, t_nodes, th_nodes, field)
    state = ansatz.zero_state()
    seeds = {}
    for tier in sorted({1, 2, 3, scn.pde_tier}):
        bundle = ansatz.assemble_ansatz(tier, state, eps, ctx, chart, field, h_from_state=True)
        u0 = np.zeros(mesh.shape)
        for j, thv in enumerate(th_nodes):
            u0[:, j] = bundle.W_eval(t_nodes, thv)
        seeds[tier] = u0
    ladder = {tier: pde.initial_residual(mesh, scn.p, eps, seeds[tier].ravel()) for tier in seeds}
    trace = pde.newton_solve(mesh, scn.p, eps, seeds[scn.pde_tier].ravel())
    info = {
        "eps": eps,
        "iterations": trace.iterations,
        "converged": trace.converged,
        "final_residual": trace.residuals[-1],
        "initial_residuals": {str(t): {"sup": r[0], "rms": r[1]} for t, r in ladder.items()},
        "negative_events": trace.negative_events,
        "positive": bool(np.min(trace.u) > 0),
    }
    ok = trace.converged and trace.iterations <= 12
    if trace.converged:
        met = pde.concentration_metrics(trace, field, scn.p, eps)
        info["metrics"] = met.to_dict()
        v_min = float(np.min(mesh.V))
        amp_ok = np.max(np.abs(met.amplitude_ratio - 1.0)) <= 0.05
        off_ok = np.max(np.abs(met.max_offsets)) <= 2.0 * met.grid_dt
        decay_ok = met.decay_rate >= 0.8 * np.sqrt(v_min)
        info["amp_ok"] = amp_ok
        info["off_ok"] = off_ok
        info["decay_ok"] = decay_ok
        ok = ok and amp_ok and off_ok and decay_ok
        U = mesh.as_grid(trace.u)
        np.savetxt(os.path.join(tables_dir, "pde_solution_mid.txt"),
                   np.column_stack([mesh.t_nodes, U[:, U.shape[1] // 2]]), header="t u_mid", fmt="%.12e")
    info["passed"] = ok
    return ok, info


def run_scenario(scn, outdir, tier=None, stages=None):
    """Run the enabled stages; nonzero exit when any enabled check fails."""
    if isinstance(scn, str):
        scn = scenarios.load_scenario(scn) if os.path.exists(scn) else scenarios.builtin_scenario(scn)
    if tier is not None:
        scn.tier = int(tier)
    enabled = tuple(stages) if stages is not None else scn.stages
    tables_dir = os.path.join(outdir, scn.name)
    os.makedirs(tables_dir, exist_ok=True)

    pipe = _Pipeline(scn)
    summary = {"scenario": scn.name, "p": scn.p, "tier": scn.tier, "stages": {}}
    ok_all = True
    ledgers = None
    for stage in ("profiles", "chart", "gap", "geodesic", "ansatz", "reduced", "pde"):
        if stage not in enabled:
            continue
        try:
            if stage == "profiles":
                ok, info = _stage_profiles(pipe, tables_dir)
            elif stage == "chart":
                ok, info = _stage_chart(pipe, tables_dir)
            elif stage == "gap":
                ok, info, ledgers = _stage_gap(pipe, tables_dir)
            elif stage == "geodesic":
                ok, info = _stage_geodesic(pipe, tables_dir)
            elif stage == "ansatz":
                ok, info = _stage_ansatz(pipe, tables_dir, ledgers)
            elif stage == "reduced":
                ok, info = _stage_reduced(pipe, tables_dir, ledgers)
            elif stage == "pde":
                ok, info = _stage_pde(pipe, tables_dir, ledgers)
        except Exception as exc:  # stage isolation: record, continue
            ok, info = False, {"error": f"{type(exc).__name__}: {exc}", "passed": False}
        summary["stages"][stage] = info
        ok_all = ok_all and ok
    summary["ok"] = ok_all
    text = format_summary(summary)
    with open(os.path.join(tables_dir, "summary.json"), "w") as fh:
        fh.write(text)
    return RunResult(ok=ok_all, summary=summary, outdir=tables_dir)


def order_study(scn, quantity, outdir=None, tier=None):
    """Least-squares epsilon-order of the requested residual quantity."""
    if isinstance(scn, str):
        scn = scenarios.load_scenario(scn) if os.path.exists(scn) else scenarios.builtin_scenario(scn)
    tier = tier if tier is not None else scn.tier
    if len(scn.epsilons) < 3:
        raise ValueError("order study needs at least 3 epsilon values")
    pipe = _Pipeline(scn)
    chart, field = pipe.ensure_geometry()
    ctx = pipe.ensure_ctx()
    state = pipe.ensure_state()
    vals = []
    for eps in scn.epsilons:
        led = reduced.gap_check(eps, scn.gap_constant, ctx.lambda0, field.ell)
        if not led.passes:
            continue
        bundle = ansatz.assemble_ansatz(tier, state, eps, ctx, chart, field)
        rep = ansatz.interior_residual(bundle)
        if quantity == "interior_sup":
            vals.append((eps, rep.sup))
        elif quantity == "interior_L2":
            vals.append((eps, rep.l2_E12))
        elif quantity == "boundary_L2":
            bnd = ansatz.boundary_residual(bundle)
            vals.append((eps, bnd.l2_g02 + bnd.l2_g12))
        elif quantity == "projection":
            proj = ansatz.project_residual(bundle, rep)
            dev = np.sqrt(np.mean((proj.measured_wx - proj.predicted_wx) ** 2))
            vals.append((eps, float(dev)))
        else:
            raise ValueError(f"unknown quantity {quantity!r}")
    vals = np.asarray(vals)
    if vals.shape[0] < 3:
        raise ValueError("fewer than 3 usable epsilon values after the gap check")
    slope, half = loglog_slope(vals[:, 0], vals[:, 1])
    target = _TARGET_SLOPES.get((quantity, min(tier, 2)))
    result = {
        "quantity": quantity,
        "tier": tier,
        "eps": vals[:, 0].tolist(),
        "values": vals[:, 1].tolist(),
        "slope": slope,
        "confidence_half_width": half,
        "target": target,
    }
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, f"order_{scn.name}_{quantity}_tier{tier}.json"), "w") as fh:
            fh.write(format_summary(result))
    return result


def gap_sweep(p, eps_min, eps_max, n=200, c=0.5, outdir=None):
    """Tabulated (eps, margin, e-sup) over an epsilon range for unit weight."""
    lam0 = profiles.lambda0_closed_form(p)
    op = reduced.EOperator(1.0, 0.0, 0.0, 0.0)
    rows = []
    for eps in np.linspace(eps_max, eps_min, n):
        led = reduced.gap_check(eps, c, lam0, 1.0)
        sol = reduced.solve_e_problem(lambda th: np.exp(th), eps, 0.0, 0.0, 1.0, 0.0, lam0, operator=op)
        rows.append([eps, led.margin, float(np.max(np.abs(sol.values)))])
    rows = np.asarray(rows)
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        np.savetxt(os.path.join(outdir, "gap_sweep.txt"), rows, header="eps margin e_sup", fmt="%.12e")
    return rows
