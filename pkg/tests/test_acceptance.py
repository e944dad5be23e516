"""Acceptance battery.

Each test implements one acceptance criterion at its stated tolerance and
prints a single pass/fail line (run with `pytest tests/test_acceptance.py -s`
to see them).  The heavy cells (Monte-Carlo cross-validation, exhaustive grid
search) run in full here.
"""
import time

import numpy as np
import pytest
from scipy.integrate import quad

from peridiv import (
    ScaleContext,
    SimConfig,
    Strategy,
    StrategyValuation,
    TimePreference,
    generator_residual,
    hjb_argmax,
    hjb_residual,
    laplace_exponent,
    simulate_value,
    solve_optimal,
    sweep,
    value,
    value_many,
    value_periodic_barrier,
)
from peridiv.cli import main
from conftest import BASELINE, BASE_TP, KAPPA, PERTURBED


@pytest.fixture()
def record(capsys):
    """Emit one visible pass/fail line per criterion, then assert."""

    def _record(num: int, name: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, f"criterion {num} ({name}): {detail}"

    return _record


def test_c01_scale_laplace_identity(ctx, record):
    t0 = time.time()
    worst = 0.0
    for model in (BASELINE, *PERTURBED):
        c = ScaleContext(model, BASE_TP)
        for tag, q in (("delta", BASE_TP.delta),
                       ("gamma+delta", BASE_TP.gamma + BASE_TP.delta)):
            phi_q = c.dec_delta.phi_q if tag == "delta" else c.dec_gamma_delta.phi_q
            for off in (0.5, 1.0, 2.0, 4.0, 8.0):
                theta = phi_q + off
                upper = min(60.0 / off, 690.0 / phi_q)
                got, _ = quad(
                    lambda x: np.exp(-theta * x) * c.W(x, q=tag),
                    0.0, upper, epsabs=1e-14, epsrel=1e-12, limit=500,
                )
                want = 1.0 / (laplace_exponent(model, theta) - q)
                worst = max(worst, abs(got - want) / abs(want))
    elapsed = time.time() - t0
    record(1, "scale-laplace-identity", worst <= 1e-8 and elapsed < 5.0,
           f"(max rel err {worst:.2e}, {elapsed:.2f} s)")


def test_c02_tilted_dual_representation(ctx, record):
    phi = ctx.phi_gd
    worst = 0.0
    for x in (0.1, 1.0, 5.0):
        upper = 60.0 / (phi - ctx.phi_delta)
        got, _ = quad(
            lambda u: np.exp(-phi * u) * ctx.W(x + u),
            0.0, upper, epsabs=1e-14, epsrel=1e-12, limit=500,
        )
        got *= ctx.gamma
        want = ctx.Z_gamma_delta(x)
        worst = max(worst, abs(got - want) / abs(want))
    record(2, "tilted-dual-representation", worst <= 1e-8,
           f"(max rel err {worst:.2e})")


def test_c03_monotone_ratios(ctx, record):
    xs = np.linspace(10.0 / 500.0, 10.0, 500)
    r1 = ctx.Z_gamma_delta(xs) / ctx.W(xs)
    r2 = ctx.Z_gamma_delta(xs) / ctx.Z(xs)
    bad1 = int((np.diff(r1) > 1e-12 * (1 + np.abs(r1[:-1]))).sum())
    bad2 = int((np.diff(r2) <= -1e-12 * (1 + np.abs(r2[:-1]))).sum())
    strictly_up = r2[-1] > r2[0]
    record(3, "monotone-ratios", bad1 == 0 and bad2 == 0 and strictly_up,
           f"(violations: ratio1 {bad1}, ratio2 {bad2})")


def test_c04_closed_form_vs_monte_carlo(ctx, record):
    t0 = time.time()
    x0s = (0.2, 0.5, 1.0)
    bus = (0.8, 1.0, 1.3)
    bls = (0.1, 0.3, 0.5)
    worst_z = 0.0
    failures = []
    cell = 0
    for bu in bus:
        for bl in bls:
            s = Strategy(bu, bl, KAPPA)
            closed_all = {x0: float(value(ctx, s, x0)) for x0 in x0s}
            for x0 in x0s:
                cfg = SimConfig(paths=10**6, seed=90210 + 17 * cell)
                est = simulate_value(BASELINE, BASE_TP, s, x0, cfg)
                z = abs(est.mean - closed_all[x0]) / est.std_error
                worst_z = max(worst_z, z)
                if z > 3.0:
                    failures.append((x0, bu, bl, z))
                cell += 1
    elapsed = time.time() - t0
    record(4, "closed-form-vs-monte-carlo",
           not failures and elapsed < 600.0,
           f"(27 cells, max |z| {worst_z:.2f}, {elapsed:.1f} s; fails: {failures})")


def test_c05_smoothness_fixed_point(ctx, opt, bv_ctx, bv_opt, record):
    ok = True
    details = []
    for label, c, sol in (("diffusion", ctx, opt), ("bounded-variation", bv_ctx, bv_opt)):
        g = abs(sol.diagnostics.gamma_residual)
        ok &= g <= 1e-10
        details.append(f"{label}: |Gamma| {g:.1e}")
        if not sol.liquidation:
            v = abs(sol.diagnostics.vprime_residual)
            ok &= v <= 1e-8
            details.append(f"|V'(bl*)-1| {v:.1e}")
        sv = StrategyValuation(c, sol.strategy)
        bu = sol.b_u_star
        if c.model.sigma > 0:
            lo = sv.second_derivative(bu, "left")
            hi = sv.second_derivative(bu, "right")
        else:
            lo = sv.derivative(bu, "left")
            hi = sv.derivative(bu, "right")
        rel = abs(lo - hi) / max(abs(lo), abs(hi))
        ok &= rel <= 1e-6
        details.append(f"fit rel gap {rel:.1e}")
    record(5, "smoothness-fixed-point", ok, "(" + "; ".join(details) + ")")


def test_c06_grid_search_oracle(ctx, opt, record):
    t0 = time.time()
    bs = opt.b_star
    bu = np.arange(bs, bs + 1.0 + 1e-12, 1e-3)
    bl = np.arange(0.0, bs + 1e-12, 1e-3)
    BU, BL = np.meshgrid(bu, bl, indexing="ij")
    ok_pairs = BU - BL >= KAPPA
    vals = np.full(BU.shape, -np.inf)
    vals[ok_pairs] = value_many(ctx, BU[ok_pairs], BL[ok_pairs], KAPPA, bs)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    err_u = abs(bu[i] - opt.b_u_star)
    err_l = abs(bl[j] - opt.b_l_star)
    elapsed = time.time() - t0
    record(6, "grid-search-oracle",
           err_u <= 2e-3 and err_l <= 2e-3 and elapsed < 300.0,
           f"(|d_bu| {err_u:.1e}, |d_bl| {err_l:.1e}, {elapsed:.1f} s)")


def test_c07_hjb_battery(ctx, opt, record):
    s = opt.strategy
    gen_worst = max(
        abs(generator_residual(ctx, s, float(x)))
        for x in np.linspace(0.02, s.b_u - 0.02, 20)
    )
    hjb_worst = max(
        abs(hjb_residual(ctx, s, float(x)))
        for x in np.linspace(s.kappa, 3.0 * s.b_u, 25)
    )
    argmax_ok = True
    for x in np.linspace(s.kappa + 0.01, 3.0 * s.b_u, 10):
        x = float(x)
        expected = (x - s.b_l) if x >= s.b_u else 0.0
        step = (x - s.kappa) / 399.0
        if abs(hjb_argmax(ctx, s, x) - expected) > step + 1e-12:
            argmax_ok = False
    record(7, "hjb-battery",
           gen_worst <= 1e-6 and hjb_worst <= 1e-5 and argmax_ok,
           f"(gen {gen_worst:.1e}, hjb {hjb_worst:.1e}, argmax {'ok' if argmax_ok else 'bad'})")


def test_c08_figure2_shape(record):
    rows = sweep(BASELINE, BASE_TP, "kappa", 1e-3, 1.5, 60, KAPPA)
    assert all(r.status == "ok" for r in rows)
    bu = np.array([r.b_u_star for r in rows])
    bl = np.array([r.b_l_star for r in rows])
    liq = [r.liquidation for r in rows]
    mono_u = bool(np.all(np.diff(bu) >= -1e-9))
    mono_l = bool(np.all(np.diff(bl) <= 1e-9))
    has_kappa0 = any(liq) and not liq[0] and liq == sorted(liq)
    sandwich = all(
        r.b_l_star <= r.b_star + 1e-9 and r.b_star <= r.b_u_star + 1e-9
        for r in rows if not r.liquidation
    )
    first_liq = rows[[i for i, f in enumerate(liq) if f][0]].value if any(liq) else None
    record(8, "figure2-shape", mono_u and mono_l and has_kappa0 and sandwich,
           f"(first liquidation at kappa = {first_liq:.3f})")


def test_c09_figure3_shape(record):
    ok = True
    details = []
    for delta in (0.003, 0.004, 0.005):
        tp = TimePreference(BASE_TP.gamma, delta)
        rows = sweep(BASELINE, tp, "gamma", 2e-4, 0.08, 20, KAPPA)
        assert all(r.status == "ok" for r in rows)
        liq = [r.liquidation for r in rows]
        prefix = liq == sorted(liq, reverse=True) and liq[0] and not liq[-1]
        sandwich = all(
            r.b_l_star <= r.b_star + 1e-9 and r.b_star <= r.b_u_star + 1e-9
            for r in rows if not r.liquidation
        )
        near_kappa = abs(rows[0].b_u_star - KAPPA) <= 0.02
        ok &= prefix and sandwich and near_kappa
        details.append(
            f"delta={delta}: bu(2e-4)={rows[0].b_u_star:.4f}, "
            f"threshold {'ok' if prefix else 'bad'}"
        )
    record(9, "figure3-shape", ok, "(" + "; ".join(details) + ")")


def test_c10_no_cost_limit(ctx, opt, record):
    sol = solve_optimal(ctx, 1e-5)
    du = abs(sol.b_u_star - opt.b_star)
    dd = abs(sol.b_u_star - sol.b_l_star)
    xs = np.linspace(0.0, 2.0 * opt.b_star, 41)
    vk = value(ctx, sol.strategy, xs)
    v0 = value_periodic_barrier(ctx, opt.b_star, xs)
    vdiff = float(np.max(np.abs(vk - v0)))
    record(10, "no-cost-limit",
           du <= 0.05 and dd <= 0.05 and vdiff <= 1e-3,
           f"(|bu*-b*| {du:.4f}, |bu*-bl*| {dd:.4f}, max |V-V0| {vdiff:.1e})")


def test_c11_zero_cost_barrier_identity(ctx, opt, record):
    got = float(value_periodic_barrier(ctx, opt.b_star, opt.b_star))
    want = ctx.A0 - 1.0 / ctx.phi_gd
    err = abs(got - want)
    record(11, "zero-cost-barrier-identity", opt.b_star > 0 and err <= 1e-9,
           f"(|err| {err:.1e})")


def test_c12_determinism(tmp_path, capsys, record):
    model_file = tmp_path / "m.model"
    model_file.write_text(
        "drift_c = 0.027\nsigma = 0.09\njump_rate_1 = 1.0\n"
        "jump_scale_1 = 33.33\ngamma = 0.04\ndelta = 0.003\n"
    )
    outs = []
    for _ in range(2):
        main(["optimize", str(model_file), "--kappa", "0.06"])
        outs.append(capsys.readouterr().out)
    opt_same = outs[0] == outs[1]
    outs = []
    for _ in range(2):
        main(["simulate", str(model_file), "--bu", "1.0", "--bl", "0.3",
              "--kappa", "0.06", "--x0", "0.5", "--paths", "50000",
              "--seed", "424242"])
        outs.append(capsys.readouterr().out)
    sim_same = outs[0] == outs[1]
    record(12, "determinism", opt_same and sim_same,
           f"(optimize {'ok' if opt_same else 'bad'}, simulate {'ok' if sim_same else 'bad'})")
