"""Acceptance suite: one test (or parametrized family) per criterion.

Each check reports through the ``acceptance`` fixture, which prints a
PASS/FAIL/SKIP line per criterion in the terminal summary.  Sub-checks that
are known not to hold at the fixed seed are marked ``xfail(strict=True)``;
README.md explains why.
"""

import importlib.util
import os
import time
from pathlib import Path

import numpy as np
import pytest

from robust_itr.data import Dataset, FeatureMap, ModelSpec
from robust_itr.inference import asymptotic_covariance_pinball, bootstrap
from robust_itr.learners import fit_lsa, fit_rr
from robust_itr.losses import LossSpec, loss_value, pinball, pinball_shift_decomposition, smoothed_loss
from robust_itr.policy import TreatmentRule
from robust_itr.simulation import Scenario, generate, run_cell
from robust_itr.solver import minimize, objective
from robust_itr.value import aipwe, ipwe

from oracles import normal_equations, vertex_oracle

TOL = 1e-12
N_CASES = 1_000_000


# ---------------------------------------------------------------------------
# 1. loss properties


def test_c1_loss_properties(acceptance):
    rng = np.random.default_rng(20240101)
    t0 = time.perf_counter()
    tau = rng.uniform(0, 1, N_CASES)
    x = rng.uniform(-10, 10, N_CASES)
    y = rng.uniform(-10, 10, N_CASES)
    shift = pinball(x - y, tau) - pinball(x, tau)

    shift_bound = int(np.sum(np.abs(shift) > np.abs(y) + TOL))
    shift_identity = int(np.sum(np.abs(shift - pinball_shift_decomposition(tau, x, y)) > TOL))

    a = rng.uniform(-10, 10, N_CASES)
    b = rng.uniform(-10, 10, N_CASES)
    convex = 0
    specs = [LossSpec.squared(), LossSpec.pinball(0.3), LossSpec.huber(1.345), LossSpec.eps_insensitive(0.5)]
    for spec in specs:
        mid = loss_value(spec, 0.5 * (a + b))
        convex += int(np.sum(mid > 0.5 * (loss_value(spec, a) + loss_value(spec, b)) + TOL))
    for spec in (LossSpec.pinball(0.7), LossSpec.eps_insensitive(0.5)):
        mid = smoothed_loss(spec, 0.5 * (a + b), 0.25)[0]
        ends = 0.5 * (smoothed_loss(spec, a, 0.25)[0] + smoothed_loss(spec, b, 0.25)[0])
        convex += int(np.sum(mid > ends + TOL))

    c = rng.uniform(0, 10, N_CASES)
    homog = int(np.sum(np.abs(pinball(c * x, tau) - c * pinball(x, tau)) > TOL))
    elapsed = time.perf_counter() - t0

    acceptance(1, "shift bound", shift_bound == 0, f"{shift_bound} violations in {N_CASES}")
    acceptance(1, "shift decomposition identity", shift_identity == 0, f"{shift_identity} violations in {N_CASES}")
    acceptance(1, "convexity midpoint", convex == 0, f"{convex} violations over {len(specs) + 2} losses")
    acceptance(1, "positive homogeneity", homog == 0, f"{homog} violations in {N_CASES}")
    acceptance(1, "runtime < 10 s", elapsed < 10, f"{elapsed:.1f} s")
    acceptance.verify()


# ---------------------------------------------------------------------------
# 2. solver against independent oracles


def test_c2_solver_oracles(acceptance):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst_ls = 0.0
    for _ in range(100):
        n, d = int(rng.integers(10, 200)), int(rng.integers(1, 8))
        X = np.column_stack([np.ones(n), rng.normal(size=(n, d - 1))]) if d > 1 else np.ones((n, 1))
        y = X @ rng.normal(size=d) + rng.standard_t(3, n)
        theta, _ = minimize(X, y, LossSpec.squared())
        worst_ls = max(worst_ls, float(np.max(np.abs(theta - normal_equations(X, y)))))

    worst_gap = -np.inf
    for _ in range(50):
        n, d = int(rng.integers(5, 31)), int(rng.integers(1, 4))
        tau = float(rng.uniform(0.05, 0.95))
        X = np.column_stack([np.ones(n), rng.normal(size=(n, d - 1))]) if d > 1 else np.ones((n, 1))
        y = X @ rng.normal(size=d) + rng.standard_cauchy(n)
        theta, _ = minimize(X, y, LossSpec.pinball(tau))
        worst_gap = max(worst_gap, objective(X, y, LossSpec.pinball(tau), theta) - vertex_oracle(X, y, tau))
    elapsed = time.perf_counter() - t0

    acceptance(2, "squared vs normal equations", worst_ls <= 1e-8, f"max-norm gap {worst_ls:.2e} over 100 instances")
    acceptance(2, "pinball vs LP vertex oracle", worst_gap <= 1e-5, f"max objective gap {worst_gap:.2e} over 50 instances")
    acceptance(2, "runtime < 60 s", elapsed < 60, f"{elapsed:.1f} s")
    acceptance.verify()


# ---------------------------------------------------------------------------
# 3, 4. simulation spot cells


def test_c3_table1_spot_cells(acceptance):
    t0 = time.perf_counter()
    ls = run_cell(Scenario("model_I", "normal", n=400, replications=200), ("LS",))["LS"]
    p5 = run_cell(Scenario("model_I", "cauchy", n=200, replications=200), ("P(0.5)",))["P(0.5)"]
    elapsed = time.perf_counter() - t0
    acceptance(3, "LS n=400 normal PCD", abs(ls.pcd_mean - 90.3) <= 1.5, f"{ls.pcd_mean:.2f} vs 90.3 +/- 1.5")
    acceptance(3, "LS n=400 normal mse", abs(ls.mse_mean - 0.33) <= 0.2 * 0.33, f"{ls.mse_mean:.4f} vs 0.33 +/- 20%")
    acceptance(3, "P(0.5) n=200 Cauchy PCD", abs(p5.pcd_mean - 81.3) <= 2, f"{p5.pcd_mean:.2f} vs 81.3 +/- 2")
    acceptance(3, "runtime < 5 min", elapsed < 300, f"{elapsed:.1f} s")
    acceptance.verify()


def test_c4_table2_spot_cell(acceptance):
    cell = run_cell(Scenario("model_II", "log_normal", n=800, replications=200), ("P(0.25)",))["P(0.25)"]
    acceptance(4, "P(0.25) n=800 log-normal mse", abs(cell.mse_mean - 0.01) <= 0.005, f"{cell.mse_mean:.4f} vs 0.01 +/- 50%")
    acceptance(4, "P(0.25) n=800 log-normal PCD", abs(cell.pcd_mean - 97.9) <= 1.5, f"{cell.pcd_mean:.2f} vs 97.9 +/- 1.5")
    acceptance.verify()


# ---------------------------------------------------------------------------
# 5. interaction-model ordering


@pytest.fixture(scope="module")
def interaction_cell():
    sc = Scenario("interaction", "gamma_centered", "treatment_interacted", n=800, replications=200, d0=10.0)
    return run_cell(sc)


def _ordering(cells, attr):
    vals = {m: getattr(c, attr) for m, c in cells.items()}
    return min(vals, key=vals.get), ", ".join(f"{m}={v:.4f}" for m, v in vals.items())


@pytest.mark.parametrize(
    "attr, winner",
    [
        ("delta_mu", "LS"),
        pytest.param(
            "delta_05",
            "P(0.5)",
            marks=pytest.mark.xfail(
                strict=True, reason="Huber edges out P(0.5) on delta_0.5 in this cell; see README"
            ),
        ),
        ("delta_025", "P(0.25)"),
    ],
)
def test_c5_interaction_ordering(acceptance, interaction_cell, attr, winner):
    best, detail = _ordering(interaction_cell, attr)
    acceptance(5, f"{winner} smallest {attr}", best == winner, detail)
    acceptance.verify()


def test_c5_ls_delta_025(acceptance, interaction_cell):
    v = interaction_cell["LS"].delta_025
    acceptance(5, "LS delta_0.25", abs(v - 0.78) <= 0.25 * 0.78, f"{v:.4f} vs 0.78 +/- 25%")
    acceptance.verify()


# ---------------------------------------------------------------------------
# 6. Cauchy robustness

_NOT_EXPLODED = pytest.mark.xfail(
    strict=True, reason="LS running mse stays below 1e4 at this seed; per-cell explosion probability is about 0.5 at 200 reps"
)
_P05_MARGINAL = pytest.mark.xfail(
    strict=True, reason="P(0.5) mse is 1.54 at this seed, within one MC SE of 1.5; see README"
)


def _c6_cells():
    for family in ("model_I", "model_II"):
        for sigma in ("homogeneous", "heterogeneous_x"):
            for n in (200, 400, 800):
                marks = []
                if sigma == "homogeneous" and n == 400:
                    marks.append(_NOT_EXPLODED)
                if family == "model_I" and sigma == "heterogeneous_x" and n == 200:
                    marks.append(_P05_MARGINAL)
                yield pytest.param(family, sigma, n, marks=marks, id=f"{family}-{sigma}-{n}")


@pytest.mark.parametrize("family, sigma, n", list(_c6_cells()))
def test_c6_cauchy_blank_vs_finite(acceptance, family, sigma, n):
    sc = Scenario(family, "cauchy", sigma, n=n, replications=200, validation_size=2000)
    cells = run_cell(sc, ("LS", "P(0.5)"))
    ls, p5 = cells["LS"], cells["P(0.5)"]
    ok = ls.mse_suppressed and p5.mse_mean is not None and p5.mse_mean < 1.5
    detail = f"LS suppressed={ls.mse_suppressed} (raw mean {ls.extra['mse_raw_mean']:.3g}), P(0.5) mse={p5.mse_mean:.3f}"
    acceptance(6, f"{family} {sigma} n={n}", ok, detail)
    acceptance.verify()


# ---------------------------------------------------------------------------
# 7. asymptotic covariance


def test_c7a_bound_psd_over_tau_grid(acceptance):
    worst = np.inf
    fits = 0
    for family in ("model_I", "model_II"):
        for law in ("normal", "log_normal", "cauchy", "gamma_centered"):
            for prop in ("constant_half", "expit_diff"):
                sc = Scenario(family, law, propensity=prop, n=200, replications=1, seed=fits)
                data, _ = generate(sc, 0)
                spec = sc.model_spec()
                for tau in np.round(np.arange(0.1, 0.91, 0.1), 2):
                    ac = asymptotic_covariance_pinball(data, fit_rr(data, spec, LossSpec.pinball(tau)), tau)
                    worst = min(worst, ac.bound_gap_min_eigenvalue())
                    fits += 1
    acceptance(7, "(a) bound - Sigma11 PSD", worst >= -1e-8, f"min eigenvalue {worst:.3e} over {fits} fits")
    acceptance.verify()


def test_c7b_median_normal_error_constant(acceptance):
    sc = Scenario("model_II", "normal", n=4000, replications=1)
    data, _ = generate(sc, 0)
    spec = sc.model_spec()
    ac = asymptotic_covariance_pinball(data, fit_rr(data, spec, LossSpec.pinball(0.5)), 0.5)
    z = spec.contrast_map.evaluate(data.x)
    ratio = np.diag(ac.covariance) * data.n / np.diag(2 * np.pi * np.linalg.inv(z.T @ z / data.n))
    acceptance(7, "(b) plug-in / 2 pi E(ZZ')^-1", bool(np.all(np.abs(ratio - 1) <= 0.15)), np.array2string(ratio, precision=3))
    acceptance.verify()


def test_c7c_wald_coverage(acceptance):
    sc = Scenario("model_II", "normal", n=800, replications=500)
    spec = sc.model_spec()
    hits = []
    for rep in range(sc.replications):
        data, truth = generate(sc, rep)
        model = fit_rr(data, spec, LossSpec.pinball(0.5))
        se = asymptotic_covariance_pinball(data, model, 0.5).se
        hits.append(np.abs(model.beta[0] - truth.beta0) <= 1.96 * se)
    cover = np.mean(hits, axis=0)
    acceptance(7, "(c) Wald coverage 95% +/- 3", bool(np.all(np.abs(cover - 0.95) <= 0.03)), np.array2string(cover, precision=3))
    acceptance.verify()


# ---------------------------------------------------------------------------
# 8. bootstrap calibration


def test_c8_bootstrap_calibration(acceptance):
    t0 = time.perf_counter()
    sc = Scenario("model_II", "normal", n=400, replications=200)
    spec = sc.model_spec()
    est, se = [], []
    for rep in range(sc.replications):
        data, _ = generate(sc, rep)
        res = bootstrap(data, spec, LossSpec.squared(), B=200, seed=rep)
        est.append(res.estimate)
        se.append(res.se)
    ratio = np.mean(se, axis=0) / np.std(est, axis=0, ddof=1)
    elapsed = time.perf_counter() - t0
    acceptance(8, "bootstrap SE / MC SD", bool(np.all(np.abs(ratio - 1) <= 0.2)), np.array2string(ratio, precision=3))
    acceptance(8, "runtime < 5 min", elapsed < 300, f"{elapsed:.1f} s")
    acceptance.verify()


# ---------------------------------------------------------------------------
# 9. value estimators

ALWAYS_TREAT = TreatmentRule(FeatureMap.linear(0), [1.0])


def test_c9_value_estimators(acceptance):
    d = Dataset([10.0, 20, 30, 40], np.zeros((4, 0)), [1, 0, 1, 0], np.full(4, 0.5))
    v = ipwe(d, ALWAYS_TREAT).value
    acceptance(9, "4-row IPWE example", v == 20.0, f"{v!r} vs 20")

    zero = fit_lsa(d.with_outcome(np.zeros(4)), ModelSpec.linear(0))
    ht = float(np.mean((d.a == 1) / 0.5 * d.y))
    v = aipwe(d, zero, ALWAYS_TREAT).value
    acceptance(9, "AIPWE with zero model", abs(v - ht) <= 1e-12, f"{v!r} vs Horvitz-Thompson {ht!r}")

    sc = Scenario("model_II", "normal", n=5000, replications=1, seed=4)
    data, _ = generate(sc, 0)
    model = fit_lsa(data, sc.model_spec())
    rule = model.rule()
    a, b = ipwe(data, rule), aipwe(data, model, rule)
    bound = 3 * np.hypot(a.se, b.se)
    acceptance(9, "IPWE/AIPWE agreement", abs(a.value - b.value) < bound, f"|{a.value:.3f} - {b.value:.3f}| vs {bound:.3f}")
    acceptance.verify()


# ---------------------------------------------------------------------------
# 10. ACTG175 (needs the user-supplied dataset)


def _actg_module():
    path = Path(__file__).resolve().parents[1] / "scripts" / "actg175_analysis.py"
    spec = importlib.util.spec_from_file_location("actg175_analysis", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_c10_actg175(acceptance):
    csv_path = os.environ.get("ACTG175_CSV")
    if not csv_path:
        acceptance(10, "ACTG175 reproduction", "SKIP", "set ACTG175_CSV to the dataset path to run")
        pytest.skip("ACTG175_CSV not set")
    actg = _actg_module()
    data = actg.load_actg175(csv_path)
    spec = actg.model_spec()
    age = 1 + actg.CONTRAST.index("age")
    ls = fit_rr(data, spec, LossSpec.squared())
    hub = fit_rr(data, spec, LossSpec.huber("auto"))
    value = aipwe(data, ls, ls.rule()).value
    acceptance(10, "LS age coefficient", abs(ls.beta[0, age] - 3.13) <= 0.05, f"{ls.beta[0, age]:.3f} vs 3.13 +/- 0.05")
    acceptance(10, "Huber age coefficient", abs(hub.beta[0, age] - 2.80) <= 0.05, f"{hub.beta[0, age]:.3f} vs 2.80 +/- 0.05")
    acceptance(10, "AIPWE LS value", abs(value - 404.39) <= 1.0, f"{value:.2f} vs 404.39 +/- 1.0")
    acceptance.verify()
