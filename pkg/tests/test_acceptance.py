"""Acceptance gates.  Each test records one [PASS]/[FAIL] line in the terminal summary."""

import math
import re
import time

import numpy as np

from qutritks.core import (
    DensityMatrix,
    compatibility,
    evaluate_ineq2,
    evaluate_ineq3,
    h_projector_sum,
    observable,
    random_density_matrix,
    rays_by_label,
    s_operator,
)
from qutritks.counting import (
    bootstrap_sigma,
    correlation,
    format_compact,
    joint_probabilities,
    simulate_counts,
    single_expectation,
)
from qutritks.optics import (
    PRESET_STATES,
    apparatus_forward,
    measurement_settings,
    prepare_mixed,
    preset_config,
    pure_config,
)
from qutritks.oracle import enumerate_ks_colorings, max_classical_value, max_h_sum
from qutritks.runner import DEFAULT_SEED, Campaign, observables_text, run_campaign

COMPACT = re.compile(r"^-?\d+(\.\d+)?\(\d{1,2}\)$")
S_KET = np.ones(3) / np.sqrt(3)


def _setting(name, relabel=True):
    return next(s for s in measurement_settings(relabel) if s.name == name)


def _z(a, b):
    """Difference of two independent estimates in units of their combined sigma."""
    sig = math.hypot(a.sigma, b.sigma)
    if sig == 0:
        return 0.0 if abs(a.value - b.value) < 1e-12 else math.inf
    return (a.value - b.value) / sig


def test_c1_operator_identities(acceptance):
    t0 = time.perf_counter()
    s_dev = float(np.max(np.abs(s_operator() - 25 / 3 * np.eye(3))))
    h_dev = float(np.max(np.abs(h_projector_sum() - 4 / 3 * np.eye(3))))
    dt = time.perf_counter() - t0
    ok = s_dev < 1e-12 and h_dev < 1e-12 and dt < 1
    acceptance("C1 operator identities", ok, f"|S-25/3 I|={s_dev:.1e}, |sum B_h-4/3 I|={h_dev:.1e}, {dt:.3f} s")
    assert ok


def test_c2_classical_bounds(acceptance):
    t0 = time.perf_counter()
    best, _ = max_classical_value(workers=1)
    h_best = max_h_sum(enumerate_ks_colorings())
    dt = time.perf_counter() - t0
    ok = best == 8 and h_best == 1 and dt < 5
    acceptance("C2 classical bounds", ok, f"max over 2^13 = {best}, KS max sum b_h = {h_best}, {dt:.2f} s")
    assert ok


def test_c3_structure(acceptance):
    g = compatibility()
    r = rays_by_label()
    worst = 0.0
    for i, j in g.edge_list:
        a, b = observable(r[i]).matrix, observable(r[j]).matrix
        worst = max(worst, float(np.linalg.norm(a @ b - b @ a)))
    ok = len(g.edges) == 24 and len(g.triples) == 4 and worst < 1e-12
    acceptance("C3 structure", ok, f"{len(g.edges)} edges, {len(g.triples)} triples, max commutator {worst:.1e}")
    assert ok


def test_c4_state_independence(acceptance):
    states = [apparatus_forward(preset_config(k)) for k in PRESET_STATES]
    rng = np.random.default_rng(DEFAULT_SEED)
    states += [random_density_matrix(rng) for _ in range(1000)]
    d2 = max(abs(evaluate_ineq2(s) - 25 / 3) for s in states)
    d3 = max(abs(evaluate_ineq3(s) - 4 / 3) for s in states)
    ok = len(states) == 1009 and d2 < 1e-10 and d3 < 1e-10
    acceptance("C4 state independence", ok, f"{len(states)} states, max dev {d2:.1e} / {d3:.1e}")
    assert ok


def test_c5_violation_all_states(acceptance):
    t0 = time.perf_counter()
    bundle = run_campaign(Campaign(mean_heralds=100_000, efficiency=1.0, seed=DEFAULT_SEED))
    dt = time.perf_counter() - t0
    reps = [sr.report for sr in bundle.states]
    ok = (
        len(reps) == 9
        and all(r.lhs2 > 8 and r.violation_sigmas2 > 5 and r.lhs3 > 1 and r.violation_sigmas3 > 5 for r in reps)
        and dt < 60
    )
    weakest2 = min(r.violation_sigmas2 for r in reps)
    weakest3 = min(r.violation_sigmas3 for r in reps)
    acceptance("C5 violation for all 9 states", ok,
               f"min {weakest2:.1f} sigma (lhs2), min {weakest3:.1f} sigma (lhs3), {dt:.1f} s")
    assert ok


def test_c6_s_state_anchor(acceptance, default_bundle):
    sr = default_bundle.state("psi7")
    est = sr.report.singles["z1"]
    z = (est.value - 1 / 3) / est.sigma
    row = next(line for line in observables_text(sr).splitlines() if line.startswith("A[z1] "))
    emitted = row.split()[-1]
    ok = abs(z) < 4 and bool(COMPACT.match(emitted)) and format_compact(0.328, 0.018) == "0.328(18)"
    acceptance("C6 <A_z1> anchor for |s>", ok, f"{emitted} vs 1/3 ({z:+.2f} sigma)")
    assert ok


def test_c7_estimator_statistics(acceptance):
    s = DensityMatrix.from_ket(S_KET)
    rng = np.random.default_rng(DEFAULT_SEED)
    # analytic vs bootstrap sigma on a spread of estimators; a generic state
    # keeps every outcome probability away from 0 and 1
    generic = DensityMatrix.from_ket([1, 2, 3j])
    cases = [
        ("Z", lambda r: single_expectation(r, "z1")),
        ("Z", lambda r: correlation(joint_probabilities(r, ("z1", "z2")))),
        ("Y1", lambda r: correlation(joint_probabilities(r, ("y1-", "y1+")))),
        ("H0~02", lambda r: correlation(joint_probabilities(r, ("y1-", "h0")))),
        ("H1", lambda r: single_expectation(r, "y3+")),
    ]
    ratios = []
    for k, (name, est) in enumerate(cases):
        rec = simulate_counts(generic, _setting(name), 100_000, seed=DEFAULT_SEED + k)
        analytic = est(rec).sigma
        boot = bootstrap_sigma(rec, lambda r: est(r).value, 1000, rng)
        ratios.append(analytic / boot)
    boot_ok = all(abs(x - 1) < 0.2 for x in ratios)

    # RMS error scaling over heralds
    ns = [1e3, 1e4, 1e5, 1e6]
    reps = 200
    exact = {"z1": 1 / 3, "z1z2": -1 / 3}
    rms = {key: [] for key in exact}
    for n in ns:
        err = {key: [] for key in exact}
        for i in range(reps):
            rec = simulate_counts(s, _setting("Z"), n, seed=10_000 * int(math.log10(n)) + i)
            err["z1"].append(single_expectation(rec, "z1").value - exact["z1"])
            err["z1z2"].append(correlation(joint_probabilities(rec, ("z1", "z2"))).value - exact["z1z2"])
        for key in exact:
            rms[key].append(math.sqrt(np.mean(np.square(err[key]))))
    per4 = [
        (rms[key][i] / rms[key][i + 1]) ** (math.log(4) / math.log(ns[i + 1] / ns[i]))
        for key in exact for i in range(len(ns) - 1)
    ]
    scale_ok = all(1 <= f <= 4 for f in per4)
    ok = boot_ok and scale_ok
    acceptance("C7 estimator statistics", ok,
               f"analytic/bootstrap sigma in [{min(ratios):.3f}, {max(ratios):.3f}]; "
               f"RMS shrink per 4x heralds in [{min(per4):.2f}, {max(per4):.2f}]")
    assert ok


def test_c8_apparatus_round_trip(acceptance):
    rng = np.random.default_rng(DEFAULT_SEED)
    worst = 1.0
    for i in range(500):
        amps = np.abs(rng.normal(size=3))
        if i < 6:  # include states with zero amplitudes
            amps[i % 3] = 0.0
            if i >= 3:
                amps[(i + 1) % 3] = 0.0
        v = amps / np.linalg.norm(amps)
        rho = apparatus_forward(pure_config(amps)).matrix
        worst = min(worst, float(np.real(v @ rho @ v)))
    rho9 = apparatus_forward(prepare_mixed("rho9")).matrix
    d9 = float(np.max(np.abs(rho9 - np.eye(3) / 3)))
    rho8 = apparatus_forward(prepare_mixed("rho8")).matrix
    d8 = float(np.max(np.abs(rho8 - np.diag([0.5, 0, 0.5]))))
    ok = worst >= 1 - 1e-10 and d9 < 1e-12 and d8 < 1e-10
    acceptance("C8 apparatus round trip", ok,
               f"min fidelity 1-{1 - worst:.1e} over 500 states, rho9 dev {d9:.1e}, rho8 dev {d8:.1e}")
    assert ok


def test_c9_post_selection_neutrality(acceptance, default_bundle):
    """Gated scope: lhs2/lhs3 of every state, every |s> estimate, and the family-wise z^2 mean.

    Max |z| over all estimates of all states is reported but not gated: with
    ~260 comparisons per efficiency an excursion beyond 3 sigma is expected
    by chance.
    """
    gated, everything = [], []
    for k, eta in enumerate((0.5, 0.1)):
        other = run_campaign(Campaign(efficiency=eta, seed=DEFAULT_SEED + 1 + k))
        for ref, sr in zip(default_bundle.states, other.states):
            a, b = ref.report, sr.report
            gated.append((a.lhs2 - b.lhs2) / math.hypot(a.sigma2, b.sigma2))
            gated.append((a.lhs3 - b.lhs3) / math.hypot(a.sigma3, b.sigma3))
            zs = [_z(a.singles[n], b.singles[n]) for n in a.singles]
            zs += [_z(a.pairs[e], b.pairs[e]) for e in a.pairs]
            if ref.spec.name == "psi7":
                gated += zs
            # exact-zero-variance estimates (e.g. eigenstate outcomes) carry no information
            everything += [z for n, z in zip(list(a.singles) + list(a.pairs), zs)
                           if (a.singles.get(n) or a.pairs.get(n)).sigma > 0]
    mean_z2 = float(np.mean(np.square(everything)))
    worst_gated = max(abs(z) for z in gated)
    worst_all = max(abs(z) for z in everything)
    ok = worst_gated < 3 and 0.7 <= mean_z2 <= 1.3
    acceptance("C9 post-selection neutrality", ok,
               f"eta 0.5 and 0.1 vs 1: max |z| {worst_gated:.2f} over {len(gated)} gated comparisons, "
               f"mean z^2 {mean_z2:.2f} over {len(everything)}")
    acceptance("C9 info (not gated)", True, f"max |z| over all {len(everything)} estimates {worst_all:.2f}")
    assert ok


def test_c10_relabeling_equivalence(acceptance, default_bundle):
    direct = run_campaign(Campaign(relabel=False, seed=DEFAULT_SEED + 3))
    zs = []
    for ref, sr in zip(default_bundle.states, direct.states):
        exchanged = {e: est for e, est in ref.report.pairs.items() if "~" in est.source_counts.setting_name}
        assert len(exchanged) == 8
        for e, est in exchanged.items():
            other = sr.report.pairs[e]
            assert "~" not in other.source_counts.setting_name
            zs.append(_z(est, other))
    worst = max(abs(z) for z in zs)
    ok = len(zs) == 72 and worst < 3
    acceptance("C10 relabeling equivalence", ok, f"max |z| {worst:.2f} over 8 correlations x 9 states")
    assert ok

