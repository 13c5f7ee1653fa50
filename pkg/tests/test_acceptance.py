"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""
import math

import numpy as np
import pytest
from scipy.optimize import brentq, minimize_scalar

from randcert.bell import (
    Scenario,
    bell_value,
    chsh_expression,
    expression_from_correlators,
    local_bound,
    pr_box,
)
from randcert.certificates import extract_certificate, rescale_to_named_form
from randcert.conic import ProgramBuilder, export_sdpa, import_sdpa
from randcert.conic import solve as solve_program
from randcert.digp import GuessingProblem, Target, assemble_primal, solve, trivial_lower_bound
from randcert.models import (
    behavior_from_model,
    cglmp_behavior,
    cglmp_expression,
    chsh_model,
    chsh_noise_behavior,
    partial_entangled_behavior,
)
from randcert.npa import MomentBlock, MomentStructure
from randcert.nslp import ns_solve

from conftest import random_quantum_behavior, random_violating_behavior
from test_nslp import vertex_oracle_chsh, vertex_oracle_local

S = Scenario(2, 2, 2, 2)
TSIRELSON = 2 * math.sqrt(2)


@pytest.fixture(scope="module")
def cglmp_argmax():
    f = cglmp_expression()
    res = minimize_scalar(lambda a: -bell_value(f, cglmp_behavior(a)), bounds=(0.45, 0.7),
                          method="bounded", options={"xatol": 1e-8})
    return res.x


def test_criterion_01_partially_entangled(criterion):
    p = partial_entangled_behavior(27 * math.pi / 200, 0.99)
    g = solve(GuessingProblem.full(p, Target(1, 0), 3)).value
    criterion(1, abs(g - 0.609) <= 0.005, f"G(A,B|E,2,1) at theta=27pi/200, v=0.99, level 3 = {g:.5f}")


def test_criterion_02_eight_term_local_bound(criterion):
    f = expression_from_correlators(0.0, [1.36, 1.51], [-0.390, 2.05], [[2.74, 2.60], [2.35, -3.86]])
    lb = local_bound(f)
    criterion(2, abs(lb - 8.36) <= 0.01, f"local bound of the eight-term expression = {lb:.4f}")


def test_criterion_03_cglmp(criterion, cglmp_argmax):
    f = cglmp_expression()
    cross = brentq(lambda a: bell_value(f, cglmp_behavior(a)) - 2.0, 0.2, 0.5, xtol=1e-12)
    g = solve(GuessingProblem.full(cglmp_behavior(cglmp_argmax), Target(0), 2)).value
    ok = (abs(cglmp_argmax - 0.617) <= 0.005 and abs(cross - math.sqrt(3 / 22)) <= 0.005
          and abs(g - 1 / 3) <= 1e-3)
    criterion(3, ok, f"argmax alpha = {cglmp_argmax:.5f}, crossing = {cross:.5f}, G(A|E,1) = {g:.6f}")


@pytest.mark.slow
def test_criterion_04_cglmp_interval(criterion, cglmp_argmax):
    grid = np.round(np.arange(0.5169, 0.7070, 0.02), 4)
    ok_at = {a: abs(solve(GuessingProblem.full(cglmp_behavior(a), Target(0), 2)).value - 1 / 3) <= 1e-3
             for a in grid}
    # contiguous run of grid points with G = 1/3 around the maximizer
    centre = int(np.argmin(np.abs(grid - cglmp_argmax)))
    lo = hi = centre
    if ok_at[grid[centre]]:
        while lo > 0 and ok_at[grid[lo - 1]]:
            lo -= 1
        while hi < len(grid) - 1 and ok_at[grid[hi + 1]]:
            hi += 1
        width = grid[hi] - grid[lo]
    else:
        width = 0.0
    criterion(4, width >= 0.05, f"G = 1/3 on alpha in [{grid[lo]:.4f}, {grid[hi]:.4f}], width {width:.3f}")


def test_criterion_05_full_beats_chsh(criterion):
    t = Target(0, 0)
    diffs = {}
    for v in (0.80, 0.85, 0.90, 0.95, 1.0):
        p = chsh_noise_behavior(v)
        full = solve(GuessingProblem.full(p, t, 2)).value
        chsh = solve(GuessingProblem.bell([(chsh_expression(), bell_value(chsh_expression(), p))], t, 2)).value
        diffs[v] = chsh - full
    ok = all(d >= -2e-6 for d in diffs.values()) and diffs[0.90] > 1e-4 and abs(diffs[1.0]) <= 1e-4
    detail = ", ".join(f"v={v:.2f}: {d:+.2e}" for v, d in diffs.items())
    criterion(5, ok, f"CHSH-only minus full G: {detail}")


def test_criterion_06_certificate_shape(criterion):
    fits = {}
    for v in (1.0, 0.9):
        sol = solve(GuessingProblem.full(chsh_noise_behavior(v), Target(0, 0), 2))
        fits[v] = rescale_to_named_form(extract_certificate(sol))
    dev = {v: max(abs(f.f11 - 1), abs(f.f22 - 1)) for v, f in fits.items()}
    ok = dev[1.0] <= 0.02 and dev[0.9] > 0.02
    criterion(6, ok, f"v=1: f11={fits[1.0].f11:.4f} f22={fits[1.0].f22:.4f}; "
                     f"v=0.9: f11={fits[0.9].f11:.4f} f22={fits[0.9].f22:.4f}")


def test_criterion_07_duality_and_hierarchy(criterion):
    rng = np.random.default_rng(7)
    targets = [Target(0), Target(1), Target(0, 0), Target(1, 1)]
    worst = {"dual": 0.0, "hier": 0.0, "ns": 0.0, "margin": -1.0, "trivial": 0.0}
    for i in range(20):
        # alternate generic models (often local) with perturbed CHSH-type ones
        p = random_violating_behavior(rng) if i % 2 == 0 else random_quantum_behavior(rng)
        t = targets[(i // 2) % len(targets)]
        sol1 = solve(GuessingProblem.full(p, t, 1))
        sol2 = solve(GuessingProblem.full(p, t, 2))
        g_ns = ns_solve(GuessingProblem.full(p, t)).value
        for sol in (sol1, sol2):
            cert = extract_certificate(sol)
            worst["dual"] = max(worst["dual"], abs(sol.value - cert.bound))
            worst["margin"] = max(worst["margin"], max(cert.margins))
            worst["trivial"] = max(worst["trivial"], trivial_lower_bound(p, t) - sol.value)
        worst["hier"] = max(worst["hier"], sol2.value - sol1.value)
        worst["ns"] = max(worst["ns"], sol1.value - g_ns)
    ok = (worst["dual"] <= 2e-6 and worst["hier"] <= 2e-6 and worst["ns"] <= 2e-6
          and worst["margin"] <= 1e-6 and worst["trivial"] <= 2e-6)
    criterion(7, ok, "20 models; worst " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_08_ns_oracle(criterion):
    g_pr = ns_solve(GuessingProblem.full(pr_box(), Target(0))).value
    oracle_pr = vertex_oracle_local(pr_box(), 0)
    g_chsh = ns_solve(GuessingProblem.bell([(chsh_expression(), TSIRELSON)], Target(0))).value
    oracle_chsh = vertex_oracle_chsh(TSIRELSON, 0)
    ok = (abs(g_pr - 0.5) <= 1e-8 and abs(g_pr - oracle_pr) <= 1e-8
          and abs(g_chsh - 0.79289) <= 1e-5 and abs(oracle_chsh - 0.79289) <= 1e-5)
    criterion(8, ok, f"PR box G = {g_pr:.10f} (vertices {oracle_pr:.10f}); "
                     f"CHSH=2sqrt2 G = {g_chsh:.7f} (vertices {oracle_chsh:.7f})")


def test_criterion_09_tsirelson(criterion):
    ms = MomentStructure(S, 1, normalized=True)
    b = ProgramBuilder((ms.size,), ms.positivity_slots, "max")
    MomentBlock(b, ms, 0, positivity_lp=0).add_objective_terms(ms.expression_terms(chsh_expression()))
    q1 = solve_program(b.build(), tol=1e-8).primal_value
    model = bell_value(chsh_expression(), behavior_from_model(*chsh_model()))
    ok = abs(q1 - TSIRELSON) <= 1e-6 and abs(model - TSIRELSON) <= 1e-12
    criterion(9, ok, f"max CHSH over Q1 = {q1:.9f}, explicit model = {model:.9f}")


def _random_program(rng):
    psd = tuple(int(n) for n in rng.integers(1, 5, size=rng.integers(0, 4)))
    nn = int(rng.integers(0 if psd else 1, 4))
    b = ProgramBuilder(psd, nn, rng.choice(["max", "min"]))
    blocks = [(k, n) for k, n in enumerate(psd)] + ([(len(psd), nn)] if nn else [])

    def entry():
        k, n = blocks[rng.integers(len(blocks))]
        i = int(rng.integers(n))
        return k, i, i if k == len(psd) else int(rng.integers(n))

    for _ in range(rng.integers(1, 5)):
        b.add_objective_raw(*entry(), float(rng.normal()))
    for _ in range(rng.integers(1, 6)):
        r = b.new_row(float(rng.normal()))
        for _ in range(rng.integers(1, 5)):
            b.add_raw(r, *entry(), float(rng.normal() * 10.0 ** rng.integers(-8, 8)))
    return b.build()


def test_criterion_10_sdpa_round_trip(criterion, data_dir):
    rng = np.random.default_rng(10)
    progs = [_random_program(rng) for _ in range(5)]
    progs += [
        assemble_primal(GuessingProblem.full(chsh_noise_behavior(0.9), Target(0, 0), 2)).program,
        assemble_primal(GuessingProblem.full(chsh_noise_behavior(0.8), Target(1), 1), "ns").program,
        assemble_primal(GuessingProblem.bell([(chsh_expression(), 2.5)], Target(0), 1, at_least=True)).program,
        assemble_primal(GuessingProblem.full(cglmp_behavior(0.5), Target(0), 1)).program,
        assemble_primal(GuessingProblem.full(chsh_noise_behavior(0.95), Target(0), "1+AB")).program,
    ]
    identical = sum(import_sdpa(export_sdpa(p)) == p for p in progs)
    golden = (data_dir / "toy_psd.dat-s").read_bytes()
    b = ProgramBuilder((2,), 0, "max")
    b.add_objective(0, 0, 0, 1.0)
    b.add_objective(0, 0, 1, 0.5)
    r = b.new_row(1.0)
    b.add(r, 0, 0, 0, 1.0)
    b.add(r, 0, 1, 1, 1.0)
    b.add(b.new_row(0.5), 0, 0, 1, 1.0)
    byte_exact = export_sdpa(b.build()).encode() == golden
    criterion(10, identical == 10 and byte_exact,
              f"{identical}/10 programs round-trip, golden file byte-exact: {byte_exact}")
