#!/usr/bin/env python3
"""Smoke test for the cbl_py extension module.

Builds the extension with cargo if needed, loads it, and exercises the
main types and operations end to end. Run from anywhere:

    python3 python/smoke_test.py [--release]
"""

import argparse
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_and_import(release: bool):
    profile = "release" if release else "debug"
    cmd = ["cargo", "build", "-p", "cbl-py"]
    if release:
        cmd.append("--release")
    subprocess.run(cmd, cwd=REPO, check=True)
    lib = REPO / "target" / profile / "libcbl_py.so"
    if not lib.exists():  # e.g. macOS
        lib = REPO / "target" / profile / "libcbl_py.dylib"
    stage = Path(tempfile.mkdtemp(prefix="cbl_py_"))
    shutil.copy(lib, stage / "cbl_py.so")
    sys.path.insert(0, str(stage))
    import cbl_py

    return cbl_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--release", action="store_true")
    cbl = build_and_import(parser.parse_args().release)

    # instance basics
    inst = cbl.Instance([[1.0, math.inf], [math.inf, 1.0]], 1.0)
    assert inst.agents == 2 and inst.dists == 2
    approx(inst.n_ir(0, 0), 1.0)
    assert inst.n_ir(0, 1) is None
    assert math.isinf(inst.p_ir(0))

    # compliant penalties and the bargaining-solution check
    pair = cbl.Instance([[1.0], [1.0]], 1.0)
    per_cell, per_agent, social = cbl.compliant_penalty(pair, [[1.0], [1.0]])
    approx(per_agent[0], 1.5)
    approx(social, 3.0)
    ok, slack = cbl.is_bargaining_solution(pair, [[0.6], [0.6]])
    assert ok and slack[0] > 0

    # utilitarian division vs the brute-force oracle
    plan = cbl.utilitarian_bargain(pair)
    total = plan[0][0] + plan[1][0]
    approx(total, math.sqrt(2.0), 1e-4)
    oracle = cbl.brute_force_bargain(pair, 0.01, 2.0)
    approx(sum(r[0] for r in oracle), math.sqrt(2.0), 0.02)

    # plan adjustment and the sharing condition on the canonical instance
    m25 = cbl.Instance([[1.0]] * 25, 1.0)
    n_bar = [[0.2]] * 25
    n_tilde, donating, totals = cbl.compute_bargaining_approx(m25, n_bar)
    assert donating == [[]]
    approx(totals[0], 5.0, 1e-9)
    favorable, violation = cbl.check_favorable(m25, n_bar)
    assert favorable and violation is None

    # corruption coefficient and the closed-form triangle
    alpha, residual = cbl.solve_alpha(0.2, 5.0, 1.0, 1.0)
    approx(alpha, 0.532289524357288, 1e-9)
    assert residual < 1e-9
    assert cbl.g_function(0.2, 5.0, 1.0, 1.0, math.sqrt(0.2)) <= 0.0
    cf = cbl.penalty_closed_form(0.2, 5.0, 1.0, 1.0, alpha)
    alt = cbl.penalty_closed_form_alt(0.2, 5.0, 1.0, 1.0, alpha)
    quad = cbl.penalty_quadrature(0.2, 5.0, 1.0, 1.0, alpha, 0.2, 400)
    approx(cf, 0.7381474305654057, 1e-9)
    approx(cf, alt, 1e-10)
    approx(cf, quad, 1e-6)

    # special functions
    approx(cbl.i_integral(1.0, 1.0), 0.5358965408799917, 1e-12)
    approx(cbl.j_integral(1.0, 0.0), math.sqrt(math.pi / 2.0) / 2.0, 1e-12)
    assert cbl.erfc_lb(1.0) < cbl.erfcx(1.0) * math.exp(-1.0)

    # analytic penalties, efficiency, hardness
    _, per_agent, _ = cbl.analytic_penalty_cbl(m25, n_bar)
    assert all(p <= m25.p_ir(i) for i, p in enumerate(per_agent))
    _, max_ratio, social_ratio, bound, favorable, within = cbl.efficiency_report(m25, n_bar)
    assert favorable and within and max_ratio <= 8.0
    costs, plan, optimum, ne_lb, ratio = cbl.hardness_instance(16, 1.0, 1.0)
    approx(optimum, 16.0, 1e-12)
    approx(ne_lb, 16.0, 1e-12)
    approx(ratio, 1.0, 1e-12)
    assert math.isinf(costs[0][1]) and plan[0][0] == 4.0

    # a small Monte Carlo run agrees with the analytic table
    scaled = cbl.Instance([[1.0 / 25.0]] * 25, 1.0)
    ones = [[1.0]] * 25
    per_cell, _, _, se = cbl.run_game_compliant(scaled, ones, ones, "cbl", 2000, 7)
    (analytic, _, _) = cbl.analytic_penalty_cbl(scaled, ones)
    assert abs(per_cell[0][0] - analytic[0][0]) <= 4.0 * se[0][0]

    counts = cbl.recommended_counts(scaled, ones)
    assert counts == ones

    print("smoke test passed")


if __name__ == "__main__":
    main()
