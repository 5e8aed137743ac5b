"""Smoke test for the carleman_lab extension module.

Build the module first, for example with `maturin develop -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math
import sys
import tempfile

import carleman_lab as cl


def check(cond, what):
    if not cond:
        print(f"FAIL {what}")
        sys.exit(1)
    print(f"ok   {what}")


def main():
    p = cl.carleman_params(-1.0)
    check(abs(p["T0"] - 1080.0) < 1e-9 and abs(p["beta"] - 1.0 / 180.0) < 1e-15, "parameter rules on (0, 1)")
    check(abs(p["lambda0"] - 181.0) < 1e-9 and p["proof_checks"]["beta_below_third"], "lambda0 and proof checks")

    d = cl.time_decay(100.0, 2.0)
    check(d["numeric"] <= d["bound"] and abs(d["numeric"] - d["closed_form"]) < 1e-6, "time-decay bound")
    check(abs(d["bound"] - math.sqrt(math.pi) / 20.0) < 1e-15, "bound closed form")

    lhs, rhs, holds = cl.algebraic_inequality([1.0, -1.0], 1.0, 0, 1)
    check(not holds and lhs == 0.0 and rhs == 1.0, "printed lemma counterexample")
    check(cl.algebraic_inequality([1.0, -1.0], 1.0, 0, 1, "double")[2], "doubled lemma holds")

    rows = cl.convergence(levels=2)
    check(3.5 <= rows[1]["l2_ratio"] <= 4.5, "second-order forward solver")

    q = [math.sin(math.pi * i / 40) for i in range(41)]
    u = cl.solve_potential(q, 0.9, 61)
    check(len(u) == 61 and len(u[0]) == 41 and max(abs(v) for v in u[0]) == 0.0, "initial-potential solve")

    r = cl.recover_reference(nx=61, nt=61, max_iters=200)
    check(r["relative_error"] < 0.05, f"reconstruction error {r['relative_error']:.2e}")
    check(all(b <= a for a, b in zip(r["misfit"], r["misfit"][1:])), "monotone misfit")

    with tempfile.TemporaryDirectory() as out:
        check(cl.run_cli(["verify", "elliptic", "--seeds", "2", "--out", out]) == 0, "cli run")
        check(cl.run_cli(["verify", "wave", "--eta", "0.5", "--out", out]) == 2, "cli usage error")

    try:
        cl.solve_potential(q, 0.9, 5)
    except ValueError as e:
        check("CFL" in str(e), "CFL violation raises ValueError")
    else:
        check(False, "CFL violation raises ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
