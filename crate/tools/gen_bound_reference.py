#!/usr/bin/env python3
"""Regenerates the high-precision reference values for the bound evaluators.

Every formula here is evaluated with mpmath at 80 decimal digits, entirely
independently of the Rust implementation, and frozen into JSON fixtures
under crates/core/tests/fixtures/. Run from the repository root:

    python3 tools/gen_bound_reference.py
"""

import json
import pathlib
import random

import mpmath as mp

mp.mp.dps = 80

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures"


def h(p):
    p = mp.mpf(p)
    if p == 0 or p == 1:
        return mp.mpf(0)
    return -p * mp.log(p, 2) - (1 - p) * mp.log(1 - p, 2)


def qkd_final_length(eps_sec, eps_cor, n, k, q_tol, q_leak):
    eps_sec, eps_cor = mp.mpf(eps_sec), mp.mpf(eps_cor)
    n, k = mp.mpf(n), mp.mpf(k)
    delta = mp.sqrt((n + k) / (n * k) * (k + 1) / k * mp.log(4 / eps_sec))
    arg = mp.mpf(q_tol) + delta
    assert arg < mp.mpf("0.5"), "fixture point must stay in-domain"
    penalty = mp.log(1 / (eps_sec**2 * eps_cor), 2)
    return n * (1 - h(arg)) - mp.mpf(q_leak) - penalty


def ot_epsilon(lambda_ot, q_tol, xi, delta, q_leak, l):
    lam = mp.mpf(lambda_ot)
    xi, delta = mp.mpf(xi), mp.mpf(delta)
    exponent = -mp.mpf("0.5") * ((mp.mpf("0.5") - xi - h(mp.mpf(q_tol) + delta)) * lam / 2 - mp.mpf(q_leak) - mp.mpf(l))
    term1 = mp.mpf("0.5") * mp.power(2, exponent)
    term2 = mp.sqrt(6) * mp.e ** (-(delta**2) / 100 * lam)
    term3 = 2 * mp.e ** (-(xi**2) / 2 * lam)
    return term1 + term2 + term3


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20240817)

    qkd_cases = []
    # the pinned reference point
    qkd_cases.append(dict(eps_sec=1e-10, eps_cor=1e-10, n=10**6, k=10**5, q_tol=0.02, q_leak=0.33 * 10**6))
    for _ in range(40):
        n = rng.randrange(10**4, 10**7)
        k = rng.randrange(max(100, n // 100), n // 2)
        q_tol = rng.uniform(0.0, 0.04)
        qkd_cases.append(
            dict(
                eps_sec=10 ** rng.uniform(-12, -3),
                eps_cor=10 ** rng.uniform(-12, -3),
                n=n,
                k=k,
                q_tol=q_tol,
                q_leak=rng.uniform(0.1, 0.5) * n,
            )
        )
    rows = []
    for c in qkd_cases:
        val = qkd_final_length(**c)
        rows.append({**c, "expected": float(val)})
    (OUT / "qkd_length_reference.json").write_text(json.dumps(rows, indent=1) + "\n")

    # sample the margins through their exponent scales so every case is
    # representable in a double and spans the interesting range
    ot_cases = []
    while len(ot_cases) < 100:
        lam = 10 ** rng.uniform(4, 8)
        q_tol = rng.uniform(0.0, 0.04)
        delta = float(mp.sqrt(rng.uniform(1.0, 600.0) * 100 / lam))
        xi = float(mp.sqrt(rng.uniform(1.0, 600.0) * 2 / lam))
        if q_tol + delta >= 0.5 or xi >= 0.5:
            continue
        bracket = float((mp.mpf("0.5") - mp.mpf(xi) - h(mp.mpf(q_tol) + mp.mpf(delta))) * mp.mpf(lam) / 2)
        budget = bracket + 2 * rng.uniform(-500.0, 5.0)
        if budget < 0:
            continue
        split = rng.uniform(0.0, 1.0)
        ot_cases.append(
            dict(
                lambda_ot=lam,
                q_tol=q_tol,
                xi=xi,
                delta=delta,
                q_leak=budget * split,
                l=budget * (1 - split),
            )
        )
    rows = []
    for c in ot_cases:
        val = ot_epsilon(**c)
        assert mp.mpf("1e-290") < val < mp.mpf("1e300"), "sampler must stay representable"
        rows.append({**c, "expected": float(val)})
    (OUT / "ot_epsilon_reference.json").write_text(json.dumps(rows, indent=1) + "\n")
    print(f"wrote {len(qkd_cases)} qkd cases, {len(rows)} ot cases to {OUT}")


if __name__ == "__main__":
    main()
