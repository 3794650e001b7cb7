"""Regenerates the reference solutions used by tests/reference_solutions.rs.

Requires numpy and cvxpy with the CLARABEL solver. Run from this directory:

    python3 generate.py
"""
import json

import cvxpy as cp
import numpy as np


def margin(lam, mu):
    l = np.sort(lam)[::-1]
    m = np.sort(mu)[::-1][: len(l)]
    return float(min(np.cumsum(m - l) / np.arange(1, len(l) + 1)))


def random_instance(rng, k, n):
    mu = np.sort(rng.uniform(0.05, 1.0, k))[::-1]
    lam = mu[:n] * rng.uniform(0.05, 0.95, n)
    rng.shuffle(lam)
    rng.shuffle(mu)
    return lam, mu


def feasible_set(P, lam, mu, floor):
    cons = [P >= 0, cp.sum(P, axis=0) == 1, cp.sum(P, axis=1) == 1]
    cons += [P[i, :] @ mu - lam[i] >= floor for i in range(len(lam))]
    return cons


def project(Y, lam, mu):
    k = len(mu)
    P = cp.Variable((k, k))
    floor = margin(lam, mu) / np.sqrt(np.e)
    cp.Problem(cp.Minimize(cp.sum_squares(P - Y)), feasible_set(P, lam, mu, floor)).solve(
        solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10
    )
    return P.value


def phi(lam, mu):
    k = len(mu)
    P = cp.Variable((k, k))
    u = cp.Variable()
    cons = feasible_set(P, lam, mu, 0.0)[:3] + [P[i, :] @ mu - lam[i] >= u for i in range(len(lam))]
    prob = cp.Problem(cp.Minimize(-cp.log(u) + cp.sum_squares(P) / (2 * k)), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return P.value, float(prob.value)


def rows(m):
    return [[float(v) for v in r] for r in m]


def main():
    rng = np.random.default_rng(20240611)

    projections = []
    for _ in range(50):
        n = int(rng.integers(2, 5))
        lam, mu = random_instance(rng, 4, n)
        Y = rng.uniform(-0.25, 0.75, (4, 4))
        projections.append(
            {"lambda": list(lam), "mu": list(mu), "delta": margin(lam, mu), "input": rows(Y), "projection": rows(project(Y, lam, mu))}
        )

    easy = np.array([0.45, 0.35, 0.25, 0.15])
    named = [(easy, 2.1 * easy), (np.full(4, 5 / 16), np.array([1, 3 / 16, 3 / 16, 3 / 16]))]
    for _ in range(30):
        k = int(rng.integers(2, 7))
        named.append(random_instance(rng, k, int(rng.integers(1, k + 1))))
    mappings = []
    for lam, mu in named:
        P, value = phi(lam, mu)
        mappings.append({"lambda": list(map(float, lam)), "mu": list(map(float, mu)), "phi": rows(P), "objective": value})

    with open("projections.json", "w") as f:
        json.dump(projections, f, indent=1)
    with open("phi.json", "w") as f:
        json.dump(mappings, f, indent=1)


if __name__ == "__main__":
    main()
