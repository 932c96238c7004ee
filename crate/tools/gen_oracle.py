"""Regenerates crates/core/fixtures/oll_oracle.json with cvxpy.

Learner instances: random symmetric 6x6 cumulative gains (N = 2) and
learning rates, solved with Clarabel at tight tolerances.
Projection instances: random symmetric 3x3 matrices projected in Frobenius
norm onto {PSD} with entries in [0, 1].
"""
import json
import pathlib

import cvxpy as cp
import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates/core/fixtures/oll_oracle.json"


def learner(e, eps):
    d = e.shape[0]
    x = cp.Variable((d, d), symmetric=True)
    obj = cp.Maximize(eps * cp.trace(e @ x) + cp.log_det(x + np.eye(d)))
    prob = cp.Problem(obj, [x >> 0, x >= 0, x <= 1])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-9, tol_gap_rel=1e-9, tol_feas=1e-9)
    assert prob.status == "optimal", prob.status
    return prob.value, x.value


def projection(m):
    d = m.shape[0]
    x = cp.Variable((d, d), symmetric=True)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(x - m)), [x >> 0, x >= 0, x <= 1])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-9, tol_gap_rel=1e-9, tol_feas=1e-9)
    assert prob.status == "optimal", prob.status
    return x.value


def main():
    rng = np.random.default_rng(20240611)
    learners = []
    for _ in range(20):
        a = rng.normal(scale=rng.uniform(0.5, 20.0), size=(6, 6))
        e = (a + a.T) / 2
        eps = float(rng.choice([0.01, 0.05, 0.1, 0.3, 1.0]))
        value, x = learner(e, eps)
        learners.append({"cumulative": e.tolist(), "epsilon": eps, "objective": value, "x": x.tolist()})
    projections = []
    for _ in range(10):
        a = rng.normal(scale=1.5, size=(3, 3)) + 0.3
        m = (a + a.T) / 2
        projections.append({"input": m.tolist(), "projection": projection(m).tolist()})
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({"learner": learners, "projection": projections}, indent=1) + "\n")


if __name__ == "__main__":
    main()
