"""Penalized logit reference solutions for tests/linear.rs.

Objective: sum_i logloss_i + (1/C) * penalty(w), intercept unpenalized,
columns standardized with the population standard deviation.
"""
import math
import cvxpy as cp
import numpy as np

n, p = 60, 4
X = np.array([[math.sin(0.37 * (i + 1) * (j + 1)) + 0.1 * j * math.cos(0.11 * i) for j in range(p)] for i in range(n)])
y = np.array([1.0 if math.sin(1.3 * i) + X[i, 0] - 0.5 * X[i, 2] > 0 else 0.0 for i in range(n)])
Z = (X - X.mean(0)) / X.std(0)

for pen, C in [("l1", 0.5), ("l1", 0.05), ("l2", 0.5), ("l2", 10.0)]:
    w, b = cp.Variable(p), cp.Variable()
    m = Z @ w + b
    loss = cp.sum(cp.logistic(m) - cp.multiply(y, m))
    reg = cp.norm1(w) if pen == "l1" else 0.5 * cp.sum_squares(w)
    cp.Problem(cp.Minimize(loss + reg / C)).solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    print(pen, C, "w =", [float(f"{v:.9f}") for v in w.value], "b =", f"{b.value:.9f}")
