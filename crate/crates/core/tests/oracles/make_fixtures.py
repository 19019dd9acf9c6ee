"""Independent oracle values for the GLM, glmPS and TMLE fixtures.

Run from the repository root:

    python3 crates/core/tests/oracles/make_fixtures.py

Writes crates/core/tests/fixtures/oracle_fixtures.json. Inputs are rounded
to three decimals so both sides parse identical doubles. Everything here is
plain numpy: LU solves of the normal equations and hand-written Newton
iterations, sharing no code with the library.
"""

import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "oracle_fixtures.json"
rng = np.random.default_rng(20250611)


def r3(x):
    return np.round(np.asarray(x, dtype=float), 3)


def expit(x):
    return 1.0 / (1.0 + np.exp(-x))


def newton_logistic(X, y, offset=None, w=None, iters=200):
    n, p = X.shape
    off = np.zeros(n) if offset is None else offset
    w = np.ones(n) if w is None else w
    beta = np.zeros(p)
    for _ in range(iters):
        mu = expit(X @ beta + off)
        score = X.T @ (w * (y - mu))
        info = X.T @ (X * (w * mu * (1 - mu))[:, None])
        step = np.linalg.solve(info, score)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-15:
            break
    return beta


def wls_fixture():
    n = 20
    X = r3(rng.normal(size=(n, 3)))
    y = r3(1.0 + X @ np.array([0.5, -1.2, 2.0]) + rng.normal(scale=0.7, size=n))
    w = r3(rng.uniform(0.2, 3.0, size=n))
    a = (rng.random(n) < 0.5).astype(int)
    Z = np.column_stack([np.ones(n), X])
    beta = np.linalg.solve(Z.T @ (Z * w[:, None]), Z.T @ (w * y))
    return {
        "columns": {"x1": X[:, 0].tolist(), "x2": X[:, 1].tolist(), "x3": X[:, 2].tolist()},
        "a": a.tolist(),
        "y": y.tolist(),
        "weights": w.tolist(),
        "coefficients": beta.tolist(),
    }


def logistic_fixture():
    n = 25
    X = r3(rng.normal(size=(n, 2)))
    y = (rng.random(n) < expit(-0.3 + X @ np.array([0.9, -0.6]))).astype(float)
    Z = np.column_stack([np.ones(n), X])
    beta = newton_logistic(Z, y)
    return {
        "columns": {"x1": X[:, 0].tolist(), "x2": X[:, 1].tolist()},
        "y": y.tolist(),
        "coefficients": beta.tolist(),
    }


def glm_ps_fixture():
    n = 30
    X = r3(rng.normal(size=(n, 2)))
    a = (rng.random(n) < expit(0.2 + X @ np.array([0.8, -0.5]))).astype(float)
    y = r3(2.0 + 1.5 * a + X @ np.array([1.0, 0.4]) + rng.normal(scale=0.5, size=n))
    Z = np.column_stack([np.ones(n), X])
    g = expit(Z @ newton_logistic(Z, a))
    S = np.column_stack([np.ones(n), a, g])
    b = np.linalg.solve(S.T @ S, S.T @ y)
    ey1 = np.mean(b[0] + b[1] + b[2] * g)
    ey0 = np.mean(b[0] + b[2] * g)
    return {
        "columns": {"x1": X[:, 0].tolist(), "x2": X[:, 1].tolist()},
        "a": a.astype(int).tolist(),
        "y": y.tolist(),
        "ey1": ey1,
        "ey0": ey0,
        "ate": ey1 - ey0,
    }


def tmle_fixture():
    n = 40
    x = r3(rng.normal(size=n))
    a = (rng.random(n) < expit(0.1 + 1.2 * x)).astype(float)
    y = (rng.random(n) < expit(-0.4 + 0.9 * a + 0.7 * x)).astype(float)
    Zq = np.column_stack([np.ones(n), a, x])
    bq = newton_logistic(Zq, y)
    eta1 = bq[0] + bq[1] + bq[2] * x
    eta0 = bq[0] + bq[2] * x
    Zg = np.column_stack([np.ones(n), x])
    g = expit(Zg @ newton_logistic(Zg, a))
    bound = 5.0 / (np.sqrt(n) * np.log(n))
    g = np.clip(g, bound, 1.0 - bound)
    H = np.column_stack([a / g, -(1 - a) / (1 - g)])
    off = np.where(a == 1, eta1, eta0)
    eps = newton_logistic(H, y, offset=off)
    q1 = expit(eta1 + eps[0] / g)
    q0 = expit(eta0 - eps[1] / (1 - g))
    return {
        "columns": {"x": x.tolist()},
        "a": a.astype(int).tolist(),
        "y": y.tolist(),
        "bound": bound,
        "epsilon": eps.tolist(),
        "ey1": q1.mean(),
        "ey0": q0.mean(),
        "ate": q1.mean() - q0.mean(),
    }


def main():
    fixtures = {
        "wls_20": wls_fixture(),
        "logistic_25": logistic_fixture(),
        "glm_ps_30": glm_ps_fixture(),
        "tmle_40": tmle_fixture(),
    }
    OUT.write_text(json.dumps(fixtures, indent=1) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
