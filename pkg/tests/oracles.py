"""Independent reference implementations used as test oracles.

Everything here deliberately avoids the library's own solution paths: dense
normal-equation solves, a proximal-gradient lasso solver, and brute-force
Monte Carlo estimates.
"""

from __future__ import annotations

import numpy as np

from rdlasso.kernels import KernelSpec
from rdlasso.local_linear import design_matrix, kernel_weights


def dense_wls(data, subset, h, kernel):
    """Joint weighted least squares via one dense solve (no Cholesky path)."""
    w = kernel_weights(data.x, h, kernel)
    v = design_matrix(data.x, h)
    d = np.column_stack((v, data.z[:, list(subset)])) if len(subset) else v
    wd = d * w[:, None]
    return np.linalg.solve(wd.T @ d, wd.T @ data.y)


def penalized_objective(data, b, lam, kernel, mu_z, loadings, theta, gamma):
    """Sum-form penalized loss evaluated from scratch."""
    w = kernel_weights(data.x, b, kernel)
    v = design_matrix(data.x, b)
    zc = data.z - mu_z
    r = data.y - v @ theta - (zc @ gamma if data.p else 0.0)
    return float(w @ r**2) + lam * float(loadings @ np.abs(gamma))


def prox_gradient_lasso(data, b, lam, kernel, mu_z, loadings,
                        max_iter=200_000, tol=1e-13):
    """FISTA on the same objective, run to a tight objective tolerance.

    The unpenalized running-variable block and the penalized covariate block
    are both handled through the proximal step (identity on the first four
    coordinates).
    """
    w = kernel_weights(data.x, b, kernel)
    rows = w > 0
    wr = w[rows]
    v = design_matrix(data.x[rows], b)
    zc = data.z[rows] - mu_z
    a = np.column_stack((v, zc))
    y = data.y[rows]
    gram = (a * wr[:, None]).T @ a
    cvec = (a * wr[:, None]).T @ y
    lip = 2.0 * float(np.linalg.eigvalsh(gram)[-1])
    step = 1.0 / lip
    thresh = np.concatenate((np.zeros(4), lam * loadings)) * step

    beta = np.zeros(a.shape[1])
    momentum = beta.copy()
    t_acc = 1.0
    last_obj = np.inf
    for it in range(max_iter):
        grad = 2.0 * (gram @ momentum - cvec)
        cand = momentum - step * grad
        beta_new = np.sign(cand) * np.maximum(np.abs(cand) - thresh, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc**2))
        momentum = beta_new + ((t_acc - 1.0) / t_new) * (beta_new - beta)
        beta, t_acc = beta_new, t_new
        if it % 50 == 49:
            r = y - a @ beta
            obj = float(wr @ r**2) + lam * float(loadings @ np.abs(beta[4:]))
            if abs(last_obj - obj) <= tol * (1.0 + abs(obj)):
                # restart momentum once, then accept on the next plateau
                momentum = beta.copy()
                t_acc = 1.0
                if it > 5000:
                    break
            last_obj = obj
    r = y - a @ beta
    obj = float(wr @ r**2) + lam * float(loadings @ np.abs(beta[4:]))
    return beta, obj


def mc_variance_constant(kernel: KernelSpec, n=600, h=0.5, reps=4000, seed=0):
    """Monte Carlo estimate of the jump-variance kernel constant.

    Homoskedastic unit-noise outcomes, uniform running variable on [-1, 1]
    (density 1/2 at the cutoff): the rescaled replication variance
    Var(tau_hat) * n * h * f(0) / (sigma_plus^2 + sigma_minus^2) converges
    to the kernel constant.
    """
    rng = np.random.default_rng(seed)
    taus = np.empty(reps)
    for r in range(reps):
        x = rng.uniform(-1.0, 1.0, size=n)
        y = rng.standard_normal(n)
        w = kernel.eval(x / h) / h
        v = design_matrix(x, h)
        wv = v * w[:, None]
        beta = np.linalg.solve(wv.T @ v, wv.T @ y)
        taus[r] = beta[1]
    var = taus.var(ddof=1)
    return var * n * h * 0.5 / 2.0


def bh_reference(p_values, q):
    """Quadratic-time step-up rule, straight from the definition."""
    p = np.asarray(p_values, dtype=float)
    m = len(p)
    order = np.argsort(p, kind="stable")
    k_star = 0
    for i in range(1, m + 1):
        if p[order[i - 1]] <= q * i / m:
            k_star = i
    reject = np.zeros(m, dtype=bool)
    reject[order[:k_star]] = True
    return reject
