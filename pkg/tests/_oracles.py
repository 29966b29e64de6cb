"""Independent oracles the tests check the package against.

Everything here is written directly from the model definitions with
plain loops and scalar math, deliberately avoiding the package's own
vectorized code paths, so agreement is meaningful.
"""

import math

import numpy as np


def rel_err(a, b):
    """Max absolute difference scaled by max(1, max |reference|)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def fd_gradient(f, x, rel_step=1e-5):
    """Central finite differences with per-coordinate step rel*max(1,|x|)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def fd_jacobian(f_vec, x, rel_step=1e-5):
    """Central-difference Jacobian of a vector-valued function."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        cols.append((f_vec(xp) - f_vec(xm)) / (2.0 * h))
    return np.column_stack(cols)


# -- direct likelihood formulas -------------------------------------------------


def baseline_cumhaz(family, s):
    if family == "weibull":
        return s
    if family == "gompertz":
        return math.exp(s) - 1.0
    return math.log(1.0 + s)


def baseline_haz(family, s):
    if family == "weibull":
        return 1.0
    if family == "gompertz":
        return math.exp(s)
    return 1.0 / (1.0 + s)


def cond_loglik_scalar(family, t, delta, tau, gamma):
    """ell1 for one record, straight from the definition."""
    s = t**gamma
    val = -tau * baseline_cumhaz(family, s)
    if delta:
        val += (
            math.log(tau)
            + math.log(gamma)
            + (gamma - 1.0) * math.log(t)
            + math.log(baseline_haz(family, s))
        )
    return val


def bvn_logpdf(vb, va, sb, sa, rho):
    """Bivariate normal log-density, mean zero."""
    omr = 1.0 - rho * rho
    quad = (vb / sb) ** 2 + (va / sa) ** 2 - 2.0 * rho * vb * va / (sb * sa)
    return -math.log(2.0 * math.pi * sb * sa * math.sqrt(omr)) - quad / (2.0 * omr)


def norm_logpdf(v, s):
    return -0.5 * math.log(2.0 * math.pi) - math.log(s) - 0.5 * (v / s) ** 2


def nf_negloglik(family, dataset, order=None):
    """Fixed-effects MPR negative log-likelihood as a scipy objective.

    Parameter vector is [beta (p+1), alpha (p+1)] with intercepts first,
    covariates in dataset order.
    """
    t = dataset.time
    delta = dataset.status
    X = np.column_stack([np.ones(dataset.n), dataset.covariates])
    m = X.shape[1]

    def negll(theta):
        beta = theta[:m]
        alpha = theta[m:]
        tau = np.exp(X @ beta)
        gamma = np.exp(X @ alpha)
        total = 0.0
        for i in range(dataset.n):
            total += cond_loglik_scalar(
                family, float(t[i]), int(delta[i]), float(tau[i]), float(gamma[i])
            )
        return -total

    return negll, m


# -- adaptive Gauss-Hermite restricted likelihood (scale-frailty model) --------


def _cluster_loglik_weibull(t, delta, X, beta, alpha, v):
    """sum_j ell1 for one cluster with a scale offset v (Weibull)."""
    tau = np.exp(X @ beta + v)
    gamma = np.exp(X @ alpha)
    s = t**gamma
    return float(
        np.sum(delta * (np.log(tau) + np.log(gamma) + (gamma - 1.0) * np.log(t)) - tau * s)
    )


def agh_cluster_marginal(t, delta, X, beta, alpha, sigma, n_nodes=40):
    """log of integral over v of exp(cluster loglik) * N(v; 0, sigma^2) dv.

    Adaptive Gauss-Hermite: nodes centered at the integrand mode with
    curvature-based scaling.
    """
    from numpy.polynomial.hermite import hermgauss
    from scipy.optimize import minimize_scalar

    def neg_logint(v):
        return -(
            _cluster_loglik_weibull(t, delta, X, beta, alpha, v)
            + norm_logpdf(v, sigma)
        )

    res = minimize_scalar(neg_logint, bounds=(-20, 20), method="bounded",
                          options={"xatol": 1e-12})
    vhat = res.x
    h = 1e-5
    curv = (neg_logint(vhat + h) - 2.0 * neg_logint(vhat) + neg_logint(vhat - h)) / h**2
    curv = max(curv, 1e-10)
    scale = 1.0 / math.sqrt(curv)
    nodes, weights = hermgauss(n_nodes)
    log_terms = np.array(
        [
            math.log(w) + x * x - neg_logint(vhat + math.sqrt(2.0) * scale * x)
            for x, w in zip(nodes, weights)
        ]
    )
    m = np.max(log_terms)
    return math.log(math.sqrt(2.0) * scale) + m + math.log(np.sum(np.exp(log_terms - m)))


def agh_restricted_loglik(dataset, sigma, theta_start, n_nodes=40):
    """Restricted log-likelihood of the Weibull scale-frailty model.

    The marginal log-likelihood (frailties integrated out per cluster by
    adaptive Gauss-Hermite) is maximized over the fixed effects, then the
    fixed effects are profiled out with a Laplace adjustment using the
    numerical Hessian of the marginal log-likelihood.
    """
    from scipy.optimize import minimize

    X = np.column_stack([np.ones(dataset.n), dataset.covariates])
    m = X.shape[1]
    labels = dataset.cluster_labels()
    groups = [np.asarray(dataset.clusters == lab).nonzero()[0] for lab in labels]

    def marg_loglik(theta):
        beta = theta[:m]
        alpha = theta[m:]
        total = 0.0
        for g in groups:
            total += agh_cluster_marginal(
                dataset.time[g], dataset.status[g].astype(float), X[g],
                beta, alpha, sigma, n_nodes,
            )
        return total

    res = minimize(lambda th: -marg_loglik(th), np.asarray(theta_start, dtype=float),
                   method="BFGS", options={"gtol": 1e-8, "maxiter": 500})
    theta_hat = res.x
    k = len(theta_hat)
    step = 1e-4
    hess = np.empty((k, k))
    f0 = marg_loglik(theta_hat)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = step
        hess[i, i] = (marg_loglik(theta_hat + ei) - 2 * f0 + marg_loglik(theta_hat - ei)) / step**2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = step
            hess[i, j] = hess[j, i] = (
                marg_loglik(theta_hat + ei + ej)
                - marg_loglik(theta_hat + ei - ej)
                - marg_loglik(theta_hat - ei + ej)
                + marg_loglik(theta_hat - ei - ej)
            ) / (4 * step**2)
    info = -hess
    sign, logdet = np.linalg.slogdet(info / (2.0 * math.pi))
    assert sign > 0, "marginal information not positive definite"
    return f0 - 0.5 * logdet
