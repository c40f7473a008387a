"""Compiled inner loops for the Euler scheme and its exact reverse-mode adjoint.

Model parameters are packed as
``[alpha, lambda0, gamma0, delta0, gamma1, delta1, n_pop, vacc_rate]`` and cost
parameters as ``[k, b, c0, c1, d]``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def drift(x, beta, mp):
    alpha, lam0, gam0, del0, gam1, del1, n, o = mp[0], mp[1], mp[2], mp[3], mp[4], mp[5], mp[6], mp[7]
    s, e, i, h = x[0], x[1], x[2], x[3]
    inf = beta * s * i / n
    vac = o * n if s > 0.0 else 0.0
    out = np.empty(6)
    out[0] = -inf - vac
    out[1] = inf - alpha * e
    out[2] = alpha * e - (lam0 + gam0 + del0) * i
    out[3] = lam0 * i - (gam1 + del1) * h
    out[4] = gam0 * i + gam1 * h + vac
    out[5] = del0 * i + del1 * h
    return out


@njit(cache=True)
def forward(x0, beta, dt, mp):
    """Euler states for every step; second return is the first failing step or -1."""
    alpha, lam0, gam0, del0, gam1, del1, n, o = mp[0], mp[1], mp[2], mp[3], mp[4], mp[5], mp[6], mp[7]
    kappa = lam0 + gam0 + del0
    gh = gam1 + del1
    K = beta.shape[0]
    X = np.empty((K + 1, 6))
    X[0, :] = x0
    vmax = o * n * dt
    for k in range(K):
        s, e, i, h, r, d = X[k, 0], X[k, 1], X[k, 2], X[k, 3], X[k, 4], X[k, 5]
        inf = dt * beta[k] * s * i / n
        rest = s - inf
        vac = vmax if vmax < rest else rest
        if vac < 0.0:
            vac = 0.0
        X[k + 1, 0] = rest - vac
        X[k + 1, 1] = e + inf - dt * alpha * e
        X[k + 1, 2] = i + dt * alpha * e - dt * kappa * i
        X[k + 1, 3] = h + dt * lam0 * i - dt * gh * h
        X[k + 1, 4] = r + dt * gam0 * i + dt * gam1 * h + vac
        X[k + 1, 5] = d + dt * del0 * i + dt * del1 * h
        for j in range(6):
            v = X[k + 1, j]
            if not (v >= 0.0) or not np.isfinite(v):
                return X, k
    return X, -1


@njit(cache=True)
def running_cost(X, beta, dt, mp, cp):
    """Per-step control and hospitalization costs, left-endpoint rule."""
    n = mp[6]
    kk, b, c0, c1 = cp[0], cp[1], cp[2], cp[3]
    K = beta.shape[0]
    ctrl = np.empty(K)
    hosp = np.empty(K)
    for k in range(K):
        q = beta[k] / b
        ctrl[k] = dt * n * kk * (-np.log(q) + q - 1.0)
        h = X[k, 3]
        hosp[k] = dt * (c0 * h + c1 / n * h * h)
    return ctrl, hosp


@njit(cache=True)
def backward(X, beta, dt, mp, cp, lam_T):
    """Reverse sweep through the Euler map.

    Returns the cost-gradient costates ``lam[k] = dJ/dx_k`` and the per-step
    control gradient ``dJ/dbeta_k``; the Hamiltonian costate is ``P = -lam``.
    """
    alpha, lam0, gam0, del0, gam1, del1, n, o = mp[0], mp[1], mp[2], mp[3], mp[4], mp[5], mp[6], mp[7]
    kk, b, c0, c1 = cp[0], cp[1], cp[2], cp[3]
    kappa = lam0 + gam0 + del0
    gh = gam1 + del1
    K = beta.shape[0]
    vmax = o * n * dt
    lam = np.empty((K + 1, 6))
    grad = np.empty(K)
    lam[K, :] = lam_T
    for k in range(K - 1, -1, -1):
        s, i, h = X[k, 0], X[k, 2], X[k, 3]
        ls, le, li, lh, lr, ld = lam[k + 1, 0], lam[k + 1, 1], lam[k + 1, 2], lam[k + 1, 3], lam[k + 1, 4], lam[k + 1, 5]
        inf = dt * beta[k] * s * i / n
        if vmax > 0.0 and s - inf <= vmax:
            # vaccination clamp active: whatever S would keep flows into R instead
            ls = lr
        d_inf_ds = dt * beta[k] * i / n
        d_inf_di = dt * beta[k] * s / n
        d_inf_db = dt * s * i / n
        jump = le - ls
        lam[k, 0] = ls + d_inf_ds * jump
        lam[k, 1] = le * (1.0 - dt * alpha) + li * dt * alpha
        lam[k, 2] = (d_inf_di * jump + li * (1.0 - dt * kappa) + lh * dt * lam0
                     + lr * dt * gam0 + ld * dt * del0)
        lam[k, 3] = (dt * (c0 + 2.0 * c1 * h / n) + lh * (1.0 - dt * gh)
                     + lr * dt * gam1 + ld * dt * del1)
        lam[k, 4] = lr
        lam[k, 5] = ld
        grad[k] = dt * n * kk * (1.0 / b - 1.0 / beta[k]) + d_inf_db * jump
    return lam, grad


@njit(cache=True)
def terminal_excess(X, threshold):
    K = X.shape[0] - 1
    ex = X[K, 1] + X[K, 2] + X[K, 3] - threshold
    return ex if ex > 0.0 else 0.0


@njit(cache=True)
def evaluate(x0, beta, dt, mp, cp, inv_mu, threshold):
    """Forward pass, cost components and reverse pass in one call.

    ``inv_mu = 0`` switches the extinction penalty off. Returns
    ``(X, lam, grad, parts, bad)`` with ``parts = [control, hosp, death, penalty]``.
    """
    n, d = mp[6], cp[4]
    X, bad = forward(x0, beta, dt, mp)
    parts = np.zeros(4)
    if bad >= 0:
        return X, np.zeros((1, 6)), np.zeros(beta.shape[0]), parts, bad
    ctrl, hosp = running_cost(X, beta, dt, mp, cp)
    ex = terminal_excess(X, threshold)
    parts[0] = ctrl.sum()
    parts[1] = hosp.sum()
    parts[2] = d * X[X.shape[0] - 1, 5]
    parts[3] = 0.5 * n * inv_mu * ex * ex
    sig = n * inv_mu * ex
    lam_T = np.array([0.0, sig, sig, sig, 0.0, d])
    lam, grad = backward(X, beta, dt, mp, cp, lam_T)
    return X, lam, grad, parts, -1


@njit(cache=True)
def descend(x0, beta, vel, n_iter, step, momentum, beta_lo, beta_hi, dt, mp, cp, inv_mu, threshold, history):
    """Heavy-ball projected descent on a fixed horizon, in place on ``beta``/``vel``.

    Writes the augmented cost before each update into ``history`` and returns
    the first iteration whose forward pass failed, or -1.
    """
    K = beta.shape[0]
    for it in range(n_iter):
        X, lam, grad, parts, bad = evaluate(x0, beta, dt, mp, cp, inv_mu, threshold)
        total = parts[0] + parts[1] + parts[2] + parts[3]
        if bad >= 0 or not np.isfinite(total):
            return it
        history[it] = total
        for k in range(K):
            v = momentum * vel[k] - step * grad[k]
            nb = beta[k] + v
            if nb < beta_lo:
                nb = beta_lo
                v = 0.0
            elif nb > beta_hi:
                nb = beta_hi
                v = 0.0
            vel[k] = v
            beta[k] = nb
    return -1
