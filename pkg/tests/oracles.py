"""Independent reference solutions used by the tests (numpy/scipy only, no bikerec code)."""
import math

import numpy as np
from scipy.linalg import expm


def generator(K, lam, mu):
    """Birth-death generator Q (rows sum to zero); births are returns, deaths rentals."""
    Q = np.zeros((K + 1, K + 1))
    for j in range(K + 1):
        if j < K:
            Q[j, j + 1] = lam
        if j > 0:
            Q[j, j - 1] = mu
        Q[j, j] = -Q[j].sum()
    return Q


def exact(pi0, lam, mu, t):
    K = len(pi0) - 1
    return np.asarray(pi0, float) @ expm(generator(K, lam, mu) * t)


def uniformization(pi0, lam, mu, t, tol=1e-15):
    K = len(pi0) - 1
    Q = generator(K, lam, mu)
    rate = max(-Q.diagonal().min(), 1e-300)
    P = np.eye(K + 1) + Q / rate
    term = np.asarray(pi0, float)
    weight = math.exp(-rate * t)
    out = weight * term
    acc, n = weight, 0
    while 1.0 - acc > tol and n < 10000:
        n += 1
        term = term @ P
        weight *= rate * t / n
        out += weight * term
        acc += weight
    return out


def stationary(K, rho):
    if rho == 1.0:
        return np.full(K + 1, 1.0 / (K + 1))
    j = np.arange(K + 1)
    return rho ** j * (1 - rho) / (1 - rho ** (K + 1))


def fine_average(pi0, lam, mu, span, n=20000):
    """Time averages of pi_0 and pi_K by Simpson's rule on exact matrix-exponential samples."""
    K = len(pi0) - 1
    if n % 2:
        n += 1
    step = expm(generator(K, lam, mu) * (span / n))
    p = np.asarray(pi0, float)
    w0 = wK = 0.0
    for k in range(n + 1):
        c = 1 if k in (0, n) else (4 if k % 2 else 2)
        w0 += c * p[0]
        wK += c * p[K]
        p = p @ step
    return w0 / (3 * n), wK / (3 * n)
