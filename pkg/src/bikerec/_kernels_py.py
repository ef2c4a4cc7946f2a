"""Pure-Python twin of the compiled kernels; identical semantics, much slower."""
import math

import numpy as np

BACKEND = "python"


def _rhs_list(p, lam, mu):
    K = len(p) - 1
    if K == 0:
        return [0.0]
    out = [0.0] * (K + 1)
    out[0] = -lam * p[0] + mu * p[1]
    lm = lam + mu
    for j in range(1, K):
        out[j] = lam * p[j - 1] + mu * p[j + 1] - lm * p[j]
    out[K] = lam * p[K - 1] - mu * p[K]
    return out


def _step(p, lam, mu, h, renorm_tol):
    k1 = _rhs_list(p, lam, mu)
    k2 = _rhs_list([x + 0.5 * h * d for x, d in zip(p, k1)], lam, mu)
    k3 = _rhs_list([x + 0.5 * h * d for x, d in zip(p, k2)], lam, mu)
    k4 = _rhs_list([x + h * d for x, d in zip(p, k3)], lam, mu)
    q = [x + h * (a + 2.0 * (b + c) + d) / 6.0 for x, a, b, c, d in zip(p, k1, k2, k3, k4)]
    s = sum(q)
    if abs(s - 1.0) > renorm_tol and s > 0.0:
        q = [x / s for x in q]
    return q


def _integrate(p, lam, mu, duration, h, renorm_tol, correct=False):
    n_full = int(math.floor(duration / h))
    if duration - n_full * h <= 1e-12 * duration and n_full > 0:
        n_full -= 1
    a0 = aK = 0.0
    for i in range(n_full + 1):
        hh = h if i < n_full else duration - n_full * h
        if hh <= 0.0:
            break
        d_before = _rhs_list(p, lam, mu)
        prev0, prevK = p[0], p[-1]
        p = _step(p, lam, mu, hh, renorm_tol)
        a0 += 0.5 * hh * (prev0 + p[0])
        aK += 0.5 * hh * (prevK + p[-1])
        if correct:
            # per-step Euler-Maclaurin term; telescopes to the endpoint form
            d_after = _rhs_list(p, lam, mu)
            a0 -= hh * hh / 12.0 * (d_after[0] - d_before[0])
            aK -= hh * hh / 12.0 * (d_after[-1] - d_before[-1])
    return p, a0, aK


def rhs(pi, lam, mu):
    return np.array(_rhs_list([float(x) for x in pi], lam, mu))


def evolve(pi, lam, mu, duration, h, renorm_tol=1e-12):
    p = [float(x) for x in pi]
    if duration <= 0.0:
        return np.array(p)
    p, _, _ = _integrate(p, lam, mu, duration, h, renorm_tol)
    return np.array(p)


def evolve_average(pi, lam, mu, duration, h, renorm_tol=1e-12, end_correction=True):
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    p, a0, aK = _integrate([float(x) for x in pi], lam, mu, duration, h, renorm_tol, end_correction)
    return np.array(p), a0 / duration, aK / duration


def point_mass_probs(capacity, start, lam, mu, duration, h, lo, hi, renorm_tol=1e-12):
    out = np.zeros(len(capacity))
    for i in range(len(capacity)):
        if lo[i] > hi[i]:
            continue
        p = [0.0] * (int(capacity[i]) + 1)
        p[int(start[i])] = 1.0
        if duration[i] > 0.0:
            p, _, _ = _integrate(p, lam[i], mu[i], duration[i], h[i], renorm_tol)
        out[i] = sum(p[int(lo[i]):int(hi[i]) + 1])
    return out


def _shift(p, direction):
    if len(p) == 1:
        return list(p)
    out = [0.0] * len(p)
    if direction < 0:
        out[0] = p[0] + p[1]
        out[1:-1] = p[2:]
    else:
        out[-1] = p[-1] + p[-2]
        out[1:-1] = p[:-2]
    return out


def arrival_impacts(capacity, start, lam1, mu1, dur1, h1, lam2, mu2, span2, h2, direction,
                    renorm_tol=1e-12, end_correction=True):
    out = np.zeros((4, len(capacity)))
    for i in range(len(capacity)):
        p = [0.0] * (int(capacity[i]) + 1)
        p[int(start[i])] = 1.0
        if dur1[i] > 0.0:
            p, _, _ = _integrate(p, lam1[i], mu1[i], dur1[i], h1[i], renorm_tol)
        p = [max(x, 0.0) for x in p]
        q = _shift(p, direction)
        _, a0, aK = _integrate(p, lam2[i], mu2[i], span2, h2[i], renorm_tol, end_correction)
        _, s0, sK = _integrate(q, lam2[i], mu2[i], span2, h2[i], renorm_tol, end_correction)
        out[:, i] = (a0 / span2, aK / span2, s0 / span2, sK / span2)
    return out
