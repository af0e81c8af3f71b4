"""Independent reference implementations the library is checked against.

Each one is written the slow, obvious way and shares no code with urlab.
"""

import math

import numpy as np


def dh_matrix(theta, a, d, alpha):
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def fk_chain(q, dh):
    """Flange origin from the product of 4x4 homogeneous transforms."""
    T = np.eye(4)
    for theta, (a, d, alpha) in zip(q, dh):
        T = T @ dh_matrix(theta, a, d, alpha)
    return T[:3, 3]


def xcorr_naive(x, y, max_lag):
    """Pearson correlation of (x[t], y[t+k]) by explicit loops."""
    n = len(x)
    out = {}
    for k in range(-max_lag, max_lag + 1):
        pairs = [(x[t], y[t + k]) for t in range(n) if 0 <= t + k < n]
        m = len(pairs)
        mx = sum(p[0] for p in pairs) / m
        my = sum(p[1] for p in pairs) / m
        sxy = sum((p[0] - mx) * (p[1] - my) for p in pairs)
        sxx = sum((p[0] - mx) ** 2 for p in pairs)
        syy = sum((p[1] - my) ** 2 for p in pairs)
        out[k] = float("nan") if sxx == 0 or syy == 0 else sxy / math.sqrt(sxx * syy)
    return out


def solve2(A, b):
    """Cramer's rule for a 2x2 system."""
    (a, b_), (c, d) = A
    det = a * d - b_ * c
    return ((b[0] * d - b_ * b[1]) / det, (a * b[1] - c * b[0]) / det)


def reset_time(displacement, gain, v_max, a_max, dt=0.008, tol=0.01, lag_ticks=2, limit_s=10.0):
    """Seconds for a clipped P-controller to bring one joint within ``tol``.

    Commanded speed clip(gain * error, ±v_max); the velocity slews at most
    a_max per second toward the command, and the position moves with the
    velocity planned ``lag_ticks`` earlier.
    """
    err = displacement
    v_plan = 0.0
    history = [0.0] * lag_ticks
    pos_v = 0.0
    t = 0.0
    while abs(err) > tol:
        cmd = max(-v_max, min(v_max, gain * err))
        dv = max(-a_max * dt, min(a_max * dt, cmd - v_plan))
        v_plan += dv
        history.append(v_plan)
        pos_v = history.pop(0) if lag_ticks else v_plan
        err -= pos_v * dt
        t += dt
        if t > limit_s:
            raise RuntimeError("oracle did not converge")
    return t


def finite_difference(f, theta, h=1e-5):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g
