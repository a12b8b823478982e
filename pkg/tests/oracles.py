"""Independent reference solutions used by several test modules."""

import math

import numpy as np
from scipy.optimize import brentq


def exp_kernel_moment(q):
    return 1.0 / (1.0 - q * q)


def exp_kernel_moment_slope(q):
    return 2.0 * q / (1.0 - q * q) ** 2


def smoothed_cone(y, slope, eps):
    return -slope * (np.sqrt(eps * eps + y * y) - eps)


def smoothed_cone_slope(y, slope, eps):
    return -slope * y / np.sqrt(eps * eps + y * y)


def characteristics_solution(x, t, slope, eps, r, p):
    """Classical solution of ``u_t = r + p m(u_x)`` from a smoothed cone.

    The exponential-kernel moment is convex and the datum concave, so the
    characteristics ``x = y - t p m'(u0'(y))`` never cross and the gradient
    stays below ``slope < 1``.
    """
    out = np.empty_like(np.asarray(x, dtype=float))
    for k, xk in enumerate(np.atleast_1d(x)):
        def foot(y):
            return y - t * p * exp_kernel_moment_slope(smoothed_cone_slope(y, slope, eps)) - xk
        span = 1.0 + t * p * exp_kernel_moment_slope(slope) + abs(xk)
        y = brentq(foot, xk - span, xk + span, xtol=1e-15, rtol=1e-15, maxiter=200)
        q = smoothed_cone_slope(y, slope, eps)
        out[k] = smoothed_cone(y, slope, eps) + t * (r + p * exp_kernel_moment(q)
                                                     - q * p * exp_kernel_moment_slope(q))
    return out


def brute_envelope(u, x, slope):
    return np.min(u[None, :] + slope * np.abs(x[:, None] - x[None, :]), axis=1)


def exp_kernel_riemann_sum(h, f0=0.5):
    """``sum_l h f0 exp(-|l h|)`` summed in closed form."""
    return f0 * h * (2.0 / (1.0 - math.exp(-h)) - 1.0)
