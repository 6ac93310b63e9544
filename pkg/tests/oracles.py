"""Independent reference computations used by the tests.

Nothing here imports the package under test.
"""

import math
from fractions import Fraction
from itertools import product

import numpy as np


def simpson(f, lo, hi, n=4000):
    if n % 2:
        n += 1
    s = np.linspace(lo, hi, n + 1)
    y = f(s)
    h = (hi - lo) / n
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def _lower_kernel_integral(x, a, b, n=4000):
    """int_0^x t^(a-1) (1-t)^(b-1) dt for x <= 1/2, substituting t = s^p to tame t = 0."""
    p = max(1.0, 5.0 / a)

    def g(s):
        out = np.zeros_like(s)
        pos = s > 0
        sp = s[pos] ** p
        out[pos] = p * np.exp((p * a - 1.0) * np.log(s[pos]) + (b - 1.0) * np.log1p(-sp))
        return out

    return simpson(g, 0.0, x ** (1.0 / p), n)


def incbeta_simpson(x, a, b, n=4000):
    """Regularized incomplete beta by quadrature, integrating from the nearer end."""
    half = _lower_kernel_integral(0.5, a, b, n) + _lower_kernel_integral(0.5, b, a, n)
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    if x <= 0.5:
        return _lower_kernel_integral(x, a, b, n) / half
    return 1.0 - _lower_kernel_integral(1.0 - x, b, a, n) / half


def beta_pdf_simpson(x, a, b, n=4000):
    """Kernel at x normalised by a quadrature estimate of B(a, b)."""
    half = _lower_kernel_integral(0.5, a, b, n) + _lower_kernel_integral(0.5, b, a, n)
    return x ** (a - 1.0) * (1.0 - x) ** (b - 1.0) / half


def incbeta_binomial(x, a, b):
    """Integer shapes: I_x(a, b) = P(Binomial(a+b-1, x) >= a), exact in rationals."""
    n = a + b - 1
    x = Fraction(x)
    return sum(Fraction(math.comb(n, j)) * x ** j * (1 - x) ** (n - j) for j in range(a, n + 1))


def auc_pairs(scores, noisy):
    """Fraction of (noisy, clean) pairs ordered correctly, ties counted as half."""
    pos = [s for s, m in zip(scores, noisy) if m]
    neg = [s for s, m in zip(scores, noisy) if not m]
    total = 0.0
    for p, q in product(pos, neg):
        total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def beta_mixture_posterior(w, m1, a1, b1, a2, b2):
    """tau1 from plain lgamma arithmetic."""
    def logpdf(x, a, b):
        return ((a - 1) * math.log(x) + (b - 1) * math.log(1 - x)
                - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)))

    l1 = math.log(m1) + logpdf(w, a1, b1)
    l2 = math.log(1 - m1) + logpdf(w, a2, b2)
    return 1.0 / (1.0 + math.exp(l2 - l1))


def central_diff(f, theta, step=1e-6):
    theta = np.asarray(theta, dtype=np.float64)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e.flat[i] = step
        g.flat[i] = (f(theta + e) - f(theta - e)) / (2 * step)
    return g
