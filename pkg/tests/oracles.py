"""Independent oracles for derived reference values.

Nothing here imports the package: each oracle recomputes its number by a
different route (brute-force scans, closed forms, direct sums), and frozen
constants were computed once from the closed forms quoted next to them.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

# frozen closed forms
LOG2 = 0.6931471805599453  # log((1 + 3) / 2)
E_RATIO = 1.5819767068693265  # e / (e - 1)
EX65_HAT = 2.4180232931306733  # 4 - e / (e - 1)


def cdf_inverse(values, probs, t):
    """``inf{x : F(x) > t}`` by scanning the sorted support."""
    pairs = sorted(zip(values, probs))
    acc = 0
    for x, p in pairs:
        acc += p
        if acc > t:
            return x
    return pairs[-1][0]


def step_quantile_integral(values, probs, a, b):
    """``int_a^b q(t) dt`` for an atomic law, exact for rational input."""
    pairs = sorted(zip(values, probs))
    total = 0
    lo = 0
    for x, p in pairs:
        hi = lo + p
        left, right = max(lo, a), min(hi, b)
        if right > left:
            total += x * (right - left)
        lo = hi
    return total


def avar_discrete(values, probs, lam):
    """``(1/lam) int_{1-lam}^1 q(t) dt``."""
    return step_quantile_integral(values, probs, 1 - lam, 1) / lam


def grid_root(f, lo, hi, n=20001, refine=60):
    """Smallest grid point where the nonincreasing ``f`` drops to <= 0, refined by halving."""
    xs = np.linspace(lo, hi, n)
    vals = np.array([f(x) for x in xs])
    k = int(np.argmax(vals <= 0))
    if vals[k] > 0:
        raise ValueError("no sign change on the grid")
    a, b = xs[max(k - 1, 0)], xs[k]
    for _ in range(refine):
        m = 0.5 * (a + b)
        if f(m) <= 0:
            b = m
        else:
            a = m
    return b


def entropy(probs, z):
    return float(sum(p * zi * math.log(zi) for p, zi in zip(probs, z) if zi > 0))


def exp_mgf(a, rate=1.0):
    """``E[e^{aX}]`` for ``X`` exponential with the given rate; ``inf`` past the threshold."""
    return rate / (rate - a) if a < rate else math.inf


def exp_tail_mean(N):
    """``E[X 1{X > N}]`` for ``X ~ exp(1)``: ``(1 + N) e^{-N}``."""
    return (1.0 + N) * math.exp(-N)


def avar_exp_tail(lam, N):
    """``v_lam(X 1{X > N})`` for ``X ~ exp(1)`` from the closed-form tail integral."""
    s = math.exp(-N)
    if lam <= s:
        return 1.0 - math.log(lam)
    return (1.0 + N) * s / lam


def spike_mean(n, values):
    """``E_{Q_n}[X]`` with ``Q_n = (1 - 1/n) delta_1 + (1/n) delta_n``; ``values[k-1] = X(k)``."""
    if n == 1:
        return Fraction(values[0])
    return (1 - Fraction(1, n)) * values[0] + Fraction(1, n) * values[n - 1]


def geometric_cum(depth):
    """Cumulative weights of ``P(k) = 2^-k``."""
    out, acc = [], Fraction(0)
    for k in range(1, depth + 1):
        acc += Fraction(1, 2**k)
        out.append(acc)
    return out


def log_mgf_survival(a, qs, n=200001):
    """``log int_0^1 e^{a q(1-s)} ds`` by a midpoint rule after ``s = e^{-u}``; ``qs(s) = q(1 - s)``."""
    u = np.linspace(0.0, 60.0, n)
    du = u[1] - u[0]
    mid = u[:-1] + du / 2
    vals = np.exp(a * qs(np.exp(-mid))) * np.exp(-mid)
    return float(np.log(vals.sum() * du))


def robust_shortfall_grid(loss, family, values, probs):
    """Root of ``max_P E_P[l(X - t)] - l(0)`` by a grid scan over ``[min X, max X]``."""
    x = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    l0 = float(loss(0.0))
    f = lambda t: max(float(np.sum(p * np.asarray(P) * loss(x - t))) for P in family) - l0  # noqa: E731
    return grid_root(f, float(x.min()) - 1e-9, float(x.max()) + 1e-9)


def spike_hull_weights(q):
    """Mixture weights of ``q = sum_n w_n Q_n``: ``w_n = n q_n`` for ``n >= 2`` and ``w_1`` the remainder."""
    w = [Fraction(n) * qn for n, qn in enumerate(q[1:], start=2)]
    return [1 - sum(w)] + w


def _exp_tail_block(N, log_a, log_b):
    """Average of ``v_t(X 1{X > N})`` over ``t`` uniform on ``(e^log_a, e^log_b]`` for ``X ~ exp(1)``."""
    from scipy.integrate import quad

    a, b = math.exp(log_a), math.exp(log_b)
    cut = math.exp(-N)
    pts = [cut] if a < cut < b else None
    return quad(lambda t: avar_exp_tail(t, N), a, b, points=pts, limit=200, epsabs=1e-13)[0] / (b - a)


def spike_block_exp_tail(N, n_max=200):
    """``sup_n phi_{mu_n}(X 1{X > N})`` for the spike-block measures and ``X ~ exp(1)``.

    Members are summed directly by scipy quadrature; the ``n -> inf`` limit
    ``body + 1`` enters as one more candidate.
    """
    body = _exp_tail_block(N, -1.0, 0.0)
    members = [body] + [(1 - 1 / n) * body + _exp_tail_block(N, -float(n), -float(n) + 1.0) / n for n in range(2, n_max)]
    return max(max(members), body + 1.0)
