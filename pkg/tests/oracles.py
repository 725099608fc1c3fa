"""Independent reference solvers used only by the tests."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog


def transportation_lp(alpha, beta, w):
    """(c, A, b) for max c.x s.t. Ax <= b, x >= 0 over the ell*m variables."""
    ell, m = len(alpha), len(beta)
    c = [w[s][t] for s in range(ell) for t in range(m)]
    A, b = [], []
    for s in range(ell):
        A.append([1 if k // m == s else 0 for k in range(ell * m)])
        b.append(alpha[s])
    for t in range(m):
        A.append([1 if k % m == t else 0 for k in range(ell * m)])
        b.append(beta[t])
    return c, A, b


def simplex_max(c, A, b):
    """Exact dense-tableau simplex with Bland's rule.

    Solves max c.x s.t. Ax <= b, x >= 0 with b >= 0, starting from the
    slack basis. Returns (optimum, x).
    """
    rows, cols = len(A), len(c)
    T = [[Fraction(v) for v in A[r]] + [Fraction(int(r == k)) for k in range(rows)] + [Fraction(b[r])]
         for r in range(rows)]
    obj = [-Fraction(v) for v in c] + [Fraction(0)] * rows + [Fraction(0)]
    basis = [cols + r for r in range(rows)]
    while True:
        enter = next((j for j in range(cols + rows) if obj[j] < 0), None)
        if enter is None:
            break
        ratios = [(T[r][-1] / T[r][enter], basis[r], r) for r in range(rows) if T[r][enter] > 0]
        if not ratios:
            raise ValueError("unbounded")
        _, _, leave = min(ratios)
        piv = T[leave][enter]
        T[leave] = [v / piv for v in T[leave]]
        for r in range(rows):
            if r != leave and T[r][enter] != 0:
                f = T[r][enter]
                T[r] = [a - f * p for a, p in zip(T[r], T[leave])]
        f = obj[enter]
        obj = [a - f * p for a, p in zip(obj, T[leave])]
        basis[leave] = enter
    x = [Fraction(0)] * cols
    for r, j in enumerate(basis):
        if j < cols:
            x[j] = T[r][-1]
    return obj[-1], x


def _solve_square(M, rhs):
    """Exact Gaussian elimination; None when singular."""
    n = len(M)
    aug = [[Fraction(v) for v in row] + [Fraction(r)] for row, r in zip(M, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            return None
        aug[col], aug[piv] = aug[piv], aug[col]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col] / aug[col][col]
                aug[r] = [a - f * p for a, p in zip(aug[r], aug[col])]
    return [aug[r][-1] / aug[r][r] for r in range(n)]


def vertex_enumeration_max(c, A, b):
    """Exhaustive search over every basic point of {Ax <= b, x >= 0}."""
    n = len(c)
    rows = [(list(A[r]), b[r]) for r in range(len(A))]
    rows += [([-1 if k == j else 0 for k in range(n)], 0) for j in range(n)]
    best = None
    for pick in itertools.combinations(range(len(rows)), n):
        x = _solve_square([rows[k][0] for k in pick], [rows[k][1] for k in pick])
        if x is None:
            continue
        if all(sum(a * v for a, v in zip(row, x)) <= rhs for row, rhs in rows):
            val = sum(Fraction(ci) * xi for ci, xi in zip(c, x))
            best = val if best is None else max(best, val)
    return best


def single_agent_bic_revenue(values, probs) -> float:
    """Optimal revenue of any BIC, IR mechanism selling one item to one agent.

    Variables: allocation probability a_k and payment p_k per type.
    """
    L = len(values)
    v = [float(x) for x in values]
    f = [float(x) for x in probs]
    c = np.concatenate([np.zeros(L), -np.array(f)])
    A, b = [], []
    for k in range(L):
        row = np.zeros(2 * L)
        row[k], row[L + k] = -v[k], 1  # IR
        A.append(row)
        b.append(0)
        for j in range(L):
            if j != k:
                row = np.zeros(2 * L)
                row[k], row[L + k] = -v[k], 1
                row[j], row[L + j] = v[k], -1  # IC: k does not prefer j's outcome
                A.append(row)
                b.append(0)
    bounds = [(0, 1)] * L + [(None, None)] * L
    res = linprog(c, A_ub=np.array(A), b_ub=np.array(b), bounds=bounds, method="highs")
    return -res.fun


def brute_interim(instance, algorithm):
    """w[i][s][t] by direct enumeration, written independently of the package."""
    n, ell = instance.n, instance.ell
    w = [[[0] * ell for _ in range(ell)] for _ in range(n)]
    for i in range(n):
        for t in range(ell):
            for others in itertools.product(range(ell), repeat=n - 1):
                profile = others[:i] + (t,) + others[i:]
                weight = 1
                for j, tj in enumerate(profile):
                    if j != i:
                        weight *= instance.priors[j][tj]
                for q, alloc in algorithm.distribution(profile):
                    for s in range(ell):
                        w[i][s][t] += weight * q * instance.supports[i][s](alloc[i])
    return w
