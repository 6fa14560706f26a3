"""Derivative-free simplex minimization (Nelder-Mead).

Standard coefficients: reflection 1, expansion 2, contraction 0.5, shrink
0.5.  The best vertex value never increases, and +inf objective values are
handled so callers can fence off infeasible regions by returning inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REFLECT = 1.0
EXPAND = 2.0
CONTRACT = 0.5
SHRINK = 0.5


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fval: float
    iterations: int
    converged: bool


def nelder_mead(f, x0, init_step: float = 0.05, f_tol: float = 1e-8,
                x_tol: float = 1e-8, max_iter: int = 2000) -> NelderMeadResult:
    """Minimize ``f`` from ``x0``.

    The initial simplex is ``x0`` plus ``init_step`` along each axis.
    Converged when both the vertex spread (inf-norm around the best vertex)
    is below ``x_tol`` and the objective spread is below ``f_tol``.  Hitting
    ``max_iter`` returns the best point with ``converged=False`` rather than
    raising.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1 or len(x0) < 1:
        raise ValueError("x0 must be a non-empty 1-D point")
    n = len(x0)

    vertices = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] += init_step
        vertices.append(v)
    vertices = np.array(vertices)
    values = np.array([float(f(v)) for v in vertices])

    iterations = 0
    converged = False
    while iterations < max_iter:
        order = np.argsort(values, kind="stable")
        vertices = vertices[order]
        values = values[order]

        x_spread = np.max(np.abs(vertices[1:] - vertices[0]))
        f_spread = values[-1] - values[0]
        if x_spread < x_tol and f_spread < f_tol:
            converged = True
            break

        iterations += 1
        centroid = vertices[:-1].mean(axis=0)
        worst = vertices[-1]

        reflected = centroid + REFLECT * (centroid - worst)
        f_reflected = float(f(reflected))

        if f_reflected < values[0]:
            expanded = centroid + EXPAND * (centroid - worst)
            f_expanded = float(f(expanded))
            if f_expanded < f_reflected:
                vertices[-1], values[-1] = expanded, f_expanded
            else:
                vertices[-1], values[-1] = reflected, f_reflected
            continue

        if f_reflected < values[-2]:
            vertices[-1], values[-1] = reflected, f_reflected
            continue

        if f_reflected < values[-1]:
            contracted = centroid + CONTRACT * (reflected - centroid)
        else:
            contracted = centroid - CONTRACT * (centroid - worst)
        f_contracted = float(f(contracted))
        if f_contracted < min(f_reflected, values[-1]):
            vertices[-1], values[-1] = contracted, f_contracted
            continue

        # shrink toward the best vertex
        for i in range(1, n + 1):
            vertices[i] = vertices[0] + SHRINK * (vertices[i] - vertices[0])
            values[i] = float(f(vertices[i]))

    order = np.argsort(values, kind="stable")
    best = order[0]
    return NelderMeadResult(vertices[best].copy(), float(values[best]),
                            iterations, converged)
