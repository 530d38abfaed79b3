"""Gauss-Legendre quadrature and barycentric Lagrange interpolation on [-1, 1].

Everything operates on the reference element xi in [-1, 1]. A rule of
degree p carries p+1 nodes (the roots of the Legendre polynomial P_{p+1})
and integrates polynomials up to degree 2p+1 exactly. Rules and bases are
cached immutably per degree, so repeated lookups during time stepping and
p-adaptation are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_NEWTON_TOL = 1e-15
_NEWTON_MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """(p+1)-point Gauss-Legendre rule for polynomial degree p."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class LagrangeBasis:
    """Nodal Lagrange basis with precomputed barycentric weights."""

    nodes: np.ndarray
    barycentric_weights: np.ndarray
    # Boundary traces l_j(-1), l_j(+1); Gauss nodes exclude the endpoints,
    # so face values are always extrapolated through these vectors.
    left_values: np.ndarray = field(init=False)
    right_values: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "left_values", lagrange_basis_at(self, -1.0))
        object.__setattr__(self, "right_values", lagrange_basis_at(self, 1.0))

    @property
    def degree(self) -> int:
        return len(self.nodes) - 1


def _legendre_and_derivative(n: int, x: np.ndarray):
    """Evaluate P_n and P_n' via the three-term recurrence."""
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev, np.zeros_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    # P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


@lru_cache(maxsize=None)
def gauss_legendre(p: int) -> QuadratureRule:
    """(p+1)-point Gauss-Legendre rule, exact for degree <= 2p+1.

    Nodes are the roots of P_{p+1}, found by Newton iteration from
    Chebyshev initial guesses; weights are 2 / ((1 - x^2) P'_{p+1}(x)^2).
    """
    if p < 0:
        raise ValueError(f"polynomial degree must be >= 0, got {p}")
    n = p + 1
    if n == 1:
        nodes = np.array([0.0])
        weights = np.array([2.0])
    else:
        k = np.arange(1, n + 1)
        x = -np.cos((2 * k - 1) * np.pi / (2 * n))  # ascending Chebyshev guesses
        for _ in range(_NEWTON_MAX_ITER):
            pn, dpn = _legendre_and_derivative(n, x)
            dx = pn / dpn
            x = x - dx
            if np.max(np.abs(dx)) < _NEWTON_TOL:
                break
        _, dpn = _legendre_and_derivative(n, x)
        nodes = x
        weights = 2.0 / ((1.0 - x * x) * dpn * dpn)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(order=p, nodes=nodes, weights=weights)


@lru_cache(maxsize=None)
def lagrange_basis(p: int) -> LagrangeBasis:
    """Lagrange basis on the degree-p Gauss-Legendre nodes."""
    return basis_from_nodes(gauss_legendre(p).nodes)


def basis_from_nodes(nodes) -> LagrangeBasis:
    """Build a barycentric Lagrange basis on arbitrary distinct nodes."""
    x = np.asarray(nodes, dtype=float)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    w = w / np.max(np.abs(w))  # scale-invariant; avoids overflow at high degree
    x = x.copy()
    x.flags.writeable = False
    w.flags.writeable = False
    return LagrangeBasis(nodes=x, barycentric_weights=w)


def lagrange_basis_at(basis: LagrangeBasis, xi: float) -> np.ndarray:
    """Values of all basis polynomials l_j at a single point xi."""
    d = xi - basis.nodes
    exact = np.nonzero(d == 0.0)[0]
    out = np.zeros_like(basis.nodes)
    if exact.size:
        out[exact[0]] = 1.0
        return out
    t = basis.barycentric_weights / d
    return t / np.sum(t)


def lagrange_eval(basis: LagrangeBasis, values, xi: float) -> float:
    """Evaluate the interpolant through (nodes, values) at xi.

    Uses the second barycentric form; exact (no division blow-up) when xi
    coincides with a node.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != basis.nodes.shape:
        raise ValueError(
            f"values length {values.shape} does not match basis {basis.nodes.shape}"
        )
    d = xi - basis.nodes
    exact = np.nonzero(d == 0.0)[0]
    if exact.size:
        return float(values[exact[0]])
    t = basis.barycentric_weights / d
    return float(np.dot(t, values) / np.sum(t))


def interpolation_matrix(src: LagrangeBasis, dst_nodes) -> np.ndarray:
    """Matrix mapping nodal values on src to interpolant values at dst_nodes."""
    dst = np.atleast_1d(np.asarray(dst_nodes, dtype=float))
    return np.array([lagrange_basis_at(src, xi) for xi in dst])


def interpolate_to(src: LagrangeBasis, values, dst_nodes) -> np.ndarray:
    """Interpolant of (src.nodes, values) evaluated at each destination node."""
    values = np.asarray(values, dtype=float)
    if values.shape != src.nodes.shape:
        raise ValueError(
            f"values length {values.shape} does not match basis {src.nodes.shape}"
        )
    return interpolation_matrix(src, dst_nodes) @ values


def diff_matrix(basis: LagrangeBasis) -> np.ndarray:
    """D with D[i, j] = l_j'(node_i); D @ values differentiates the interpolant."""
    x = basis.nodes
    w = basis.barycentric_weights
    n = len(x)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = (w[j] / w[i]) / (x[i] - x[j])
        D[i, i] = -np.sum(D[i, :])
    return D
