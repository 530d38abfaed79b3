"""Exact solution of the inviscid Burgers problem u_t + (u^2/2)_x = 0.

With the initial condition u(x, 0) = 2 + sin(2 pi x) on the periodic unit
interval, the method of characteristics gives the implicit relation

    u = 2 + sin(2 pi (x - u t)),

valid until the first characteristic crossing at t = 1 / (2 pi). The root
is found by Newton iteration with a bisection fallback; the true solution
always lies in [1, 3].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

T_SHOCK = 1.0 / (2.0 * math.pi)

TWO_PI = 2.0 * math.pi


class ConvergenceError(RuntimeError):
    """Root finder failed to reach the requested residual."""


class ShockTimeError(ValueError):
    """Requested time at or past the first characteristic crossing."""


def initial_condition(x):
    """u(x, 0) = 2 + sin(2 pi x)."""
    return 2.0 + np.sin(TWO_PI * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class CharacteristicSolver:
    """Newton solver for the implicit characteristics relation."""

    tolerance: float = 1e-12
    max_iterations: int = 100

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def exact_u(self, x: float, t: float) -> float:
        """Solve u = 2 + sin(2 pi (x - u t)) to the residual tolerance."""
        if t < 0 or t >= T_SHOCK:
            raise ShockTimeError(
                f"t={t} outside [0, {T_SHOCK}); characteristics cross at t_shock"
            )
        u = 2.0 + math.sin(TWO_PI * x)
        if t == 0.0:
            return u
        lo, hi = 1.0, 3.0  # sin is bounded, so the root is bracketed here
        for _ in range(self.max_iterations):
            phase = TWO_PI * (x - u * t)
            g = u - 2.0 - math.sin(phase)
            if abs(g) <= self.tolerance:
                return u
            dg = 1.0 + TWO_PI * t * math.cos(phase)
            step = g / dg
            u_new = u - step
            if u_new < 0.0 or u_new > 4.0:
                # Newton left the safe region: bisect on the bracket instead
                if g > 0:
                    hi = u
                else:
                    lo = u
                u_new = 0.5 * (lo + hi)
            u = u_new
        raise ConvergenceError(
            f"no convergence after {self.max_iterations} iterations at (x={x}, t={t})"
        )

    def exact_profile(self, points, t: float) -> np.ndarray:
        """Vectorised exact_u over a point array."""
        points = np.asarray(points, dtype=float)
        out = np.empty(points.shape)
        flat = points.ravel()
        for i, x in enumerate(flat):
            try:
                out.ravel()[i] = self.exact_u(float(x), t)
            except ConvergenceError as err:
                raise ConvergenceError(f"point index {i} (x={x}): {err}") from err
        return out


_DEFAULT = CharacteristicSolver()


def exact_u(x: float, t: float) -> float:
    return _DEFAULT.exact_u(x, t)


def exact_profile(points, t: float) -> np.ndarray:
    return _DEFAULT.exact_profile(points, t)
