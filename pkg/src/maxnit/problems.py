"""Manufactured solution cases: exact fields, sources and boundary data.

Conventions (2D): scalar curl c(v) = d1 v2 - d2 v1, vector curl of a
scalar w is (d2 w, -d1 w). All field callables accept an (m, 2) array of
points (or a single (2,) point) and return matching arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ProblemCase",
    "SingularPointError",
    "square_case",
    "lshape_case",
    "curved_l_case",
]

_LEG_ANGLE_SPAN = 1.5 * np.pi  # the L-domain covers theta in [0, 3*pi/2]


class SingularPointError(ValueError):
    """Field evaluation requested at a point where it is unbounded."""


@dataclass(frozen=True)
class ProblemCase:
    """Exact solution bundle; the pseudo-pressure is identically zero."""

    domain: str
    nu: float
    exact_u: Callable[[np.ndarray], np.ndarray]
    exact_curl_u: Callable[[np.ndarray], np.ndarray]
    source_f: Callable[[np.ndarray], np.ndarray]
    dirichlet_u: Callable[[np.ndarray], np.ndarray]
    singularity_n: int | None = None

    def exact_p(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.zeros(pts.shape[0])


def _vectorised(fn):
    def wrapped(points):
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        out = fn(np.atleast_2d(pts))
        return out[0] if single else out

    return wrapped


def _phi(t):
    return t * t * np.sin(0.5 * np.pi * t)


def _phi1(t):
    return 2.0 * t * np.sin(0.5 * np.pi * t) + 0.5 * np.pi * t * t * np.cos(0.5 * np.pi * t)


def _phi2(t):
    s, c = np.sin(0.5 * np.pi * t), np.cos(0.5 * np.pi * t)
    return (2.0 - 0.25 * np.pi**2 * t * t) * s + 2.0 * np.pi * t * c


def _phi3(t):
    s, c = np.sin(0.5 * np.pi * t), np.cos(0.5 * np.pi * t)
    return (3.0 * np.pi - 0.125 * np.pi**3 * t * t) * c - 1.5 * np.pi**2 * t * s


def square_case(nu: float = 1.0) -> ProblemCase:
    """Smooth rotational field on (-1,1)^2 built from phi(t) = t^2 sin(pi t/2)."""
    if nu <= 0:
        raise ValueError("nu must be positive")

    @_vectorised
    def u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack([_phi(x) * _phi1(y), -_phi1(x) * _phi(y)])

    @_vectorised
    def curl(pts):
        x, y = pts[:, 0], pts[:, 1]
        return -(_phi2(x) * _phi(y) + _phi(x) * _phi2(y))

    @_vectorised
    def f(pts):
        # f = nu * vector-curl of the scalar curl, so div f = 0 identically
        x, y = pts[:, 0], pts[:, 1]
        dcdx = -(_phi3(x) * _phi(y) + _phi1(x) * _phi2(y))
        dcdy = -(_phi2(x) * _phi1(y) + _phi(x) * _phi3(y))
        return nu * np.column_stack([dcdy, -dcdx])

    return ProblemCase("square", nu, u, curl, f, u)


def _corner_gradient(n: int):
    """Gradient of r^(2n/3) sin(2n theta/3) with theta measured from the
    positive x-axis into [0, 3*pi/2]."""
    k = 2.0 * n / 3.0

    @_vectorised
    def u(pts):
        x, y = pts[:, 0], pts[:, 1]
        r = np.hypot(x, y)
        theta = np.arctan2(y, x)
        theta = np.where(theta < 0.0, theta + 2.0 * np.pi, theta)
        out = np.empty((len(r), 2))
        at_origin = r < 1e-14
        if at_origin.any():
            if n == 1:
                raise SingularPointError("field is unbounded at the corner")
            out[at_origin] = 0.0
        ok = ~at_origin
        rad = k * r[ok] ** (k - 1.0)
        ang = (k - 1.0) * theta[ok]
        out[ok, 0] = rad * np.sin(ang)
        out[ok, 1] = rad * np.cos(ang)
        return out

    return u


def lshape_case(n: int, nu: float = 1.0) -> ProblemCase:
    """Curl-free corner singularity on the L-domain; smoothness grows with n."""
    if n not in (1, 2, 4):
        raise ValueError("n must be one of 1, 2, 4")
    if nu <= 0:
        raise ValueError("nu must be positive")
    u = _corner_gradient(n)

    @_vectorised
    def zero_scalar(pts):
        return np.zeros(pts.shape[0])

    @_vectorised
    def zero_vector(pts):
        return np.zeros((pts.shape[0], 2))

    return ProblemCase("lshape", nu, u, zero_scalar, zero_vector, u, singularity_n=n)


def curved_l_case(n: int, nu: float = 1.0) -> ProblemCase:
    """Same fields as the L-domain case, posed on the curved-L domain."""
    base = lshape_case(n, nu)
    return ProblemCase(
        "curved-l",
        nu,
        base.exact_u,
        base.exact_curl_u,
        base.source_f,
        base.dirichlet_u,
        singularity_n=n,
    )
