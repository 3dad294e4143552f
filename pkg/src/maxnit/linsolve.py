"""Direct sparse solve of the assembled symmetric indefinite system."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import LinearSystem

__all__ = ["SolutionFields", "SingularSystemError", "ResidualError", "solve"]


class SingularSystemError(RuntimeError):
    pass


class ResidualError(RuntimeError):
    pass


@dataclass
class SolutionFields:
    """Full-length nodal coefficient vector with per-vertex accessors."""

    coeffs: np.ndarray
    n_vertices: int
    residual: float

    def u_at(self, vertex: int) -> np.ndarray:
        return self.coeffs[3 * vertex : 3 * vertex + 2]

    def p_at(self, vertex: int) -> float:
        return float(self.coeffs[3 * vertex + 2])

    @property
    def u(self) -> np.ndarray:
        return self.coeffs.reshape(-1, 3)[:, :2]

    @property
    def p(self) -> np.ndarray:
        return self.coeffs.reshape(-1, 3)[:, 2]


def solve(
    system: LinearSystem,
    tol: float = 1e-10,
    refine_tol: float = 1e-12,
    max_refine: int = 3,
) -> SolutionFields:
    """LU factorisation with fill-reducing ordering plus iterative refinement.

    Raises SingularSystemError when the factorisation breaks down or yields
    non-finite values, ResidualError when refinement cannot reach `tol`.
    """
    a = system.matrix.tocsc()
    b = system.rhs
    try:
        lu = spla.splu(a)
    except RuntimeError as exc:
        raise SingularSystemError(f"factorisation failed: {exc}") from exc
    pivots = np.abs(lu.U.diagonal())
    if pivots.min() <= 1e-14 * pivots.max():
        raise SingularSystemError(
            "numerically singular system (degenerate pivot); "
            "check stabilisation and penalty constants"
        )
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("factorisation produced non-finite values")

    scale = np.linalg.norm(b)
    ref = scale if scale > 0.0 else 1.0
    res = np.linalg.norm(b - a @ x) / ref
    for _ in range(max_refine):
        if res <= refine_tol:
            break
        dx = lu.solve(b - a @ x)
        if not np.all(np.isfinite(dx)):
            break
        x = x + dx
        res = np.linalg.norm(b - a @ x) / ref
    if res > tol:
        raise ResidualError(f"relative residual {res:.3e} above {tol:.1e}")

    if system.transform is not None:
        full = system.transform @ x + system.offset
    else:
        full = x
    return SolutionFields(full, system.dofmap.n_vertices, float(res))
