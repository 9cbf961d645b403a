"""Stationary smoothers: damped Jacobi and Gauss-Seidel sweeps over CSR rows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .sparse import CSRMatrix
from .work import record

__all__ = ["SmootherSpec", "smooth", "KINDS"]

KINDS = ("jacobi", "gauss_seidel_forward", "gauss_seidel_backward", "gauss_seidel_symmetric")
_ALIASES = {
    "gs": "gauss_seidel_forward",
    "forward": "gauss_seidel_forward",
    "backward": "gauss_seidel_backward",
    "sgs": "gauss_seidel_symmetric",
    "symmetric": "gauss_seidel_symmetric",
}


@dataclass(frozen=True)
class SmootherSpec:
    """Smoother selection.

    ``sweeps=0`` turns smoothing off entirely; it exists for diagnostics
    (the stagnation experiment) and is never a sensible solver setting.
    """

    kind: str = "gauss_seidel_symmetric"
    sweeps: int = 1
    omega: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", _ALIASES.get(self.kind, self.kind))
        if self.kind not in KINDS:
            raise ValueError(f"unknown smoother {self.kind!r}; choose from {KINDS}")
        if self.sweeps < 0:
            raise ValueError("sweeps must be nonnegative")
        if not 0.0 < self.omega < 2.0:
            raise ValueError("damping omega must lie in (0, 2)")

    @property
    def symmetric(self) -> bool:
        return self.kind in ("jacobi", "gauss_seidel_symmetric")


def _diagonal(A: CSRMatrix) -> np.ndarray:
    d = A.diagonal()
    bad = np.flatnonzero(d == 0.0)
    if bad.size:
        raise ZeroDivisionError(f"zero diagonal entry in row {bad[0]}")
    return d


def smooth(spec: SmootherSpec, A: CSRMatrix, b, y) -> np.ndarray:
    """Apply ``spec.sweeps`` smoothing sweeps to ``A x = b`` starting from ``y``.

    Returns a new array; ``y`` is left untouched.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.array(y, dtype=np.float64)
    if A.n_rows != A.n_cols or b.shape != (A.n_rows,) or x.shape != (A.n_rows,):
        raise ValueError("smoother dimensions do not match")
    if spec.sweeps == 0:
        return x
    d = _diagonal(A)
    ptr, idx, val = A.row_offsets, A.col_indices, A.values
    kind = spec.kind
    if kind == "jacobi":
        tmp = np.empty_like(x)
        for _ in range(spec.sweeps):
            _kernels.jacobi_sweep(ptr, idx, val, d, b, x, spec.omega, tmp)
            x, tmp = tmp, x
        flops = 2 * A.nnz + 4 * A.n_rows
    else:
        for _ in range(spec.sweeps):
            if kind != "gauss_seidel_backward":
                _kernels.gs_forward(ptr, idx, val, d, b, x)
            if kind != "gauss_seidel_forward":
                _kernels.gs_backward(ptr, idx, val, d, b, x)
        flops = 2 * A.nnz * (2 if kind == "gauss_seidel_symmetric" else 1)
    record(sweeps=spec.sweeps, sweep_flops=flops * spec.sweeps)
    return x
