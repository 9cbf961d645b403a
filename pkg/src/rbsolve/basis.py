"""Reduced basis: orthonormal snapshot block plus projected affine terms.

The projected blocks ``A_{N,q} = W^T A_q W`` and ``f_{N,r} = W^T f_r`` are
grown one row/column at a time as snapshots are appended, so the leading
blocks of a larger basis are bitwise those of any of its prefixes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .affine import COEFFICIENTS, AffineOperator, AffineRhs, ParameterDomain, coefficient_id
from .sparse import NotPositiveDefiniteError, cholesky_factor, cholesky_solve, mgs_append, spmv
from .work import record

__all__ = [
    "ReducedBasis",
    "RbSolution",
    "ReducedMatrixError",
    "extend",
    "online_assemble",
    "rb_solve",
    "lift",
    "restrict",
    "save_basis",
    "load_basis",
]


class ReducedMatrixError(np.linalg.LinAlgError):
    """The reduced matrix failed its Cholesky factorization."""


@dataclass(frozen=True, eq=False)
class ReducedBasis:
    W: np.ndarray
    blocks: np.ndarray  # (Q, N, N)
    rhs_blocks: np.ndarray  # (R, N)
    thetas: tuple
    phis: tuple
    domain: ParameterDomain | None = None
    samples: tuple = ()
    n_rejected: int = 0
    case_id: str = ""
    grid_id: str = ""
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, op: AffineOperator, rhs: AffineRhs, **kw) -> "ReducedBasis":
        if op.size != rhs.size:
            raise ValueError("operator and right-hand side sizes differ")
        return cls(
            W=np.zeros((op.size, 0), order="F"),
            blocks=np.zeros((op.Q, 0, 0)),
            rhs_blocks=np.zeros((rhs.R, 0)),
            thetas=op.thetas,
            phis=rhs.phis,
            domain=op.domain,
            **kw,
        )

    @property
    def N(self) -> int:
        return self.W.shape[1]

    @property
    def size(self) -> int:
        return self.W.shape[0]

    @property
    def Q(self) -> int:
        return self.blocks.shape[0]

    @property
    def R(self) -> int:
        return self.rhs_blocks.shape[0]

    def prefix(self, n: int) -> "ReducedBasis":
        """Basis made of the first ``n`` columns (shares memory)."""
        if not 0 <= n <= self.N:
            raise ValueError(f"prefix {n} outside 0..{self.N}")
        return replace(
            self, W=self.W[:, :n], blocks=self.blocks[:, :n, :n], rhs_blocks=self.rhs_blocks[:, :n]
        )

    def sample_array(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, 0 if self.domain is None else self.domain.dim))
        return np.array([np.atleast_1d(s) for s in self.samples], dtype=np.float64)


@dataclass(frozen=True)
class RbSolution:
    coefficients: np.ndarray
    mu: np.ndarray


def extend(basis: ReducedBasis, snapshot, op: AffineOperator, rhs: AffineRhs, mu=None, drop_tol=1e-10):
    """Append an orthonormalized snapshot and grow the projected blocks.

    Returns
    -------
    (ReducedBasis, bool)
        The extended basis and True, or the unchanged basis (with ``mu``
        still logged in ``samples``) and False if the snapshot was dependent.
    """
    snapshot = np.asarray(snapshot, dtype=np.float64)
    if snapshot.shape != (basis.size,):
        raise ValueError(f"snapshot has shape {snapshot.shape}, expected ({basis.size},)")
    samples = basis.samples if mu is None else basis.samples + (np.atleast_1d(np.asarray(mu, float)).copy(),)
    W = mgs_append(basis.W, snapshot, drop_tol)
    if W is None:
        return replace(basis, samples=samples, n_rejected=basis.n_rejected + 1), False

    N = basis.N
    w = W[:, N]
    blocks = np.zeros((op.Q, N + 1, N + 1))
    blocks[:, :N, :N] = basis.blocks
    for q, Aq in enumerate(op.matrices):
        u = spmv(Aq, w)
        col = W[:, :N].T @ u
        blocks[q, :N, N] = col
        blocks[q, N, :N] = col
        blocks[q, N, N] = w @ u
    rhs_blocks = np.zeros((rhs.R, N + 1))
    rhs_blocks[:, :N] = basis.rhs_blocks
    for r, fr in enumerate(rhs.vectors):
        rhs_blocks[r, N] = w @ fr
    record(full_flops=2 * basis.size * (op.Q * (N + 1) + rhs.R))
    return replace(basis, W=W, blocks=blocks, rhs_blocks=rhs_blocks, samples=samples), True


def online_assemble(basis: ReducedBasis, mu, n: int | None = None):
    """Reduced matrix and vector at ``mu``; no work proportional to 𝒩.

    ``n`` selects the leading ``n x n`` blocks (default: the whole basis).
    """
    n = basis.N if n is None else n
    if basis.domain is not None:
        mu = basis.domain.check(mu)
    theta = [float(t(mu)) for t in basis.thetas]
    phi = [float(p(mu)) for p in basis.phis]
    AN = np.zeros((n, n))
    for q in range(basis.Q):
        AN += theta[q] * basis.blocks[q, :n, :n]
    fN = np.zeros(n)
    for r in range(basis.R):
        fN += phi[r] * basis.rhs_blocks[r, :n]
    record(reduced_flops=2 * basis.Q * n * n + 2 * basis.R * n)
    return AN, fN


def factor_reduced(AN):
    try:
        return cholesky_factor(AN)
    except NotPositiveDefiniteError as e:
        raise ReducedMatrixError(f"reduced matrix not SPD (pivot {e.pivot})") from e


def rb_solve(basis: ReducedBasis, mu, reduced_rhs, n: int | None = None) -> RbSolution:
    """Solve the Galerkin system ``A_N(mu) a = reduced_rhs`` by dense Cholesky."""
    reduced_rhs = np.asarray(reduced_rhs, dtype=np.float64)
    n = reduced_rhs.size if n is None else n
    AN, _ = online_assemble(basis, mu, n)
    a = cholesky_solve(factor_reduced(AN), reduced_rhs)
    if not np.all(np.isfinite(a)):
        raise ReducedMatrixError("non-finite reduced solution")
    return RbSolution(a, np.atleast_1d(np.asarray(mu, dtype=np.float64)))


def lift(basis: ReducedBasis, a) -> np.ndarray:
    """``W a`` using the first ``len(a)`` columns."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.size > basis.N:
        raise ValueError(f"coefficient vector of length {a.size} for basis of dimension {basis.N}")
    record(full_flops=2 * basis.size * a.size)
    if a.size == 0:
        return np.zeros(basis.size)
    return basis.W[:, : a.size] @ a


def restrict(basis: ReducedBasis, v, n: int | None = None) -> np.ndarray:
    """``W^T v`` using the first ``n`` columns."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (basis.size,):
        raise ValueError(f"vector has shape {v.shape}, expected ({basis.size},)")
    n = basis.N if n is None else n
    record(full_flops=2 * basis.size * n)
    if n == 0:
        return np.zeros(0)
    return basis.W[:, :n].T @ v


# -- checkpoint -----------------------------------------------------------

_MAGIC = b"RBBASIS1"


def save_basis(path, basis: ReducedBasis) -> None:
    """Binary checkpoint: magic, JSON header, then little-endian float64 arrays."""
    samples = basis.sample_array()
    header = {
        "size": basis.size,
        "N": basis.N,
        "Q": basis.Q,
        "R": basis.R,
        "case_id": basis.case_id,
        "grid_id": basis.grid_id,
        "theta": [coefficient_id(t) for t in basis.thetas],
        "phi": [coefficient_id(p) for p in basis.phis],
        "domain": None if basis.domain is None else [list(basis.domain.lower), list(basis.domain.upper)],
        "n_samples": samples.shape[0],
        "param_dim": samples.shape[1] if samples.size else (basis.domain.dim if basis.domain else 0),
        "n_rejected": basis.n_rejected,
        "meta": basis.meta,
    }
    raw = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for arr in (basis.W.T, basis.blocks, basis.rhs_blocks, samples):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_basis(path) -> ReducedBasis:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path}: not a basis checkpoint")
    (hlen,) = struct.unpack("<I", data[8:12])
    h = json.loads(data[12 : 12 + hlen])
    payload = np.frombuffer(data[12 + hlen :], dtype="<f8").astype(np.float64)
    n, N, Q, R = h["size"], h["N"], h["Q"], h["R"]
    ns, P = h["n_samples"], h["param_dim"]
    sizes = [n * N, Q * N * N, R * N, ns * P]
    if payload.size != sum(sizes):
        raise ValueError(f"{path}: payload size does not match header")
    parts = np.split(payload, np.cumsum(sizes)[:-1])
    W = np.asfortranarray(parts[0].reshape(N, n).T)
    domain = ParameterDomain(tuple(h["domain"][0]), tuple(h["domain"][1])) if h["domain"] else None
    samples = tuple(row.copy() for row in parts[3].reshape(ns, P))
    return ReducedBasis(
        W=W,
        blocks=parts[1].reshape(Q, N, N).copy(),
        rhs_blocks=parts[2].reshape(R, N).copy(),
        thetas=tuple(COEFFICIENTS[k] for k in h["theta"]),
        phis=tuple(COEFFICIENTS[k] for k in h["phi"]),
        domain=domain,
        samples=samples,
        n_rejected=h["n_rejected"],
        case_id=h["case_id"],
        grid_id=h["grid_id"],
        meta=h.get("meta", {}),
    )
