"""Parameter-dependent operator and right-hand-side families.

``A(mu) = sum_q theta_q(mu) A_q`` and ``f(mu) = sum_r phi_r(mu) f_r`` with
coefficient functions given as registered Python callables.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .sparse import CSRMatrix, load_vector, read_mtx, save_vector, spmv, write_mtx
from .work import record

__all__ = [
    "ParameterDomain",
    "ParameterDomainWarning",
    "AffineOperator",
    "AffineRhs",
    "COEFFICIENTS",
    "register_coefficient",
    "coefficient_id",
    "assemble_matrix",
    "apply_matrix",
    "assemble_rhs",
    "save_manifest",
    "load_manifest",
]

Coefficient = Callable[[np.ndarray], float]


class ParameterDomainWarning(UserWarning):
    """A parameter lies outside the declared box domain."""


@dataclass(frozen=True)
class ParameterDomain:
    """Axis-aligned box in R^P."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("domain bounds must be nonempty and of equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, mu) -> bool:
        mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
        return mu.shape == (self.dim,) and bool(
            np.all(mu >= np.array(self.lower)) and np.all(mu <= np.array(self.upper))
        )

    def check(self, mu) -> np.ndarray:
        mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
        if mu.shape != (self.dim,):
            raise ValueError(f"parameter has {mu.size} components, domain expects {self.dim}")
        if not self.contains(mu):
            warnings.warn(
                f"parameter {mu.tolist()} outside domain {list(self.lower)}..{list(self.upper)}",
                ParameterDomainWarning,
                stacklevel=3,
            )
        return mu

    def sample(self, n: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
        """Uniform random sample, shape (n, P)."""
        rng = np.random.default_rng(seed)
        lo, hi = np.array(self.lower), np.array(self.upper)
        return lo + (hi - lo) * rng.random((n, self.dim))

    def grid(self, n_per_axis: int) -> np.ndarray:
        """Tensor grid including the corners, shape (n_per_axis**P, P)."""
        axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


# -- coefficient registry -------------------------------------------------

COEFFICIENTS: dict[str, Coefficient] = {}


def register_coefficient(name: str):
    def deco(fn):
        if name in COEFFICIENTS:
            raise ValueError(f"coefficient {name!r} already registered")
        COEFFICIENTS[name] = fn
        fn.coefficient_id = name
        return fn

    return deco


def coefficient_id(fn: Coefficient) -> str:
    try:
        return fn.coefficient_id
    except AttributeError:
        raise ValueError(f"{fn!r} is not a registered coefficient function") from None


@register_coefficient("one")
def _one(mu):
    return 1.0


@register_coefficient("zero")
def _zero(mu):
    return 0.0


@register_coefficient("mu0")
def _mu0(mu):
    return float(mu[0])


@register_coefficient("mu1")
def _mu1(mu):
    return float(mu[1])


@register_coefficient("one_minus_mu1")
def _one_minus_mu1(mu):
    return 1.0 - float(mu[1])


@register_coefficient("mu0_times_one_minus_mu1")
def _mu0_one_minus_mu1(mu):
    return float(mu[0]) * (1.0 - float(mu[1]))


@register_coefficient("mu0_times_mu1")
def _mu0_mu1(mu):
    return float(mu[0]) * float(mu[1])


# -- families -------------------------------------------------------------


def _union_values(matrices: Sequence[CSRMatrix]):
    """Common pattern and per-term value arrays on it."""
    first = matrices[0]
    same = all(
        np.array_equal(m.row_offsets, first.row_offsets) and np.array_equal(m.col_indices, first.col_indices)
        for m in matrices[1:]
    )
    if same:
        return first, np.stack([m.values for m in matrices])
    ones = [
        sp.csr_matrix((np.ones(m.nnz), m.col_indices, m.row_offsets), shape=m.shape) for m in matrices
    ]
    pattern = sum(ones[1:], ones[0]).tocsr()
    pattern.sort_indices()
    base = CSRMatrix(pattern.indptr, pattern.indices, np.zeros(pattern.nnz), pattern.shape, check=False)
    vals = []
    for m in matrices:
        s = m.to_scipy().tocoo()
        # locate each stored entry in the union pattern
        pos = np.empty(s.nnz, dtype=np.int64)
        for k, (i, j) in enumerate(zip(s.row, s.col)):
            lo, hi = base.row_offsets[i], base.row_offsets[i + 1]
            pos[k] = lo + np.searchsorted(base.col_indices[lo:hi], j)
        v = np.zeros(base.nnz)
        v[pos] = s.data
        vals.append(v)
    return base, np.stack(vals)


@dataclass(frozen=True, eq=False)
class AffineOperator:
    """Matrix family ``sum_q theta_q(mu) A_q``."""

    matrices: tuple[CSRMatrix, ...]
    thetas: tuple[Coefficient, ...]
    domain: ParameterDomain | None = None
    _pattern: CSRMatrix = field(init=False, repr=False)
    _values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "matrices", tuple(self.matrices))
        object.__setattr__(self, "thetas", tuple(self.thetas))
        if not self.matrices or len(self.matrices) != len(self.thetas):
            raise ValueError("need one coefficient function per matrix, and at least one term")
        n = self.matrices[0].n_rows
        for m in self.matrices:
            if m.shape != (n, n):
                raise ValueError("all affine terms must be square with the same size")
        pattern, values = _union_values(self.matrices)
        values.flags.writeable = False
        object.__setattr__(self, "_pattern", pattern)
        object.__setattr__(self, "_values", values)

    @property
    def Q(self) -> int:
        return len(self.matrices)

    @property
    def size(self) -> int:
        return self.matrices[0].n_rows

    @property
    def symmetric(self) -> bool:
        return all(m.symmetric for m in self.matrices)

    def coefficients(self, mu) -> np.ndarray:
        if self.domain is not None:
            mu = self.domain.check(mu)
        return np.array([float(t(mu)) for t in self.thetas])


@dataclass(frozen=True, eq=False)
class AffineRhs:
    """Vector family ``sum_r phi_r(mu) f_r``."""

    vectors: tuple[np.ndarray, ...]
    phis: tuple[Coefficient, ...]
    domain: ParameterDomain | None = None

    def __post_init__(self):
        vecs = tuple(np.asarray(v, dtype=np.float64) for v in self.vectors)
        for v in vecs:
            v.flags.writeable = False
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "phis", tuple(self.phis))
        if not vecs or len(vecs) != len(self.phis):
            raise ValueError("need one coefficient function per vector, and at least one term")
        if any(v.shape != vecs[0].shape or v.ndim != 1 for v in vecs):
            raise ValueError("all right-hand-side terms must be vectors of equal length")

    @property
    def R(self) -> int:
        return len(self.vectors)

    @property
    def size(self) -> int:
        return self.vectors[0].size

    def coefficients(self, mu) -> np.ndarray:
        if self.domain is not None:
            mu = self.domain.check(mu)
        return np.array([float(p(mu)) for p in self.phis])


def assemble_matrix(op: AffineOperator, mu) -> CSRMatrix:
    """Materialize ``A(mu)`` on the union sparsity pattern."""
    theta = op.coefficients(mu)
    values = theta[0] * op._values[0]
    for q in range(1, op.Q):
        values = values + theta[q] * op._values[q]
    record(full_flops=2 * op.Q * values.size)
    return op._pattern.with_values(values, symmetric=op.symmetric)


def apply_matrix(op: AffineOperator, mu, x) -> np.ndarray:
    """Return ``A(mu) @ x`` term by term without materializing ``A(mu)``."""
    theta = op.coefficients(mu)
    out = theta[0] * spmv(op.matrices[0], x)
    for q in range(1, op.Q):
        out += theta[q] * spmv(op.matrices[q], x)
    record(full_flops=2 * op.Q * out.size)
    return out


def assemble_rhs(rhs: AffineRhs, mu) -> np.ndarray:
    phi = rhs.coefficients(mu)
    out = phi[0] * rhs.vectors[0]
    for r in range(1, rhs.R):
        out = out + phi[r] * rhs.vectors[r]
    record(full_flops=2 * rhs.R * out.size)
    return out


# -- manifest -------------------------------------------------------------


def save_manifest(directory, op: AffineOperator, rhs: AffineRhs, name: str = "family", meta=None) -> Path:
    """Write ``A_q`` as .mtx, ``f_r`` as binary vectors and a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = {
        "name": name,
        "size": op.size,
        "Q": op.Q,
        "R": rhs.R,
        "theta": [coefficient_id(t) for t in op.thetas],
        "phi": [coefficient_id(p) for p in rhs.phis],
        "matrices": [],
        "vectors": [],
        "domain": None if op.domain is None else {"lower": list(op.domain.lower), "upper": list(op.domain.upper)},
        "meta": meta or {},
    }
    for q, m in enumerate(op.matrices):
        fname = f"{name}_A{q + 1}.mtx"
        write_mtx(directory / fname, m)
        doc["matrices"].append(fname)
    for r, v in enumerate(rhs.vectors):
        fname = f"{name}_f{r + 1}.bin"
        save_vector(directory / fname, v, binary=True)
        doc["vectors"].append(fname)
    path = directory / f"{name}.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


def load_manifest(path) -> tuple[AffineOperator, AffineRhs, dict]:
    path = Path(path)
    doc = json.loads(path.read_text())
    if len(doc["matrices"]) != doc["Q"] or len(doc["vectors"]) != doc["R"]:
        raise ValueError("manifest term counts do not match file lists")
    try:
        thetas = [COEFFICIENTS[k] for k in doc["theta"]]
        phis = [COEFFICIENTS[k] for k in doc["phi"]]
    except KeyError as e:
        raise ValueError(f"unknown coefficient function {e.args[0]!r}") from None
    domain = None
    if doc.get("domain"):
        domain = ParameterDomain(tuple(doc["domain"]["lower"]), tuple(doc["domain"]["upper"]))
    mats = [read_mtx(path.parent / f) for f in doc["matrices"]]
    vecs = [load_vector(path.parent / f, binary=True) for f in doc["vectors"]]
    return AffineOperator(mats, thetas, domain), AffineRhs(vecs, phis, domain), doc.get("meta", {})
