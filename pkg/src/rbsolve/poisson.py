"""Variable-coefficient Poisson benchmarks on the unit cube.

``-div(kappa grad u) = 3 pi^2 sin(pi x) sin(pi y) sin(pi z)`` with Dirichlet
data, discretized by the 7-point finite-volume stencil on a uniform grid with
``n = 2**level`` cells per axis. Face coefficients are the arithmetic mean
of the nodal values at the two endpoints, so the matrix depends linearly on
``kappa`` and the affine split is exact. Unknowns are the ``(n-1)**3``
interior nodes, ordered with x fastest, then y, then z.

Case 1: ``kappa = 1 + mu ((x-1/2)^2 + (y-1/2)^2 + (z-1/2)^2)``, ``g = 0``.
Case 2: ``kappa = 1 + mu_1 sin^2(20 pi (4(x-1/2)^2 + (y-1/2)^2 + (z-1/2)^2))``,
``g = (1-mu_2) cos(10 pi (4(x-1/2)^2 + (y-1/2)^2 + (z-1/2)^2)) + mu_2 cos(10 pi (x+y+z))``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .affine import COEFFICIENTS, AffineOperator, AffineRhs, ParameterDomain
from .sparse import CSRMatrix

__all__ = [
    "GridProblem",
    "DOMAINS",
    "coefficient_sample",
    "source",
    "boundary_profiles",
    "assemble_case1",
    "assemble_case2",
    "assemble_case",
    "assemble_scratch",
    "prolongation",
    "build_hierarchy",
    "interior_coordinates",
]

log = logging.getLogger(__name__)

DOMAINS = {
    "case1": ParameterDomain((0.0,), (1.0,)),
    "case2": ParameterDomain((0.0, 0.0), (2.0, 1.0)),
}


def normalize_case(case) -> str:
    key = str(case).lower()
    key = {"1": "case1", "2": "case2"}.get(key, key)
    if key not in DOMAINS:
        raise ValueError(f"unknown benchmark case {case!r}")
    return key


def _radius2(x, y, z):
    return (x - 0.5) ** 2 + (y - 0.5) ** 2 + (z - 0.5) ** 2


def _oscillation(x, y, z):
    return np.sin(20 * np.pi * (4 * (x - 0.5) ** 2 + (y - 0.5) ** 2 + (z - 0.5) ** 2)) ** 2


def _kappa_variation(case, x, y, z):
    """Field multiplying the first parameter in ``kappa``."""
    return _radius2(x, y, z) if case == "case1" else _oscillation(x, y, z)


def coefficient_sample(case, x, y, z, mu):
    """Diffusion coefficient ``kappa(x, y, z; mu)``; works on arrays."""
    case = normalize_case(case)
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    return 1.0 + mu[0] * _kappa_variation(case, x, y, z)


def source(x, y, z):
    return 3 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z)


def boundary_profiles(x, y, z):
    """The two Case 2 boundary profiles ``(g_a, g_b)``."""
    ga = np.cos(10 * np.pi * (4 * (x - 0.5) ** 2 + (y - 0.5) ** 2 + (z - 0.5) ** 2))
    gb = np.cos(10 * np.pi * (x + y + z))
    return ga, gb


def _node_grid(n):
    c = np.arange(n + 1) / n
    # arrays indexed [z, y, x] so that C-order flattening runs x fastest
    Z, Y, X = np.meshgrid(c, c, c, indexing="ij")
    return X, Y, Z


def interior_coordinates(level: int):
    """Coordinates ``(x, y, z)`` of the unknowns, each of shape ((n-1)**3,)."""
    n = 2**level
    X, Y, Z = _node_grid(n)
    s = slice(1, n)
    return X[s, s, s].ravel(), Y[s, s, s].ravel(), Z[s, s, s].ravel()


@dataclass(frozen=True)
class _Stencil:
    matrix: CSRMatrix
    bnd_rows: np.ndarray
    bnd_nodes: np.ndarray
    bnd_weights: np.ndarray

    def lifting(self, g_nodes):
        """Contribution of boundary values to the right-hand side."""
        g = np.asarray(g_nodes).ravel()[self.bnd_nodes]
        return np.bincount(self.bnd_rows, weights=self.bnd_weights * g, minlength=self.matrix.n_rows)


# slot order gives ascending column index: -z, -y, -x, centre, +x, +y, +z
_OFFSETS = ((-1, 0, 0), (0, -1, 0), (0, 0, -1), None, (0, 0, 1), (0, 1, 0), (1, 0, 0))


def _assemble_stencil(n: int, K: np.ndarray) -> _Stencil:
    """7-point operator for nodal coefficient ``K`` (shape (n+1,)*3, [z,y,x])."""
    m = n - 1
    size = m**3
    scale = float(n * n)
    kk, jj, ii = np.meshgrid(np.arange(1, n), np.arange(1, n), np.arange(1, n), indexing="ij")
    kk, jj, ii = kk.ravel(), jj.ravel(), ii.ravel()
    rows = np.arange(size)
    Kc = K[kk, jj, ii]
    cols = np.zeros((size, 7), dtype=np.int64)
    vals = np.zeros((size, 7))
    mask = np.zeros((size, 7), dtype=bool)
    diag = np.zeros(size)
    b_rows, b_nodes, b_w = [], [], []
    stride = {0: m * m, 1: m, 2: 1}
    for s, off in enumerate(_OFFSETS):
        if off is None:
            continue
        nk, nj, ni = kk + off[0], jj + off[1], ii + off[2]
        face = 0.5 * (Kc + K[nk, nj, ni]) * scale
        diag += face
        inside = (nk >= 1) & (nk <= m) & (nj >= 1) & (nj <= m) & (ni >= 1) & (ni <= m)
        axis = next(a for a in range(3) if off[a] != 0)
        cols[:, s] = rows + off[axis] * stride[axis]
        vals[:, s] = -face
        mask[:, s] = inside
        out = ~inside
        b_rows.append(rows[out])
        b_nodes.append(np.ravel_multi_index((nk[out], nj[out], ni[out]), K.shape))
        b_w.append(face[out])
    cols[:, 3] = rows
    vals[:, 3] = diag
    mask[:, 3] = True
    counts = mask.sum(axis=1)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    A = CSRMatrix(indptr, cols[mask], vals[mask], (size, size), symmetric=True)
    return _Stencil(A, np.concatenate(b_rows), np.concatenate(b_nodes), np.concatenate(b_w))


@dataclass(frozen=True, eq=False)
class GridProblem:
    """One benchmark family on one grid level."""

    case: str
    level: int
    op: AffineOperator
    rhs: AffineRhs
    domain: ParameterDomain

    @property
    def n(self) -> int:
        return 2**self.level

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        return (self.n - 1) ** 3

    @property
    def grid_id(self) -> str:
        return f"unitcube-level{self.level}"

    def coordinates(self):
        return interior_coordinates(self.level)


def _check_level(level, minimum=2):
    if int(level) != level or level < minimum:
        raise ValueError(f"grid level must be an integer >= {minimum}, got {level}")


def assemble_case1(level: int, domain: ParameterDomain | None = None) -> GridProblem:
    _check_level(level)
    n = 2**level
    X, Y, Z = _node_grid(n)
    A1 = _assemble_stencil(n, np.ones_like(X)).matrix
    A2 = _assemble_stencil(n, _radius2(X, Y, Z)).matrix
    x, y, z = interior_coordinates(level)
    domain = domain or DOMAINS["case1"]
    op = AffineOperator([A1, A2], [COEFFICIENTS["one"], COEFFICIENTS["mu0"]], domain)
    rhs = AffineRhs([source(x, y, z)], [COEFFICIENTS["one"]], domain)
    return GridProblem("case1", level, op, rhs, domain)


def assemble_case2(level: int, domain: ParameterDomain | None = None) -> GridProblem:
    """Case 2 family; the right-hand side has five affine terms.

    ``f(mu) = f0 + (1-mu2) L1 ga + mu2 L1 gb + mu1 (1-mu2) L2 ga + mu1 mu2 L2 gb``
    where ``Lq g`` is the boundary lifting of profile ``g`` through ``A_q``.
    """
    _check_level(level)
    if level <= 3:
        log.warning("case 2 coefficient is under-resolved on level %d", level)
    n = 2**level
    X, Y, Z = _node_grid(n)
    S1 = _assemble_stencil(n, np.ones_like(X))
    S2 = _assemble_stencil(n, _oscillation(X, Y, Z))
    ga, gb = boundary_profiles(X, Y, Z)
    x, y, z = interior_coordinates(level)
    domain = domain or DOMAINS["case2"]
    c = COEFFICIENTS
    op = AffineOperator([S1.matrix, S2.matrix], [c["one"], c["mu0"]], domain)
    rhs = AffineRhs(
        [source(x, y, z), S1.lifting(ga), S1.lifting(gb), S2.lifting(ga), S2.lifting(gb)],
        [c["one"], c["one_minus_mu1"], c["mu1"], c["mu0_times_one_minus_mu1"], c["mu0_times_mu1"]],
        domain,
    )
    return GridProblem("case2", level, op, rhs, domain)


def assemble_case(case, level: int, domain=None) -> GridProblem:
    case = normalize_case(case)
    return (assemble_case1 if case == "case1" else assemble_case2)(level, domain)


def assemble_scratch(case, level: int, mu):
    """Assemble ``A(mu)`` and ``f(mu)`` directly from the blended coefficient.

    Independent of the affine decomposition; used to validate it.
    """
    case = normalize_case(case)
    _check_level(level)
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    n = 2**level
    X, Y, Z = _node_grid(n)
    st = _assemble_stencil(n, coefficient_sample(case, X, Y, Z, mu))
    x, y, z = interior_coordinates(level)
    b = source(x, y, z)
    if case == "case2":
        ga, gb = boundary_profiles(X, Y, Z)
        b = b + st.lifting((1 - mu[1]) * ga + mu[1] * gb)
    return st.matrix, b


# -- grid transfer --------------------------------------------------------


def _prolongation_1d(fine_level: int) -> sp.csr_matrix:
    n = 2**fine_level
    nc = n // 2
    rows, cols, vals = [], [], []
    for i in range(1, n):
        if i % 2 == 0:
            rows.append(i - 1), cols.append(i // 2 - 1), vals.append(1.0)
        else:
            for I in ((i - 1) // 2, (i + 1) // 2):
                if 1 <= I <= nc - 1:
                    rows.append(i - 1), cols.append(I - 1), vals.append(0.5)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n - 1, nc - 1))


def prolongation(fine_level: int) -> CSRMatrix:
    """Trilinear interpolation from level ``fine_level - 1`` to ``fine_level``."""
    _check_level(fine_level, 3)
    P1 = _prolongation_1d(fine_level)
    return CSRMatrix.from_scipy(sp.kron(P1, sp.kron(P1, P1)).tocsr())


def restriction(fine_level: int) -> CSRMatrix:
    """Full weighting: transpose of :func:`prolongation` scaled by 1/8."""
    P = prolongation(fine_level).to_scipy()
    return CSRMatrix.from_scipy((P.T / 8.0).tocsr())


def build_hierarchy(case, fine_level: int, n_levels: int):
    """Problems on ``n_levels`` nested grids and the transfers between them.

    Returns
    -------
    problems : list of GridProblem
        Ordered fine to coarse; each level is assembled from the PDE
        coefficients directly.
    prolongations, restrictions : list of CSRMatrix
        Entry ``l`` maps between ``problems[l + 1]`` and ``problems[l]``.
    """
    if n_levels < 1 or fine_level - n_levels + 1 < 2:
        raise ValueError("hierarchy must stay at level >= 2")
    levels = [fine_level - l for l in range(n_levels)]
    problems = [assemble_case(case, lv) for lv in levels]
    prolongs = [prolongation(lv) for lv in levels[:-1]]
    restricts = [restriction(lv) for lv in levels[:-1]]
    return problems, prolongs, restricts
