"""Structured Q1 finite elements on the cube (-1,1)^{d-1} x (0,1).

The bottom face x_d = 0 carries the interesting boundary data: in
"mixed" mode it is Dirichlet for x_{d-1} < 0 and Neumann for
x_{d-1} > 0 (all remaining faces Dirichlet), "all-dirichlet" pins the
whole boundary, and "all-neumann-bottom" makes the entire bottom face a
traction boundary.  The grid is uniform with n cells per unit length,
2^d Gauss points per cell, and identical element geometry everywhere,
so shape-function derivatives are computed once.

Quadrature-point tensor fields are ndarrays of shape (ncells, nqp, m)
in Mandel components; displacement fields are (nnodes, d).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from . import tensors

MODES = ("mixed", "all-dirichlet", "all-neumann-bottom")

DIRECT_SOLVE_MAX_N = 32   # direct factorization up to this resolution
CG_RTOL = 1e-11


@dataclass(frozen=True)
class Geometry:
    d: int
    mode: str = "mixed"

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.mode not in MODES:
            raise ValueError(f"unknown boundary mode {self.mode!r}")


class Grid:
    """Uniform Q1 grid with precomputed element operators and boundary tags."""

    def __init__(self, geometry: Geometry, n: int):
        if n < 2:
            raise ValueError("need at least 2 cells per unit length")
        self.geometry = geometry
        self.d = geometry.d
        self.n = n
        self.h = 1.0 / n
        d = self.d

        # node lattice: 2n+1 nodes on each tangential axis, n+1 on the normal
        self.node_counts = tuple([2 * n + 1] * (d - 1) + [n + 1])
        self.cell_counts = tuple([2 * n] * (d - 1) + [n])
        self.nnodes = int(np.prod(self.node_counts))
        self.ncells = int(np.prod(self.cell_counts))
        self.nqp = 2**d
        self.m = tensors.num_components(d)

        axes = [np.linspace(-1.0, 1.0, 2 * n + 1) for _ in range(d - 1)]
        axes.append(np.linspace(0.0, 1.0, n + 1))
        mesh = np.meshgrid(*axes, indexing="ij")
        self.nodes = np.stack([g.ravel() for g in mesh], axis=-1)

        self._offsets = np.array(list(itertools.product((0, 1), repeat=d)))
        cell_idx = np.stack(np.meshgrid(*[np.arange(c) for c in self.cell_counts],
                                        indexing="ij"), axis=-1).reshape(-1, d)
        corner = cell_idx[:, None, :] + self._offsets[None, :, :]
        self.cell_nodes = np.ravel_multi_index(
            tuple(corner[..., j] for j in range(d)), self.node_counts)
        self.cell_dofs = (self.cell_nodes[:, :, None] * d
                          + np.arange(d)[None, None, :]).reshape(self.ncells, -1)

        self._build_quadrature()
        self._build_boundary()

        # COO pattern for tangent assembly
        ndc = self.cell_dofs.shape[1]
        self._rows = np.repeat(self.cell_dofs, ndc, axis=1).ravel()
        self._cols = np.tile(self.cell_dofs, (1, ndc)).ravel()

    # -- element operators -------------------------------------------------

    def _build_quadrature(self):
        d, h = self.d, self.h
        g = 1.0 / np.sqrt(3.0)
        pts = np.array(list(itertools.product((-g, g), repeat=d)))
        signs = 2 * self._offsets - 1                      # corner signs +-1
        nqp, nloc = pts.shape[0], signs.shape[0]

        N = np.ones((nqp, nloc))
        for j in range(d):
            N *= (1.0 + pts[:, None, j] * signs[None, :, j]) / 2.0
        gradN = np.empty((nqp, nloc, d))
        for j in range(d):
            g_ref = signs[None, :, j] / 2.0
            for k in range(d):
                if k != j:
                    g_ref = g_ref * (1.0 + pts[:, None, k] * signs[None, :, k]) / 2.0
            gradN[:, :, j] = g_ref * (2.0 / h)             # reference -> physical
        self.shape_values = N
        self.shape_grads = gradN
        self.qp_weight = (h / 2.0) ** d

        # strain-displacement operator in Mandel components
        B = np.zeros((nqp, self.m, nloc, d))
        for q in range(nqp):
            for a in range(nloc):
                for i in range(d):
                    outer = np.zeros((d, d))
                    outer[i, :] = gradN[q, a, :]
                    B[q, :, a, i] = tensors.from_matrix(0.5 * (outer + outer.T))
        self.B = B

        # physical quadrature coordinates per cell
        origins = self.nodes[self.cell_nodes[:, 0]]
        local = (pts + 1.0) / 2.0 * h
        self.qp_coords = origins[:, None, :] + local[None, :, :]

    # -- boundary ----------------------------------------------------------

    def _build_boundary(self):
        d, mode = self.d, self.geometry.mode
        idx = np.stack(np.unravel_index(np.arange(self.nnodes),
                                        self.node_counts), axis=-1)
        on_boundary = np.zeros(self.nnodes, dtype=bool)
        for j in range(d):
            on_boundary |= (idx[:, j] == 0) | (idx[:, j] == self.node_counts[j] - 1)

        x = self.nodes
        bottom = idx[:, d - 1] == 0
        inner_tangential = np.ones(self.nnodes, dtype=bool)
        for j in range(d - 1):
            inner_tangential &= (np.abs(x[:, j]) < 1.0 - 1e-12)
        if mode == "mixed":
            neumann_open = bottom & inner_tangential & (x[:, d - 2] > 1e-12)
        elif mode == "all-neumann-bottom":
            neumann_open = bottom & inner_tangential
        else:
            neumann_open = np.zeros(self.nnodes, dtype=bool)
        self.dirichlet_nodes = on_boundary & ~neumann_open
        self.neumann_nodes = neumann_open
        self.dirichlet_dofs = np.repeat(self.dirichlet_nodes, d)
        self.free_dofs = np.flatnonzero(~self.dirichlet_dofs)

        # Neumann faces: bottom faces of first-layer cells
        cell_idx = np.stack(np.unravel_index(np.arange(self.ncells),
                                             self.cell_counts), axis=-1)
        bottom_cells = np.flatnonzero(cell_idx[:, d - 1] == 0)
        if mode == "mixed":
            lo = self.nodes[self.cell_nodes[bottom_cells, 0], d - 2]
            bottom_cells = bottom_cells[lo >= -1e-12]
        elif mode == "all-dirichlet":
            bottom_cells = bottom_cells[:0]
        self.neumann_cells = bottom_cells

        # face quadrature: full shape functions evaluated at (xi', -1)
        g = 1.0 / np.sqrt(3.0)
        tpts = np.array(list(itertools.product((-g, g), repeat=d - 1)))
        face_pts = np.concatenate([tpts, -np.ones((tpts.shape[0], 1))], axis=1)
        signs = 2 * self._offsets - 1
        Nf = np.ones((face_pts.shape[0], signs.shape[0]))
        for j in range(d):
            Nf *= (1.0 + face_pts[:, None, j] * signs[None, :, j]) / 2.0
        self.face_shape_values = Nf
        self.face_qp_weight = (self.h / 2.0) ** (d - 1)
        origins = self.nodes[self.cell_nodes[bottom_cells, 0]]
        local = (face_pts + 1.0) / 2.0 * self.h
        self.face_qp_coords = origins[:, None, :] + local[None, :, :]
        self.face_normal = np.zeros(d)
        self.face_normal[d - 1] = -1.0

    # -- fields ------------------------------------------------------------

    def interpolate_nodal(self, fn, t=None) -> np.ndarray:
        """Sample a callable fn(x) or fn(t, x) at the nodes."""
        return fn(self.nodes) if t is None else fn(t, self.nodes)

    def sym_gradient(self, u: np.ndarray) -> np.ndarray:
        """Symmetric gradient of a nodal field, Mandel (ncells, nqp, m)."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.nnodes, self.d):
            raise ValueError(f"displacement shape {u.shape} does not match grid")
        u_cells = u[self.cell_nodes]
        return np.einsum("qmai,cai->cqm", self.B, u_cells, optimize=True)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Full gradient du_i/dx_j of a nodal field, (ncells, nqp, d, d)."""
        u_cells = u[self.cell_nodes]
        return np.einsum("qaj,cai->cqij", self.shape_grads, u_cells,
                         optimize=True)

    def qp_field_grid(self, qp_field: np.ndarray) -> np.ndarray:
        """Reshape (ncells, nqp, ...) to structured (c1, ..., cd, nqp, ...)."""
        return qp_field.reshape(self.cell_counts + qp_field.shape[1:])

    def integrate_qp(self, qp_scalar: np.ndarray) -> float:
        """Integral over the domain of a scalar quadrature-point field."""
        return float(qp_scalar.sum() * self.qp_weight)

    # -- assembly ----------------------------------------------------------

    def internal_force(self, sigma_qp: np.ndarray) -> np.ndarray:
        """Nodal vector of int sigma : E(v_i); shape (nnodes*d,)."""
        fc = np.einsum("qmai,cqm->cai", self.B, sigma_qp, optimize=True)
        fc *= self.qp_weight
        return np.bincount(self.cell_dofs.ravel(), weights=fc.ravel(),
                           minlength=self.nnodes * self.d)

    def load_vector(self, body_fn=None, traction_fn=None, t: float = 0.0,
                    sigma0_fn=None) -> np.ndarray:
        """External load: int f . v plus the bottom-face traction integral.

        traction_fn(t, x) must return the surface traction; alternatively
        sigma0_fn(t, x) gives Neumann stress data and the traction is
        sigma0 . n with n the outward normal of the bottom face.
        """
        out = np.zeros(self.nnodes * self.d)
        if body_fn is not None:
            fq = body_fn(t, self.qp_coords.reshape(-1, self.d))
            fq = np.asarray(fq).reshape(self.ncells, self.nqp, self.d)
            fc = np.einsum("qa,cqi->cai", self.shape_values, fq, optimize=True)
            fc *= self.qp_weight
            out += np.bincount(self.cell_dofs.ravel(), weights=fc.ravel(),
                               minlength=self.nnodes * self.d)
        if self.neumann_cells.size:
            if traction_fn is not None:
                gq = traction_fn(t, self.face_qp_coords.reshape(-1, self.d))
                gq = np.asarray(gq).reshape(len(self.neumann_cells), -1, self.d)
            elif sigma0_fn is not None:
                s0 = sigma0_fn(t, self.face_qp_coords.reshape(-1, self.d))
                mats = tensors.to_matrix(np.asarray(s0))
                gq = (mats @ self.face_normal).reshape(
                    len(self.neumann_cells), -1, self.d)
            else:
                gq = None
            if gq is not None:
                fc = np.einsum("qa,cqi->cai", self.face_shape_values, gq,
                               optimize=True)
                fc *= self.face_qp_weight
                dofs = self.cell_dofs[self.neumann_cells]
                out += np.bincount(dofs.ravel(), weights=fc.ravel(),
                                   minlength=self.nnodes * self.d)
        return out

    def assemble_residual(self, sigma_qp: np.ndarray, body_fn=None,
                          traction_fn=None, sigma0_fn=None,
                          t: float = 0.0) -> np.ndarray:
        """Equilibrium residual with Dirichlet rows zeroed."""
        r = self.internal_force(sigma_qp) - self.load_vector(
            body_fn=body_fn, traction_fn=traction_fn, sigma0_fn=sigma0_fn, t=t)
        r[self.dirichlet_dofs] = 0.0
        return r

    def assemble_tangent(self, D_qp: np.ndarray) -> sparse.csr_matrix:
        """Stiffness from a quadrature-point modulus field (ncells, nqp, m, m)."""
        Kc = np.einsum("qmai,cqmn,qnbj->caibj", self.B, D_qp, self.B,
                       optimize=True)
        Kc *= self.qp_weight
        ndof = self.nnodes * self.d
        K = sparse.coo_matrix((Kc.ravel(), (self._rows, self._cols)),
                              shape=(ndof, ndof))
        return K.tocsr()

    def make_solver(self, K: sparse.csr_matrix, method: str = "auto"):
        """Reusable solver for K on the free dofs (full-size in/out vectors).

        Direct sparse factorization for n <= 32, diagonal-preconditioned
        CG (rtol 1e-11) above, unless overridden by method.
        """
        free = self.free_dofs
        if free.size == 0:
            raise ValueError("no free unknowns (all-Dirichlet with zero dofs?)")
        Kff = K[free][:, free].tocsc()
        if method == "auto":
            method = "direct" if self.n <= DIRECT_SOLVE_MAX_N else "cg"
        if method == "direct":
            try:
                # tangent is SPD: symmetric-mode ordering halves the factor time
                lu = sparse_linalg.splu(Kff, permc_spec="MMD_AT_PLUS_A",
                                        options=dict(SymmetricMode=True))
            except RuntimeError as exc:   # singular factorization
                raise np.linalg.LinAlgError(str(exc))

            def solve(rhs):
                out = np.zeros_like(rhs)
                out[free] = lu.solve(rhs[free])
                return out
        else:
            diag = Kff.diagonal()
            if np.any(diag <= 0):
                raise np.linalg.LinAlgError("tangent has non-positive diagonal")
            M = sparse.diags(1.0 / diag)

            def solve(rhs):
                x, info = sparse_linalg.cg(Kff, rhs[free], rtol=CG_RTOL,
                                           atol=0.0, M=M)
                if info != 0:
                    raise np.linalg.LinAlgError(
                        f"CG failed to converge (info={info})")
                out = np.zeros_like(rhs)
                out[free] = x
                return out
        return solve

    def solve_free(self, K: sparse.csr_matrix, rhs: np.ndarray,
                   method: str = "auto") -> np.ndarray:
        """Solve K du = rhs on free dofs; returns a full-size vector."""
        return self.make_solver(K, method)(rhs)


def build_grid(geometry: Geometry, n: int) -> Grid:
    return Grid(geometry, n)


# -- cutoff weight ----------------------------------------------------------


def _smoothstep(t: np.ndarray) -> np.ndarray:
    """C^2 quintic ramp from 0 to 1 on [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _bump(x, lo, hi, w):
    up = _smoothstep((x - lo) / w)
    down = _smoothstep((hi - x) / w)
    return np.where((x <= lo) | (x >= hi), 0.0, np.minimum(up, down))


@dataclass
class Cutoff:
    """Smooth localization weight phi, sampled at nodes and quadrature points.

    phi vanishes within eps0 of the Dirichlet/Neumann interface line and
    of the outer faces (except the declared bottom portion), equals one
    on a core region, and is constant in x_d on [0, h0].
    """

    eps0: float
    h0: float
    side: str
    grid: Grid = field(repr=False)
    qp_values: np.ndarray = field(repr=False)
    node_values: np.ndarray = field(repr=False)
    _axis_funcs: list = field(repr=False, default_factory=list)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        for j, fn in enumerate(self._axis_funcs):
            out = out * fn(x[..., j])
        return out


def make_cutoff(grid: Grid, eps0: float, h0: float,
                side: str = "neumann") -> Cutoff:
    """Tensor-product C^2 cutoff adapted to the grid's boundary mode.

    side selects which half of the bottom face keeps the support in
    mixed mode ("neumann": x_{d-1} > 0, "dirichlet": x_{d-1} < 0).
    """
    if not 0.0 < eps0 < 0.5:
        raise ValueError("eps0 must lie in (0, 1/2)")
    if not 0.0 < h0 < 0.5:
        raise ValueError("h0 must lie in (0, 1/2)")
    if side not in ("neumann", "dirichlet"):
        raise ValueError("side must be 'neumann' or 'dirichlet'")
    d = grid.d
    mode = grid.geometry.mode

    funcs = []
    for j in range(d - 2):
        w = eps0
        funcs.append(lambda x, w=w: _bump(x, -1.0 + eps0, 1.0 - eps0, w))

    # split axis x_{d-1}
    if mode == "mixed":
        if side == "neumann":
            lo, hi = eps0, 1.0 - eps0
        else:
            lo, hi = -1.0 + eps0, -eps0
        w = min(eps0, (hi - lo) / 2.0)
        if hi - lo - 2.0 * w <= 1e-12:
            raise ValueError(
                f"core region empty on the split axis (eps0={eps0:g})")
    else:
        lo, hi, w = -1.0 + eps0, 1.0 - eps0, eps0
    funcs.append(lambda x, lo=lo, hi=hi, w=w: _bump(x, lo, hi, w))

    # normal axis: plateau [0, pe], C^2 descent, zero within eps0 of the top
    pe = max(h0, 1.0 - 2.0 * eps0)
    if pe >= 1.0 - eps0 - 1e-12:
        raise ValueError(
            f"inconsistent margins: no room to descend (h0={h0:g}, eps0={eps0:g})")
    ramp = 1.0 - eps0 - pe

    def phi_d(x, pe=pe, ramp=ramp):
        return np.where(x <= pe, 1.0, _smoothstep((pe + ramp - x) / ramp))

    funcs.append(phi_d)

    cutoff = Cutoff(eps0=eps0, h0=h0, side=side, grid=grid,
                    qp_values=np.empty(0), node_values=np.empty(0),
                    _axis_funcs=funcs)
    cutoff.qp_values = cutoff(grid.qp_coords)
    cutoff.node_values = cutoff(grid.nodes)
    return cutoff
