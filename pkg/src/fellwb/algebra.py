"""Finite-dimensional *-algebras given by structure constants.

A StarAlgebra is a coordinate *-algebra: multiplication is a 3-tensor,
the involution a conjugate-linear matrix (a* = invol @ conj(a)), and a
designated faithful *-representation maps basis vectors to matrices.
The canonical representation, when none is supplied, is the left regular
representation made unitary through the trace form <a, b> = tr(L_{a* b});
a degenerate trace form is reported, never repaired.

Wedderburn analysis finds the center by solving x a == a x over the
basis, splits it into minimal projections by diagonalizing a generic
self-adjoint central element, and reads block sizes off the corner
dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import DegenerateAlgebraError, StructuralError, ValidationReport

# Eigenvalue clusters closer than this are treated as a single block
# eigenvalue; idempotent spectra are exactly {0, 1} so the slack is wide.
CLUSTER_GAP = 1e-7
RANK_TOL = 1e-10


@dataclass(eq=False)
class StarAlgebra:
    dim: int
    mult: np.ndarray  # (dim, dim, dim): (ab)_k = mult[k,i,j] a_i b_j
    invol: np.ndarray  # (dim, dim): a* = invol @ conj(a)
    rep: np.ndarray = None  # (dim, m, m): rep of each basis vector
    blocks: tuple = None

    def __post_init__(self):
        self.mult = np.asarray(self.mult, dtype=complex)
        self.invol = np.asarray(self.invol, dtype=complex)
        if self.mult.shape != (self.dim,) * 3:
            raise StructuralError(f"structure tensor shape {self.mult.shape} != {(self.dim,)*3}")
        if self.invol.shape != (self.dim, self.dim):
            raise StructuralError("involution matrix shape mismatch")
        if self.rep is None:
            self.rep = gns_representation(self.mult, self.invol)
        else:
            self.rep = np.asarray(self.rep, dtype=complex)
        self._unit = None

    def multiply(self, a, b) -> np.ndarray:
        return np.einsum("kij,i,j->k", self.mult, a, b)

    def star(self, a) -> np.ndarray:
        return self.invol @ np.conj(a)

    def rep_of(self, a) -> np.ndarray:
        return np.einsum("kpq,k->pq", self.rep, np.asarray(a, dtype=complex))

    def norm(self, a) -> float:
        """Spectral norm in the designated representation (the C* norm)."""
        return float(np.linalg.norm(self.rep_of(a), 2))

    def left_mult_matrix(self, a) -> np.ndarray:
        return np.einsum("kij,i->kj", self.mult, a)

    def unit(self) -> np.ndarray:
        """Coordinates of the multiplicative unit (solved, then verified)."""
        if self._unit is None:
            # u satisfies mult[k,i,j] u_i = delta_{kj} for all k, j
            A = self.mult.transpose(0, 2, 1).reshape(self.dim * self.dim, self.dim)
            rhs = np.eye(self.dim, dtype=complex).reshape(-1)
            u, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if not np.allclose(A @ u, rhs, atol=1e-8):
                raise DegenerateAlgebraError("algebra has no unit")
            self._unit = u
        return self._unit

    def __repr__(self):
        return f"StarAlgebra(dim={self.dim}, rep_dim={self.rep.shape[1]}, blocks={self.blocks})"


def left_regular_tensor(mult: np.ndarray) -> np.ndarray:
    """L[i] = matrix of left multiplication by the i-th basis vector."""
    return np.ascontiguousarray(mult.transpose(1, 0, 2))


def trace_form(mult: np.ndarray, invol: np.ndarray) -> np.ndarray:
    """Gram matrix G[i,j] = tr(L_{e_i* e_j}) of the regular trace form."""
    n = mult.shape[0]
    traces = np.einsum("mkm->k", mult)  # tr(L_{e_k})
    # e_i* e_j = mult[., a, j] invol[a, i]  (basis vectors are real)
    prod = np.einsum("kaj,ai->kij", mult, invol)
    return np.einsum("kij,k->ij", prod, traces)


def gns_representation(mult: np.ndarray, invol: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Left regular representation orthonormalized by the trace form.

    Raises DegenerateAlgebraError when the form is not positive definite,
    which is the finite-dimensional signature of "not a C*-algebra".
    """
    G = trace_form(mult, invol)
    if not np.allclose(G, G.conj().T, atol=1e-8 * max(1.0, np.abs(G).max())):
        raise DegenerateAlgebraError("trace form is not Hermitian")
    lam, U = np.linalg.eigh((G + G.conj().T) / 2)
    scale = max(lam.max(initial=0.0), 1.0)
    if lam.min() < tol * scale:
        raise DegenerateAlgebraError(
            f"trace form degenerate (min eigenvalue {lam.min():.3e}); not a C*-algebra"
        )
    S = (np.sqrt(lam)[:, None] * U.conj().T)
    Sinv = U * (1.0 / np.sqrt(lam))[None, :]
    L = left_regular_tensor(mult)
    return np.matmul(S, np.matmul(L, Sinv))


def validate_star_algebra(a: StarAlgebra, rtol: float = 1e-9) -> ValidationReport:
    rep = ValidationReport("star-algebra")
    n = a.dim
    eye = np.eye(n)

    assoc = np.einsum("kim,mjl->kijl", a.mult, a.mult) - np.einsum(
        "kml,mij->kijl", a.mult, a.mult
    )
    rep.record("associativity", np.max(np.abs(assoc)) < 1e-8, float(np.max(np.abs(assoc))))

    per = a.invol @ np.conj(a.invol) - eye
    rep.record("involution-2-periodic", np.max(np.abs(per)) < 1e-8, float(np.max(np.abs(per))))

    # (ab)* == b* a*
    lhs = np.einsum("lk,kij->lij", a.invol, np.conj(a.mult))
    rhs = np.einsum("lba,bj,ai->lij", a.mult, a.invol, a.invol)
    rep.record("involution-antimultiplicative", np.max(np.abs(lhs - rhs)) < 1e-8,
               float(np.max(np.abs(lhs - rhs))))

    # designated representation is a *-homomorphism
    hom = np.einsum("kij,kpq->ijpq", a.mult, a.rep) - np.einsum(
        "ipm,jmq->ijpq", a.rep, a.rep
    )
    rep.record("rep-multiplicative", np.max(np.abs(hom)) < 1e-8, float(np.max(np.abs(hom))))
    star = np.einsum("ki,kpq->ipq", a.invol, np.conj(a.rep)) - a.rep.conj().transpose(0, 2, 1)
    rep.record("rep-star", np.max(np.abs(star)) < 1e-8, float(np.max(np.abs(star))))

    flat = a.rep.reshape(n, -1)
    rank = np.linalg.matrix_rank(flat, tol=RANK_TOL * max(1.0, np.abs(flat).max()))
    rep.record("rep-faithful", rank == n, int(rank))
    return rep


def _cluster(values: np.ndarray, gap: float) -> list[np.ndarray]:
    """Indices of eigenvalues grouped by gaps larger than `gap`."""
    order = np.argsort(values)
    groups = [[order[0]]]
    for idx in order[1:]:
        if values[idx] - values[groups[-1][-1]] > gap:
            groups.append([])
        groups[-1].append(idx)
    return [np.array(g) for g in groups]


def center_basis(a: StarAlgebra, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (rows) of {x : x e_j == e_j x for all j}."""
    M = (a.mult - a.mult.transpose(0, 2, 1)).transpose(0, 2, 1).reshape(a.dim * a.dim, a.dim)
    # rows indexed by (k, j); columns by the unknown x
    _, s, Vh = np.linalg.svd(M)
    scale = max(1.0, s.max(initial=0.0))
    null = Vh[np.concatenate([s, np.zeros(max(0, Vh.shape[0] - len(s)))]) < tol * scale]
    return null


def wedderburn(a: StarAlgebra, gap: float = CLUSTER_GAP, seed: int = 7) -> tuple:
    """Sorted matrix block sizes of a finite-dimensional semisimple *-algebra.

    Block count equals the center dimension; block sizes are the square
    roots of the corner dimensions cut out by the minimal central
    projections.  A center-idempotent defect (corner dimension not a
    perfect square, or sizes not summing back to the algebra dimension)
    raises DegenerateAlgebraError.
    """
    if a.blocks is not None:
        return a.blocks
    zbasis = center_basis(a)
    c = zbasis.shape[0]
    if c == 0:
        raise DegenerateAlgebraError("empty center")

    rng = np.random.default_rng(seed)
    n = a.dim
    for _ in range(16):
        coeff = rng.standard_normal(c) + 1j * rng.standard_normal(c)
        w = zbasis.T @ coeff
        z = w + a.star(w)  # self-adjoint, still central
        Rz = a.rep_of(z)
        nrm = np.linalg.norm(Rz, 2)
        if nrm < 1e-12:
            continue
        Rz /= nrm
        lam, U = np.linalg.eigh((Rz + Rz.conj().T) / 2)
        clusters = _cluster(lam, gap)
        if len(clusters) != c:
            continue  # eigenvalue collision; redraw
        sizes = []
        for cl in clusters:
            P = U[:, cl] @ U[:, cl].conj().T
            corner = np.einsum("pq,kqr,rs->kps", P, a.rep, P).reshape(n, -1)
            d = int(np.linalg.matrix_rank(corner, tol=RANK_TOL * max(1.0, np.abs(corner).max())))
            root = int(round(np.sqrt(d)))
            if root * root != d:
                raise DegenerateAlgebraError(
                    f"corner dimension {d} is not a perfect square; center-idempotent defect"
                )
            sizes.append(root)
        if sum(s * s for s in sizes) != n:
            raise DegenerateAlgebraError(
                f"block sizes {sizes} do not account for dimension {n}; not semisimple"
            )
        a.blocks = tuple(sorted(sizes))
        return a.blocks
    raise DegenerateAlgebraError("could not separate central spectrum after 16 draws")


def matrix_algebra(n: int) -> StarAlgebra:
    """M_n(C) in matrix-unit coordinates with its defining representation."""
    dim = n * n
    basis = np.eye(dim).reshape(dim, n, n)
    mult = np.einsum("ipq,jqr,kpr->kij", basis, basis, basis)
    invol = np.einsum("ipq,kqp->ki", basis, basis)  # transpose permutation; conj applied by star()
    return StarAlgebra(dim, mult, invol, rep=basis)
