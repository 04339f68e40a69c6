"""Fell bundles over finite groupoids and their section *-algebras.

Fibers are abstract coordinate spaces: the bundle stores one complex
3-tensor per composable arrow pair (the fiber multiplication), one
matrix per arrow (the involution, applied as e* = invol[g] @ conj(e)),
and fiber dimensions.  Norms are never stored; they are derived from
the C*-identity ||e||^2 = ||e* e|| with unit fibers measured in a
faithful representation.

Sections of the bundle (one fiber vector per arrow) form a *-algebra
under convolution

    (xi * eta)(g) = sum over gamma in G^r(g) of
                    xi(gamma) eta(gamma^-1 g) haar(gamma),

and the reduced norm is the supremum over units x of the operator norm
of left convolution on the Hilbert space built from the source fiber
G_x, with the unit-fiber algebra represented faithfully.

A bundle may carry a defining representation per unit fiber (e.g. the
matrix fibers of a pulled-back bundle of matrix algebras).  Norm
computations route through it when present; the regular trace
representation is the fallback and the oracle.  The two give identical
norms, which the test suite checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import StarAlgebra, gns_representation, wedderburn
from .groupoid import FiniteGroupoid
from .validation import (
    DegenerateAlgebraError,
    StructuralError,
    ValidationReport,
)

RANK_TOL = 1e-10


@dataclass(eq=False)
class FellBundle:
    base: FiniteGroupoid
    dim: dict
    mult: dict  # (g, h) -> ndarray (d(gh), d(g), d(h))
    invol: dict  # g -> ndarray (d(g^-1), d(g))
    invol_conjugates: bool = True  # False only in fault-injection fixtures
    fiber_reps: dict = None  # optional unit -> ndarray (d, m, m)

    def __post_init__(self):
        g = self.base
        for a in g.arrows:
            d = self.dim.get(a)
            if not isinstance(d, int) or d < 1:
                raise StructuralError(f"fiber dimension invalid at {a!r}")
        for (a, b), t in self.mult.items():
            if (a, b) not in g.compose:
                raise StructuralError(f"mult defined on non-composable pair {(a, b)}")
            want = (self.dim[g.compose[(a, b)]], self.dim[a], self.dim[b])
            t = np.asarray(t, dtype=complex)
            if t.shape != want:
                raise StructuralError(f"mult tensor at {(a, b)} has shape {t.shape}, want {want}")
            self.mult[(a, b)] = t
        for pair in g.compose:
            if pair not in self.mult:
                raise StructuralError(f"mult missing on composable pair {pair}")
        for a in g.arrows:
            j = np.asarray(self.invol.get(a), dtype=complex)
            want = (self.dim[g.inv[a]], self.dim[a])
            if j.shape != want:
                raise StructuralError(f"invol matrix at {a!r} has shape {j.shape}, want {want}")
            self.invol[a] = j
        if self.fiber_reps is not None:
            for x, r in self.fiber_reps.items():
                r = np.asarray(r, dtype=complex)
                ex = self.base.identity(x)
                if r.ndim != 3 or r.shape[0] != self.dim[ex] or r.shape[1] != r.shape[2]:
                    raise StructuralError(f"fiber rep at unit {x!r} has shape {r.shape}")
                self.fiber_reps[x] = r
        self._cache = {}

    # -- fiber operations ---------------------------------------------

    def fiber_mult(self, a, b, u, v) -> np.ndarray:
        return np.einsum("kij,i,j->k", self.mult[(a, b)], u, v)

    def fiber_star(self, a, u) -> np.ndarray:
        u = np.asarray(u, dtype=complex)
        return self.invol[a] @ (np.conj(u) if self.invol_conjugates else u)

    def unit_fiber_algebra(self, x) -> StarAlgebra:
        """The *-algebra structure of the fiber over the identity at x.

        Uses the defining representation when the bundle has one;
        otherwise the regular trace representation.
        """
        key = ("unit_alg", x)
        if key not in self._cache:
            ex = self.base.identity(x)
            rep = None
            if self.fiber_reps is not None and x in self.fiber_reps:
                rep = self.fiber_reps[x]
            self._cache[key] = StarAlgebra(self.dim[ex], self.mult[(ex, ex)], self.invol[ex], rep=rep)
        return self._cache[key]

    def fiber_unit(self, x) -> np.ndarray:
        key = ("unit_vec", x)
        if key not in self._cache:
            self._cache[key] = self.unit_fiber_algebra(x).unit()
        return self._cache[key]

    def __repr__(self):
        total = sum(self.dim[a] for a in self.base.arrows)
        return f"FellBundle({len(self.base.arrows)} arrows, section dim {total})"


def unit_rep(e: FellBundle, x) -> StarAlgebra:
    """Unit fiber algebra carrying its regular trace representation.

    The representation acts on the fiber itself, orthonormalized by
    <a, b> = tr(L_{a* b}); degeneracy of that form raises
    DegenerateAlgebraError ("not a C*-algebra").
    """
    ex = e.base.identity(x)
    mult = e.mult[(ex, ex)]
    invol = e.invol[ex]
    return StarAlgebra(e.dim[ex], mult, invol, rep=gns_representation(mult, invol))


def fiber_norm(e: FellBundle, g, vec) -> float:
    """||vec|| for vec in the fiber over g, via ||e||^2 = ||e* e||."""
    vec = np.asarray(vec, dtype=complex)
    base = e.base
    if base.is_unit_arrow(g):
        return e.unit_fiber_algebra(base.rng[g]).norm(vec)
    gi = base.inv[g]
    prod = e.fiber_mult(gi, g, e.fiber_star(g, vec), vec)
    x = base.src[g]
    return float(np.sqrt(max(e.unit_fiber_algebra(x).norm(prod), 0.0)))


# -- sections ---------------------------------------------------------


@dataclass(eq=False)
class Section:
    bundle: FellBundle
    data: dict = None

    def __post_init__(self):
        full = {}
        src = self.data or {}
        for a in self.bundle.base.arrows:
            v = src.get(a)
            if v is None:
                v = np.zeros(self.bundle.dim[a], dtype=complex)
            else:
                v = np.asarray(v, dtype=complex)
                if v.shape != (self.bundle.dim[a],):
                    raise StructuralError(f"section vector at {a!r} has length {v.shape}")
            full[a] = v
        self.data = full

    def __getitem__(self, a) -> np.ndarray:
        return self.data[a]

    def __add__(self, other: "Section") -> "Section":
        _same_bundle(self, other)
        return Section(self.bundle, {a: self.data[a] + other.data[a] for a in self.data})

    def __sub__(self, other: "Section") -> "Section":
        _same_bundle(self, other)
        return Section(self.bundle, {a: self.data[a] - other.data[a] for a in self.data})

    def __rmul__(self, c) -> "Section":
        return Section(self.bundle, {a: c * v for a, v in self.data.items()})

    def __mul__(self, other: "Section") -> "Section":
        return convolve(self, other)

    def star(self) -> "Section":
        return involute(self)

    @staticmethod
    def delta(bundle: FellBundle, arrow, vec=None, index: int = 0) -> "Section":
        if vec is None:
            vec = np.zeros(bundle.dim[arrow], dtype=complex)
            vec[index] = 1.0
        return Section(bundle, {arrow: vec})

    @staticmethod
    def random(bundle: FellBundle, rng: np.random.Generator) -> "Section":
        return Section(
            bundle,
            {
                a: rng.standard_normal(bundle.dim[a]) + 1j * rng.standard_normal(bundle.dim[a])
                for a in bundle.base.arrows
            },
        )

    def __repr__(self):
        support = sum(1 for v in self.data.values() if np.any(v))
        return f"Section(support {support}/{len(self.data)})"


def _same_bundle(a: Section, b: Section) -> None:
    if a.bundle is not b.bundle:
        raise StructuralError("sections live on different bundles")


def convolve(xi: Section, eta: Section) -> Section:
    _same_bundle(xi, eta)
    e = xi.bundle
    g = e.base
    out = {}
    for a in g.arrows:
        acc = np.zeros(e.dim[a], dtype=complex)
        for gam in g.range_fiber(g.rng[a]):
            rest = g.compose[(g.inv[gam], a)]
            acc += g.haar[gam] * e.fiber_mult(gam, rest, xi.data[gam], eta.data[rest])
        out[a] = acc
    return Section(e, out)


def involute(xi: Section) -> Section:
    e = xi.bundle
    g = e.base
    return Section(e, {a: e.fiber_star(g.inv[a], xi.data[g.inv[a]]) for a in g.arrows})


def i_norm(xi: Section) -> float:
    e = xi.bundle
    g = e.base

    def one_sided(s: Section) -> float:
        best = 0.0
        for x in g.units:
            tot = sum(g.haar[a] * fiber_norm(e, a, s.data[a]) for a in g.range_fiber(x))
            best = max(best, tot)
        return best

    return max(one_sided(xi), one_sided(involute(xi)))


def a_inner(xi: Section, eta: Section) -> dict:
    """The unit-indexed inner product <xi, eta>_A(x) = sum over G^x of
    xi(g) eta(g)* haar(g), valued in the unit fiber at x."""
    _same_bundle(xi, eta)
    e = xi.bundle
    g = e.base
    out = {}
    for x in g.units:
        ex = g.identity(x)
        acc = np.zeros(e.dim[ex], dtype=complex)
        for a in g.range_fiber(x):
            acc += g.haar[a] * e.fiber_mult(a, g.inv[a], xi.data[a], e.fiber_star(a, eta.data[a]))
        out[x] = acc
    return out


def module_act(f: dict, xi: Section) -> Section:
    """(f . xi)(g) = f(r(g)) xi(g) for f a section over the units."""
    e = xi.bundle
    g = e.base
    out = {}
    for a in g.arrows:
        x = g.rng[a]
        out[a] = e.fiber_mult(g.identity(x), a, np.asarray(f[x], dtype=complex), xi.data[a])
    return Section(e, out)


def unit_section(e: FellBundle) -> Section:
    """The convolution unit: fiber units placed on the identity arrows."""
    data = {e.base.identity(x): e.fiber_unit(x) for x in e.base.units}
    return Section(e, data)


# -- flattened section coordinates ------------------------------------


class SectionSpace:
    """Flat coordinates on the section algebra of a bundle.

    Provides the structure tensor of convolution, the involution matrix,
    and conversions between Section objects and vectors, all cached on
    the bundle.
    """

    def __init__(self, bundle: FellBundle):
        self.bundle = bundle
        g = bundle.base
        self.arrows = g.arrows
        self.offsets = {}
        off = 0
        for a in self.arrows:
            self.offsets[a] = off
            off += bundle.dim[a]
        self.total = off
        self._tensor = None
        self._invol = None

    @staticmethod
    def of(bundle: FellBundle) -> "SectionSpace":
        if "space" not in bundle._cache:
            bundle._cache["space"] = SectionSpace(bundle)
        return bundle._cache["space"]

    def to_vec(self, xi: Section) -> np.ndarray:
        v = np.zeros(self.total, dtype=complex)
        for a in self.arrows:
            o = self.offsets[a]
            v[o : o + self.bundle.dim[a]] = xi.data[a]
        return v

    def from_vec(self, v: np.ndarray) -> Section:
        data = {}
        for a in self.arrows:
            o = self.offsets[a]
            data[a] = np.asarray(v[o : o + self.bundle.dim[a]], dtype=complex)
        return Section(self.bundle, data)

    def structure_tensor(self) -> np.ndarray:
        """T[k,i,j] with (xi * eta)_flat = T . xi_flat . eta_flat."""
        if self._tensor is None:
            g = self.bundle.base
            T = np.zeros((self.total,) * 3, dtype=complex)
            for (a, b), c in g.compose.items():
                t = self.bundle.mult[(a, b)] * g.haar[a]
                oa, ob, oc = self.offsets[a], self.offsets[b], self.offsets[c]
                da, db, dc = self.bundle.dim[a], self.bundle.dim[b], self.bundle.dim[c]
                T[oc : oc + dc, oa : oa + da, ob : ob + db] += t
            self._tensor = T
        return self._tensor

    def involution_matrix(self) -> np.ndarray:
        if self._invol is None:
            g = self.bundle.base
            J = np.zeros((self.total, self.total), dtype=complex)
            for a in self.arrows:
                ai = g.inv[a]
                o, oi = self.offsets[a], self.offsets[ai]
                J[o : o + self.bundle.dim[a], oi : oi + self.bundle.dim[ai]] = self.bundle.invol[ai]
            self._invol = J
        return self._invol


# -- fiberwise regular representations --------------------------------


class _PiBlock:
    """Left convolution on the Hilbert space over one unit's source fiber.

    The space is the direct sum over g in G_x of (fiber over g) tensor
    (representation space of the unit fiber algebra at x), with the Gram
    form  <(e, v), (e', w)>  =  mu_x(g) <v, rep(e* e') w>  and
    mu_x(g) = haar(inv(g)).  The matrix returned by `matrix` is written
    in orthonormal coordinates for that form, so adjoints are literal
    conjugate transposes.
    """

    def __init__(self, bundle: FellBundle, x, rep_mode: str):
        self.bundle = bundle
        self.x = x
        g = bundle.base
        if rep_mode == "gns":
            alg = unit_rep(bundle, x)
        else:
            alg = bundle.unit_fiber_algebra(x)
        self.rep = alg.rep
        self.m = alg.rep.shape[1]
        self.fiber = g.source_fiber(x)
        self.offsets = {}
        off = 0
        for a in self.fiber:
            self.offsets[a] = off
            off += bundle.dim[a] * self.m
        self.dim = off

        gram = np.zeros((self.dim, self.dim), dtype=complex)
        for a in self.fiber:
            ai = g.inv[a]
            # W[c, i, j] = coordinates of u_i* u_j in the unit fiber
            W = np.einsum("cbj,bi->cij", bundle.mult[(ai, a)], bundle.invol[a])
            block = np.einsum("cij,cpq->ipjq", W, self.rep) * g.haar[ai]
            d = bundle.dim[a]
            o = self.offsets[a]
            gram[o : o + d * self.m, o : o + d * self.m] = block.reshape(d * self.m, d * self.m)

        lam, U = np.linalg.eigh((gram + gram.conj().T) / 2)
        scale = max(lam.max(initial=0.0), 1.0)
        keep = lam > RANK_TOL * scale
        self.degenerate = not bool(keep.all())
        lam = lam[keep]
        U = U[:, keep]
        self._S = np.sqrt(lam)[:, None] * U.conj().T
        self._Sinv = U * (1.0 / np.sqrt(lam))[None, :]

    def matrix(self, xi: Section) -> np.ndarray:
        g = self.bundle.base
        B = np.zeros((self.dim, self.dim), dtype=complex)
        eye = np.eye(self.m)
        for b in self.fiber:
            bi = g.inv[b]
            for a in self.fiber:
                gam = g.compose[(a, bi)]
                vec = xi.data[gam]
                if not np.any(vec):
                    continue
                mat = np.einsum("kij,i->kj", self.bundle.mult[(gam, b)], vec) * g.haar[gam]
                oa, ob = self.offsets[a], self.offsets[b]
                da, db = self.bundle.dim[a], self.bundle.dim[b]
                B[oa : oa + da * self.m, ob : ob + db * self.m] = np.kron(mat, eye)
        return self._S @ B @ self._Sinv


def _pi_block(bundle: FellBundle, x, rep_mode: str) -> _PiBlock:
    key = ("pi", x, rep_mode)
    if key not in bundle._cache:
        bundle._cache[key] = _PiBlock(bundle, x, rep_mode)
    return bundle._cache[key]


def pi_x(xi: Section, x, rep: str = "auto") -> np.ndarray:
    """Matrix of left convolution by xi over the source fiber at x.

    rep selects the unit fiber representation used on the tensor factor:
    "gns" forces the regular trace representation; "auto" prefers the
    bundle's defining representation when it has one.  The operator norm
    is the same either way.
    """
    if rep == "auto":
        mode = "defining" if xi.bundle.fiber_reps else "gns"
    else:
        mode = rep
    return _pi_block(xi.bundle, x, mode).matrix(xi)


def reduced_norm(xi: Section, rep: str = "auto") -> float:
    """sup over units of the operator norm of pi_x(xi)."""
    return max(float(np.linalg.norm(pi_x(xi, x, rep=rep), 2)) for x in xi.bundle.base.units)


def regular_module_norm(xi: Section, rep: str = "auto") -> float:
    """Norm of left convolution on the full direct sum over units.

    This is the single global operator whose blocks are the pi_x; its
    norm agrees with reduced_norm by construction and is kept as an
    independently assembled cross-check.
    """
    mats = [pi_x(xi, x, rep=rep) for x in xi.bundle.base.units]
    total = sum(m.shape[0] for m in mats)
    big = np.zeros((total, total), dtype=complex)
    off = 0
    for m in mats:
        big[off : off + m.shape[0], off : off + m.shape[0]] = m
        off += m.shape[0]
    return float(np.linalg.norm(big, 2))


def section_star_algebra(e: FellBundle, rep: str = "pi") -> StarAlgebra:
    """The section algebra as a StarAlgebra.

    rep = "pi"  : designated representation is the direct sum of the
                  fiberwise regular representations (one per unit).
    rep = "gns" : regular trace representation of the section algebra
                  itself (the norm oracle).
    """
    space = SectionSpace.of(e)
    T = space.structure_tensor()
    J = space.involution_matrix()
    if rep == "gns":
        return StarAlgebra(space.total, T, J, rep=gns_representation(T, J))
    blocks = [_pi_block(e, x, "defining" if e.fiber_reps else "gns") for x in e.base.units]
    V = sum(b._S.shape[0] for b in blocks)
    rep_tensor = np.zeros((space.total, V, V), dtype=complex)
    for a in space.arrows:
        for i in range(e.dim[a]):
            xi = Section.delta(e, a, index=i)
            off = 0
            for b in blocks:
                m = b.matrix(xi)
                k = m.shape[0]
                rep_tensor[space.offsets[a] + i, off : off + k, off : off + k] = m
                off += k
    return StarAlgebra(space.total, T, J, rep=rep_tensor)


def reduced_algebra(g: FiniteGroupoid, e: FellBundle, rep: str = "pi") -> StarAlgebra:
    """Section algebra with its reduced representation and Wedderburn blocks."""
    from .groupoid import groupoids_equal

    if not groupoids_equal(e.base, g):
        raise StructuralError("bundle is not over the given groupoid")
    alg = section_star_algebra(e, rep=rep)
    wedderburn(alg)
    return alg


# -- multipliers ------------------------------------------------------


@dataclass(eq=False)
class SectionOperator:
    """A linear operator on sections, with its flat matrix."""

    bundle: FellBundle
    matrix: np.ndarray
    label: str = ""

    def __call__(self, xi: Section) -> Section:
        space = SectionSpace.of(self.bundle)
        return space.from_vec(self.matrix @ space.to_vec(xi))

    def __repr__(self):
        return f"SectionOperator({self.label or 'anonymous'})"


def multiplier_pair(e: FellBundle, f: dict) -> tuple:
    """The multiplier (L_f, R_f) of a unit-supported section f.

    L_f xi (g) = f(r(g)) xi(g)  and  R_f xi (g) = xi(g) f(s(g)).
    """
    g = e.base
    for x in g.units:
        if x not in f:
            raise StructuralError(f"multiplier section misses unit {x!r}")
        v = np.asarray(f[x], dtype=complex)
        if v.shape != (e.dim[g.identity(x)],):
            raise StructuralError(f"multiplier value at {x!r} has wrong length")
    space = SectionSpace.of(e)
    L = np.zeros((space.total, space.total), dtype=complex)
    R = np.zeros((space.total, space.total), dtype=complex)
    for a in g.arrows:
        o, d = space.offsets[a], e.dim[a]
        ex_r, ex_s = g.identity(g.rng[a]), g.identity(g.src[a])
        L[o : o + d, o : o + d] = np.einsum(
            "kij,i->kj", e.mult[(ex_r, a)], np.asarray(f[g.rng[a]], dtype=complex)
        )
        R[o : o + d, o : o + d] = np.einsum(
            "kij,j->ki", e.mult[(a, ex_s)], np.asarray(f[g.src[a]], dtype=complex)
        )
    return (
        SectionOperator(e, L, label="L_f"),
        SectionOperator(e, R, label="R_f"),
    )


def _a_inner_form(e: FellBundle, x) -> np.ndarray:
    """C[c, i, j] with <xi, eta>_A(x)_c = C[c, i, j] xi_i conj(eta_j)."""
    space = SectionSpace.of(e)
    g = e.base
    ex = g.identity(x)
    C = np.zeros((e.dim[ex], space.total, space.total), dtype=complex)
    for a in g.range_fiber(x):
        ai = g.inv[a]
        part = np.einsum("cib,bj->cij", e.mult[(a, ai)], e.invol[a]) * g.haar[a]
        o, d = space.offsets[a], e.dim[a]
        C[:, o : o + d, o : o + d] = part
    return C


def validate_multiplier(e: FellBundle, f: dict, rtol: float = 1e-9) -> ValidationReport:
    """Double-centralizer and adjoint identities for (L_f, R_f)."""
    rep = ValidationReport("multiplier")
    space = SectionSpace.of(e)
    T = space.structure_tensor()
    L, R = multiplier_pair(e, f)

    # R_f(a) * b == a * L_f(b) on all basis pairs
    lhs = np.einsum("kaj,ai->kij", T, R.matrix)
    rhs = np.einsum("kib,bj->kij", T, L.matrix)
    err = float(np.max(np.abs(lhs - rhs)))
    rep.record("double-centralizer", err < 1e-8 * max(1.0, float(np.max(np.abs(T)))), err)

    # L is multiplicative in f: L_{f1 f2} == L_{f1} L_{f2} for f1 = f2 = f
    ff = {x: e.fiber_mult(e.base.identity(x), e.base.identity(x), f[x], f[x]) for x in e.base.units}
    Lff, _ = multiplier_pair(e, ff)
    err2 = float(np.max(np.abs(Lff.matrix - L.matrix @ L.matrix)))
    rep.record("L-multiplicative", err2 < 1e-8, err2)

    # adjoint: <L_f xi, eta>_A == <xi, L_{f*} eta>_A as forms
    fstar = {x: e.fiber_star(e.base.identity(x), f[x]) for x in e.base.units}
    Lstar, _ = multiplier_pair(e, fstar)
    err3 = 0.0
    for x in e.base.units:
        C = _a_inner_form(e, x)
        lhs_t = np.einsum("cab,ai->cib", C, L.matrix)
        rhs_t = np.einsum("cia,aj->cij", C, np.conj(Lstar.matrix))
        err3 = max(err3, float(np.max(np.abs(lhs_t - rhs_t))))
    rep.record("L-adjoint", err3 < 1e-8, err3)
    return rep


# -- constructors ------------------------------------------------------


def trivial_bundle(g: FiniteGroupoid) -> FellBundle:
    """All fibers C, multiplication by 1, involution by conjugation."""
    one = np.ones((1, 1, 1), dtype=complex)
    eye = np.ones((1, 1), dtype=complex)
    return FellBundle(
        g,
        {a: 1 for a in g.arrows},
        {pair: one.copy() for pair in g.compose},
        {a: eye.copy() for a in g.arrows},
        fiber_reps={x: np.ones((1, 1, 1), dtype=complex) for x in g.units},
    )


def cocycle_bundle(g: FiniteGroupoid, sigma) -> FellBundle:
    """Line bundle twisted by a unit-modulus 2-cocycle.

    Fibers are C; the product over (a, b) is multiplication by
    sigma(a, b) and the involution over g multiplies the conjugate by
    conj(sigma(g, g^-1)), which makes the involution 2-periodic and
    antimultiplicative.
    """
    from .extensions import as_cocycle, validate_cocycle

    coc = as_cocycle(g, sigma)
    validate_cocycle(coc).raise_if_failed()
    mult = {
        pair: np.array(coc.sigma[pair], dtype=complex).reshape(1, 1, 1) for pair in g.compose
    }
    invol = {
        a: np.array(np.conj(coc.sigma[(a, g.inv[a])]), dtype=complex).reshape(1, 1)
        for a in g.arrows
    }
    return FellBundle(
        g,
        {a: 1 for a in g.arrows},
        mult,
        invol,
        fiber_reps={x: np.ones((1, 1, 1), dtype=complex) for x in g.units},
    )


@dataclass(eq=False)
class ActionDatum:
    """Per-unit matrix algebras with an arrow-indexed action by isomorphisms.

    alpha[g] is a 4-tensor (n_r, n_r, n_s, n_s) acting on matrices:
    alpha_g(A)[p, q] = alpha[g][p, q, r, s] A[r, s].  The action must be
    exactly functorial and *-preserving; construction rejects anything
    else.
    """

    base: FiniteGroupoid
    fiber_dim: dict  # unit -> n
    alpha: dict  # arrow -> ndarray (n_r, n_r, n_s, n_s)

    def __post_init__(self):
        g = self.base
        for x in g.units:
            if self.fiber_dim.get(x, 0) < 1:
                raise StructuralError(f"fiber dimension invalid at unit {x!r}")
        for a in g.arrows:
            t = np.asarray(self.alpha.get(a), dtype=complex)
            nr, ns = self.fiber_dim[g.rng[a]], self.fiber_dim[g.src[a]]
            if t.shape != (nr, nr, ns, ns):
                raise StructuralError(f"alpha tensor at {a!r} has shape {t.shape}")
            self.alpha[a] = t
        for a in g.arrows:
            x = g.rng[a]
            n = self.fiber_dim[x]
            # multiplicative and *-preserving
            basis = np.eye(self.fiber_dim[g.src[a]] ** 2).reshape(-1, self.fiber_dim[g.src[a]], self.fiber_dim[g.src[a]])
            for A in basis:
                for B in basis:
                    lhs = self.apply(a, A @ B)
                    rhs = self.apply(a, A) @ self.apply(a, B)
                    if not np.allclose(lhs, rhs, atol=1e-10):
                        raise StructuralError(f"alpha at {a!r} is not multiplicative")
            A = basis[min(1, len(basis) - 1)]
            if not np.allclose(self.apply(a, A.conj().T), self.apply(a, A).conj().T, atol=1e-10):
                raise StructuralError(f"alpha at {a!r} does not preserve the involution")
            assert n == self.alpha[a].shape[0]
        for (a, b), c in g.compose.items():
            nb = self.fiber_dim[g.src[b]]
            probe = np.eye(nb * nb).reshape(-1, nb, nb)
            for A in probe:
                if not np.allclose(self.apply(c, A), self.apply(a, self.apply(b, A)), atol=1e-10):
                    raise StructuralError(f"alpha not functorial on pair {(a, b)}")

    def apply(self, a, mat) -> np.ndarray:
        return np.einsum("pqrs,rs->pq", self.alpha[a], np.asarray(mat, dtype=complex))


def action_datum_from_unitaries(base: FiniteGroupoid, fiber_dim: dict, unitaries: dict) -> ActionDatum:
    """ActionDatum with alpha_g = Ad(U_g); projective phases cancel."""
    alpha = {}
    for a in base.arrows:
        U = np.asarray(unitaries[a], dtype=complex)
        alpha[a] = np.einsum("pr,qs->pqrs", U, np.conj(U))
    return ActionDatum(base, fiber_dim, alpha)


def pullback_action_bundle(datum: ActionDatum, g: FiniteGroupoid = None) -> FellBundle:
    """Fell bundle of a matrix-algebra action, pulled back along the source.

    The fiber over an arrow g is the algebra at src(g), coordinates being
    the row-major entries; multiplication over (g, h) sends (a, b) to
    alpha_{h^-1}(a) b and the involution over g sends a to alpha_g(a)*.
    """
    if g is None:
        g = datum.base
    if datum.base is not g:
        raise StructuralError("datum base differs from the groupoid")
    dim = {a: datum.fiber_dim[g.src[a]] ** 2 for a in g.arrows}
    mult = {}
    for (a, b), _ in g.compose.items():
        n1 = datum.fiber_dim[g.src[a]]
        n2 = datum.fiber_dim[g.src[b]]
        am = datum.alpha[g.inv[b]]  # (n2, n2, n1, n1)
        # T[(p,t),(r,s),(q,u)] = am[p,q,r,s] delta_{t u}
        T = np.einsum("pqrs,tu->ptrsqu", am, np.eye(n2)).reshape(n2 * n2, n1 * n1, n2 * n2)
        mult[(a, b)] = T
    invol = {}
    for a in g.arrows:
        n1 = datum.fiber_dim[g.src[a]]
        nr = datum.fiber_dim[g.rng[a]]
        am = datum.alpha[a]  # (nr, nr, n1, n1)
        J = np.conj(am.transpose(1, 0, 2, 3)).reshape(nr * nr, n1 * n1)
        invol[a] = J
    reps = {
        x: np.eye(datum.fiber_dim[x] ** 2, dtype=complex).reshape(
            datum.fiber_dim[x] ** 2, datum.fiber_dim[x], datum.fiber_dim[x]
        )
        for x in g.units
    }
    return FellBundle(g, dim, mult, invol, fiber_reps=reps)


# -- validation --------------------------------------------------------


def _sample_vectors(d: int, rng: np.random.Generator, samples: int) -> np.ndarray:
    basis = np.eye(d, dtype=complex)
    if samples <= 0:
        return basis
    extra = rng.standard_normal((samples, d)) + 1j * rng.standard_normal((samples, d))
    return np.vstack([basis, extra])


def validate_fell_bundle(
    e: FellBundle, samples: int = 32, seed: int = 42, rtol: float = 1e-9
) -> ValidationReport:
    """Check every Fell bundle axiom, with witnesses.

    Norm axioms quantify over all fiber vectors; they are checked on all
    basis vectors plus a fixed-seed random sample per fiber, which the
    C*-identity makes sufficient in practice.
    """
    rep = ValidationReport("fell-bundle")
    g = e.base
    rng = np.random.default_rng(seed)

    rep.record("bilinearity", True, detail="by tensor representation")

    bad = None
    err = 0.0
    for (a, b), ab in g.compose.items():
        for c in g.range_fiber(g.src[b]):
            bc = g.compose[(b, c)]
            lhs = np.einsum("kml,mij->kijl", e.mult[(ab, c)], e.mult[(a, b)])
            rhs = np.einsum("kim,mjl->kijl", e.mult[(a, bc)], e.mult[(b, c)])
            d = float(np.max(np.abs(lhs - rhs)))
            if d > err:
                err, bad = d, (a, b, c)
    rep.record("associativity (ii)", err < 1e-8, bad if err >= 1e-8 else None, f"max dev {err:.2e}")

    bad = None
    for a in g.arrows:
        want = (e.dim[g.inv[a]], e.dim[a])
        if e.invol[a].shape != want:
            bad = a
            break
    rep.record("involution-fiber-map (iv)", bad is None, bad)

    bad = None
    for a in g.arrows:
        u = np.zeros(e.dim[a], dtype=complex)
        u[0] = 1.0
        if not np.allclose(e.fiber_star(a, 1j * u), -1j * e.fiber_star(a, u), atol=1e-10):
            bad = a
            break
    rep.record("involution-conjugate-linear (v)", bad is None, bad)

    bad = None
    err = 0.0
    for (a, b), ab in g.compose.items():
        P = e.mult[(a, b)]
        lhs = np.einsum("lk,kij->lij", e.invol[ab], np.conj(P) if e.invol_conjugates else P)
        rhs = np.einsum("lba,bj,ai->lij", e.mult[(g.inv[b], g.inv[a])], e.invol[b], e.invol[a])
        d = float(np.max(np.abs(lhs - rhs)))
        if d > err:
            err, bad = d, (a, b)
    rep.record("involution-antimultiplicative (vi)", err < 1e-8, bad if err >= 1e-8 else None,
               f"max dev {err:.2e}")

    bad = None
    for a in g.arrows:
        ai = g.inv[a]
        eye = np.eye(e.dim[a])
        J2 = e.invol[ai] @ (np.conj(e.invol[a]) if e.invol_conjugates else e.invol[a])
        if not np.allclose(J2, eye, atol=1e-10):
            bad = a
            break
    rep.record("involution-2-periodic", bad is None, bad)

    unit_ok = True
    witness = None
    algs = {}
    for x in g.units:
        try:
            algs[x] = unit_rep(e, x)
        except DegenerateAlgebraError as exc:
            unit_ok = False
            witness = (x, str(exc))
            break
    rep.record("unit-fibers-cstar (vii)", unit_ok, witness)

    if unit_ok:
        routing = {x: e.unit_fiber_algebra(x) for x in g.units}

        pos_bad = None
        pos_worst = 0.0
        indef = None
        for a in g.arrows:
            x = g.src[a]
            ai = g.inv[a]
            W = np.einsum("cbj,bi->cij", e.mult[(ai, a)], e.invol[a])
            K = np.einsum("cij,cpq->ipjq", W, routing[x].rep)
            d, m = e.dim[a], routing[x].rep.shape[1]
            K = K.reshape(d * m, d * m)
            lam = np.linalg.eigvalsh((K + K.conj().T) / 2)
            low = float(lam.min()) if lam.size else 0.0
            if low < pos_worst:
                pos_worst, pos_bad = low, a
            # definiteness: no nonzero e with e (tensor) identity in ker K
            B = K.reshape(d * m, d, m).transpose(0, 2, 1).reshape(d * m * m, d)
            rank = np.linalg.matrix_rank(B, tol=RANK_TOL * max(1.0, float(np.abs(B).max())))
            if rank < d and indef is None:
                indef = a
        rep.record("fiber-norm-definite", indef is None, indef)
        rep.record("positivity (viii)", pos_worst > -1e-10,
                   pos_bad if pos_worst <= -1e-10 else None, f"min eig {pos_worst:.2e}")

        bad = None
        worst = 0.0
        for a in g.arrows:
            for v in _sample_vectors(e.dim[a], rng, samples):
                ne = fiber_norm(e, a, v)
                ai = g.inv[a]
                prod = e.fiber_mult(ai, a, e.fiber_star(a, v), v)
                nee = routing[g.src[a]].norm(prod)
                dev = abs(nee - ne * ne) / max(1.0, ne * ne)
                if dev > worst:
                    worst, bad = dev, a
        rep.record("cstar-identity (vii)", worst < 1e-8, bad if worst >= 1e-8 else None,
                   f"max rel dev {worst:.2e}")

        bad = None
        for (a, b), ab in g.compose.items():
            for u in _sample_vectors(e.dim[a], rng, max(1, samples // 8)):
                for v in _sample_vectors(e.dim[b], rng, max(1, samples // 8)):
                    lhs = fiber_norm(e, ab, e.fiber_mult(a, b, u, v))
                    rhs = fiber_norm(e, a, u) * fiber_norm(e, b, v)
                    if lhs > rhs * (1 + 1e-8) + 1e-10:
                        bad = (a, b, lhs, rhs)
                        break
                if bad:
                    break
            if bad:
                break
        rep.record("submultiplicative (iii)", bad is None, bad)

    bad = None
    for (a, b), ab in g.compose.items():
        M = e.mult[(a, b)].reshape(e.dim[ab], -1)
        rank = np.linalg.matrix_rank(M, tol=RANK_TOL * max(1.0, float(np.abs(M).max())))
        if rank < e.dim[ab]:
            bad = (a, b, int(rank), e.dim[ab])
            break
    rep.record("fullness (ix)", bad is None, bad)
    return rep
