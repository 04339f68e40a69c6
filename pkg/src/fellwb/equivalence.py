"""Equivalences of Fell systems over Morita-equivalence bibundles.

Data model.  A carrier bundle X assigns a complex fiber to every point
of a bibundle Z.  A right pair action is one tensor per admissible
(point, arrow) pair; a left pair action one tensor per (arrow, point).
The two inner products are stored as explicit sesquilinear tensors per
admissible point pair:

  inner_left[z, z']   requires  anchor_s(z) == anchor_s(z'), takes
      values in the left bundle fiber over lgamma(z, z') -- the unique
      arrow with z == lgamma . z' -- and is linear in the first slot,
      conjugate-linear in the second.

  inner_right[z, z']  requires  anchor_r(z) == anchor_r(z'), takes
      values in the right bundle fiber over rg(z, z') -- the unique
      arrow with z' == z . rg -- and is conjugate-linear in the first
      slot, linear in the second.

The conjugate fiber over a flipped point carries the coordinates of the
conjugated vector, so every structure map below is honestly bilinear in
stored coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fellbundle import FellBundle, Section
from .groupoid import Bibundle, gamma_of, g_of, validate_bibundle
from .validation import StructuralError, ValidationReport

RANK_TOL = 1e-10


@dataclass(eq=False)
class FellPair:
    """A Fell bundle acting on a carrier bundle over a principal space.

    side is "right" (actions indexed by (point, arrow)) or "left"
    (actions indexed by (arrow, point)).  The optional inner product
    (same encoding as in FellEquivalence) supplies the fiber norms; a
    bare pair has no norm datum and norm checks are skipped.
    """

    bibundle: Bibundle
    bundle: FellBundle
    xdim: dict
    action: dict
    side: str = "right"
    inner: dict = None

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise StructuralError("side must be 'left' or 'right'")
        b = self.bibundle
        g = self.bundle.base
        for z in b.points:
            if self.xdim.get(z, 0) < 1:
                raise StructuralError(f"carrier dimension invalid at point {z!r}")
        if self.side == "right":
            wanted = {(z, a) for z in b.points for a in g.arrows if b.anchor_s[z] == g.rng[a]}
            for (z, a), t in self.action.items():
                t = np.asarray(t, dtype=complex)
                out = b.act_right(z, a)
                shape = (self.xdim[out], self.xdim[z], self.bundle.dim[a])
                if t.shape != shape:
                    raise StructuralError(f"action tensor at {(z, a)} has shape {t.shape}, want {shape}")
                self.action[(z, a)] = t
        else:
            wanted = {(a, z) for z in b.points for a in g.arrows if g.src[a] == b.anchor_r[z]}
            for (a, z), t in self.action.items():
                t = np.asarray(t, dtype=complex)
                out = b.act_left(a, z)
                shape = (self.xdim[out], self.bundle.dim[a], self.xdim[z])
                if t.shape != shape:
                    raise StructuralError(f"action tensor at {(a, z)} has shape {t.shape}, want {shape}")
                self.action[(a, z)] = t
        if set(self.action) != wanted:
            missing = wanted - set(self.action)
            extra = set(self.action) - wanted
            raise StructuralError(f"action domain mismatch: missing {missing}, extra {extra}")


def validate_pair(p: FellPair, samples: int = 8, seed: int = 42) -> ValidationReport:
    """Fell pair axioms: bilinearity, associativity, norms, fullness."""
    rep = ValidationReport(f"fell-pair ({p.side})")
    b = p.bibundle
    e = p.bundle
    g = e.base

    rep.record("bilinearity (i)", True, detail="by tensor representation")

    bad = None
    err = 0.0
    if p.side == "right":
        for (z, a) in p.action:
            za = b.act_right(z, a)
            for c in g.range_fiber(g.src[a]):
                ac = g.compose[(a, c)]
                lhs = np.einsum("kim,mjl->kijl", p.action[(z, ac)], e.mult[(a, c)])
                rhs = np.einsum("kml,mij->kijl", p.action[(za, c)], p.action[(z, a)])
                d = float(np.max(np.abs(lhs - rhs)))
                if d > err:
                    err, bad = d, (z, a, c)
    else:
        for (a, z) in p.action:
            az = b.act_left(a, z)
            for c in g.arrows:
                if g.src[c] != g.rng[a]:
                    continue
                ca = g.compose[(c, a)]
                lhs = np.einsum("kml,mij->kijl", p.action[(ca, z)], e.mult[(c, a)])
                rhs = np.einsum("kim,mjl->kijl", p.action[(c, az)], p.action[(a, z)])
                d = float(np.max(np.abs(lhs - rhs)))
                if d > err:
                    err, bad = d, (c, a, z)
    rep.record("associativity (ii)", err < 1e-8, bad if err >= 1e-8 else None, f"max dev {err:.2e}")

    if p.inner is not None:
        from .fellbundle import fiber_norm

        q_norm = _carrier_norm_factory(p)
        rng = np.random.default_rng(seed)
        bad = None
        for key, t in p.action.items():
            z, a = (key if p.side == "right" else (key[1], key[0]))
            out = b.act_right(z, a) if p.side == "right" else b.act_left(key[0], key[1])
            for u in _samples(p.xdim[z], rng, samples):
                for v in _samples(e.dim[a], rng, samples):
                    uv = (
                        np.einsum("kij,i,j->k", t, u, v)
                        if p.side == "right"
                        else np.einsum("kij,i,j->k", t, v, u)
                    )
                    lhs = q_norm(out, uv)
                    rhs = q_norm(z, u) * fiber_norm(e, a, v)
                    if lhs > rhs * (1 + 1e-8) + 1e-10:
                        bad = (key, float(lhs), float(rhs))
                        break
                if bad:
                    break
            if bad:
                break
        rep.record("norm-submultiplicative (iii)", bad is None, bad)
    else:
        rep.record("norm-submultiplicative (iii)", True, detail="skipped: no inner product datum")

    bad = None
    for key, t in p.action.items():
        dout = t.shape[0]
        M = t.reshape(dout, -1)
        rank = np.linalg.matrix_rank(M, tol=RANK_TOL * max(1.0, float(np.abs(M).max())))
        if rank < dout:
            bad = (key, int(rank), dout)
            break
    rep.record("fullness (iv)", bad is None, bad)
    return rep


def _samples(d: int, rng, samples: int) -> np.ndarray:
    basis = np.eye(d, dtype=complex)
    if samples <= 0:
        return basis
    extra = rng.standard_normal((samples, d)) + 1j * rng.standard_normal((samples, d))
    return np.vstack([basis, extra])


def _carrier_norm_factory(p: FellPair):
    """Norm on carrier fibers from the pair's own inner product."""

    def norm(z, u):
        t = p.inner[(z, z)]
        if p.side == "right":
            val = np.einsum("kij,i,j->k", t, np.conj(u), u)
            x = p.bibundle.anchor_s[z]
        else:
            val = np.einsum("kij,i,j->k", t, u, np.conj(u))
            x = p.bibundle.anchor_r[z]
        return float(np.sqrt(max(p.bundle.unit_fiber_algebra(x).norm(val), 0.0)))

    return norm


@dataclass(eq=False)
class FellEquivalence:
    """The full equivalence datum: bibundle, carrier, two actions, two inner products."""

    bibundle: Bibundle
    left_bundle: FellBundle
    right_bundle: FellBundle
    xdim: dict
    left_action: dict  # (gamma, z) -> (xd(gamma z), dF(gamma), xd(z))
    right_action: dict  # (z, g) -> (xd(z g), xd(z), dE(g))
    inner_left: dict  # (z, z') -> (dF(lgamma(z,z')), xd(z), xd(z'))
    inner_right: dict  # (z, z') -> (dE(rg(z,z')), xd(z), xd(z'))

    def __post_init__(self):
        b = self.bibundle
        if not b.equivalence:
            raise StructuralError("FellEquivalence needs an equivalence bibundle")
        self.left_pair = FellPair(b, self.left_bundle, self.xdim, self.left_action, side="left",
                                  inner=self.inner_left)
        self.right_pair = FellPair(b, self.right_bundle, self.xdim, self.right_action, side="right",
                                   inner=self.inner_right)
        wanted_l = {(z, w) for z in b.points for w in b.points if b.anchor_s[z] == b.anchor_s[w]}
        wanted_r = {(z, w) for z in b.points for w in b.points if b.anchor_r[z] == b.anchor_r[w]}
        for (store, wanted, bundle, arrow_of) in (
            (self.inner_left, wanted_l, self.left_bundle, self.lgamma),
            (self.inner_right, wanted_r, self.right_bundle, self.rg),
        ):
            if set(store) != wanted:
                raise StructuralError("inner product domain mismatch")
            for (z, w), t in store.items():
                t = np.asarray(t, dtype=complex)
                shape = (bundle.dim[arrow_of(z, w)], self.xdim[z], self.xdim[w])
                if t.shape != shape:
                    raise StructuralError(f"inner tensor at {(z, w)} has shape {t.shape}, want {shape}")
                store[(z, w)] = t
        self._cache = {}

    def lgamma(self, z, w):
        return gamma_of(self.bibundle, z, w)

    def rg(self, z, w):
        return g_of(self.bibundle, z, w)

    def act_left(self, gamma, f, z, u) -> np.ndarray:
        return np.einsum("kij,i,j->k", self.left_action[(gamma, z)], f, u)

    def act_right(self, z, u, g, e) -> np.ndarray:
        return np.einsum("kij,i,j->k", self.right_action[(z, g)], u, e)

    def ip_left(self, z, u, w, v) -> np.ndarray:
        """F-valued <u, v> for u over z, v over w; conjugates v."""
        return np.einsum("kij,i,j->k", self.inner_left[(z, w)], u, np.conj(v))

    def ip_right(self, z, u, w, v) -> np.ndarray:
        """E-valued <u, v> for u over z, v over w; conjugates u."""
        return np.einsum("kij,i,j->k", self.inner_right[(z, w)], np.conj(u), v)

    def __repr__(self):
        return f"FellEquivalence({len(self.bibundle.points)} points)"


def validate_equivalence(q: FellEquivalence, samples: int = 8, seed: int = 42,
                         rtol: float = 1e-9) -> ValidationReport:
    """All equivalence axioms: module structure, symmetry, positivity,
    definiteness, equivariance, compatibility, fullness of both inner
    products; spans by exact rank, identities on basis tensors."""
    rep = ValidationReport("fell-equivalence")
    b = q.bibundle
    F, E = q.left_bundle, q.right_bundle

    bib = validate_bibundle(b)
    rep.record("bibundle-equivalence", bib.passed, bib.failed_names() or None)

    for sub in (validate_pair(q.left_pair, samples=samples, seed=seed),
                validate_pair(q.right_pair, samples=samples, seed=seed)):
        for c in sub.checks:
            rep.record(f"{sub.subject}: {c.name}", c.passed, c.witness, c.detail)

    # module linearity of the inner products (Def 3.4 (ii))
    bad = None
    err = 0.0
    for (z, w) in q.inner_right:
        for g in E.base.arrows:
            if b.anchor_s[w] != E.base.rng[g]:
                continue
            wg = b.act_right(w, g)
            arrow = q.rg(z, w)
            # <u, v e> == <u, v> e   (coefficients of conj(u_i) v_a e_j)
            lhs = np.einsum("kim,maj->kiaj", q.inner_right[(z, wg)], q.right_action[(w, g)])
            rhs = np.einsum("kmj,mia->kiaj", E.mult[(arrow, g)], q.inner_right[(z, w)])
            d = float(np.max(np.abs(lhs - rhs)))
            if d > err:
                err, bad = d, (z, w, g)
    rep.record("E-linearity (3.4 ii)", err < 1e-8, bad if err >= 1e-8 else None, f"max dev {err:.2e}")

    bad = None
    err = 0.0
    for (z, w) in q.inner_left:
        for gm in F.base.arrows:
            if F.base.src[gm] != b.anchor_r[z]:
                continue
            gz = b.act_left(gm, z)
            arrow = q.lgamma(z, w)
            # <f u, v> == f <u, v>
            lhs = np.einsum("kmj,mai->kaij", q.inner_left[(gz, w)], q.left_action[(gm, z)])
            rhs = np.einsum("kam,mij->kaij", F.mult[(gm, arrow)], q.inner_left[(z, w)])
            d = float(np.max(np.abs(lhs - rhs)))
            if d > err:
                err, bad = d, (gm, z, w)
    rep.record("F-linearity (3.4 ii)", err < 1e-8, bad if err >= 1e-8 else None, f"max dev {err:.2e}")

    # symmetry <u,v>* == <v,u> (Def 3.4 (iii))
    bad = None
    err = 0.0
    for (z, w), t in q.inner_right.items():
        arrow = q.rg(z, w)
        lhs = np.einsum("lk,kij->lij", E.invol[arrow], np.conj(t))
        rhs = q.inner_right[(w, z)].transpose(0, 2, 1)
        d = float(np.max(np.abs(lhs - rhs)))
        if d > err:
            err, bad = d, (z, w)
    for (z, w), t in q.inner_left.items():
        arrow = q.lgamma(z, w)
        lhs = np.einsum("lk,kij->lij", F.invol[arrow], np.conj(t))
        rhs = q.inner_left[(w, z)].transpose(0, 2, 1)
        d = float(np.max(np.abs(lhs - rhs)))
        if d > err:
            err, bad = d, (z, w)
    rep.record("symmetry (3.4 iii)", err < 1e-8, bad if err >= 1e-8 else None, f"max dev {err:.2e}")

    # positivity and definiteness (Def 3.4 (iv))
    worst = 0.0
    bad = None
    indef = None
    for z in b.points:
        x = b.anchor_s[z]
        alg = E.unit_fiber_algebra(x)
        t = q.inner_right[(z, z)]
        K = np.einsum("kij,kpq->ipjq", t, alg.rep)
        d, m = q.xdim[z], alg.rep.shape[1]
        K = K.reshape(d * m, d * m)
        lam = np.linalg.eigvalsh((K + K.conj().T) / 2)
        low = float(lam.min()) if lam.size else 0.0
        if low < worst:
            worst, bad = low, z
        gram_map = t.reshape(-1, q.xdim[z])  # rows (k, i); columns = linear slot
        rank = np.linalg.matrix_rank(gram_map, tol=RANK_TOL * max(1.0, float(np.abs(gram_map).max())))
        if rank < q.xdim[z] and indef is None:
            indef = z
    rep.record("positivity (3.4 iv)", worst > -1e-10, bad if worst <= -1e-10 else None,
               f"min eig {worst:.2e}")
    rep.record("definiteness (3.4 iv)", indef is None, indef)

    # equivariance f (u e) == (f u) e (Def 3.5 (i))
    bad = None
    err = 0.0
    for (gm, z) in q.left_action:
        gz = b.act_left(gm, z)
        for g in E.base.arrows:
            if b.anchor_s[z] != E.base.rng[g]:
                continue
            zg = b.act_right(z, g)
            lhs = np.einsum("kam,mij->kaij", q.left_action[(gm, zg)], q.right_action[(z, g)])
            rhs = np.einsum("kmj,mai->kaij", q.right_action[(gz, g)], q.left_action[(gm, z)])
            d = float(np.max(np.abs(lhs - rhs)))
            if d > err:
                err, bad = d, (gm, z, g)
    rep.record("equivariance (3.5 i)", err < 1e-8, bad if err >= 1e-8 else None, f"max dev {err:.2e}")

    # compatibility <u,v>_F w == u <v,w>_E (Def 3.5 (ii))
    bad = None
    err = 0.0
    for z in b.points:
        for w in b.points:
            if b.anchor_s[z] != b.anchor_s[w]:
                continue
            for v in b.points:
                if b.anchor_r[w] != b.anchor_r[v]:
                    continue
                gm = q.lgamma(z, w)
                g = q.rg(w, v)
                lhs = np.einsum("kam,aij->kijm", q.left_action[(gm, v)], q.inner_left[(z, w)])
                rhs = np.einsum("kia,ajm->kijm", q.right_action[(z, g)], q.inner_right[(w, v)])
                d = float(np.max(np.abs(lhs - rhs)))
                if d > err:
                    err, bad = d, (z, w, v)
    rep.record("compatibility (3.5 ii)", err < 1e-8, bad if err >= 1e-8 else None, f"max dev {err:.2e}")

    # fullness of both inner products (Def 3.5 (iii), (iv))
    bad = None
    for (z, w), t in q.inner_left.items():
        dout = t.shape[0]
        rank = np.linalg.matrix_rank(t.reshape(dout, -1), tol=RANK_TOL * max(1.0, float(np.abs(t).max())))
        if rank < dout:
            bad = ("left", z, w, int(rank), dout)
            break
    if bad is None:
        for (z, w), t in q.inner_right.items():
            dout = t.shape[0]
            rank = np.linalg.matrix_rank(t.reshape(dout, -1), tol=RANK_TOL * max(1.0, float(np.abs(t).max())))
            if rank < dout:
                bad = ("right", z, w, int(rank), dout)
                break
    rep.record("fullness (3.5 iii-iv)", bad is None, bad)
    return rep


def conjugate_pair(p: FellPair) -> FellPair:
    """The conjugate of a Fell pair over the flipped points.

    A right pair becomes a left pair via e . flip(u) = flip(u . e*); a
    left pair becomes a right pair via flip(u) . e = flip(e* . u).
    Conjugate fibers carry conjugated coordinates, so conjugating twice
    returns the original action tables.  The inner product transports
    unchanged: the value of <flip(u), flip(v)> over (z, w) is the value
    of <u, v> on the other side, which lives over the same arrow.
    """
    b = p.bibundle
    e = p.bundle
    g = e.base
    action = {}
    if p.side == "right":
        for z in b.points:
            for c in g.arrows:
                if g.src[c] != b.anchor_s[z]:
                    continue
                # left action at (c, flip(z)) built from the right action at (z, inv c)
                t = p.action[(z, g.inv[c])]
                J = e.invol[c]
                action[(c, z)] = np.einsum("kij,jb->kbi", np.conj(t), np.conj(J))
        side = "left"
    else:
        for z in b.points:
            for c in g.arrows:
                if g.rng[c] != b.anchor_r[z]:
                    continue
                # right action at (flip(z), c) built from the left action at (inv c, z)
                t = p.action[(g.inv[c], z)]
                J = e.invol[c]
                action[(z, c)] = np.einsum("kai,ab->kib", np.conj(t), np.conj(J))
        side = "right"
    inner = dict(p.inner) if p.inner is not None else None
    xb = _flip_bibundle(b)
    return FellPair(xb, e, dict(p.xdim), action, side=side, inner=inner)


def _flip_bibundle(b: Bibundle) -> Bibundle:
    """The inverse bibundle keeping the original point labels."""
    from .groupoid import invert_bibundle

    return invert_bibundle(b, require_equivalence=False)


# -- sections of the carrier ------------------------------------------


@dataclass(eq=False)
class EquivSection:
    """A section of the carrier bundle: one fiber vector per point."""

    equiv: FellEquivalence
    data: dict = None

    def __post_init__(self):
        full = {}
        src = self.data or {}
        for z in self.equiv.bibundle.points:
            v = src.get(z)
            if v is None:
                v = np.zeros(self.equiv.xdim[z], dtype=complex)
            else:
                v = np.asarray(v, dtype=complex)
                if v.shape != (self.equiv.xdim[z],):
                    raise StructuralError(f"carrier vector at {z!r} has wrong length")
            full[z] = v
        self.data = full

    def __getitem__(self, z) -> np.ndarray:
        return self.data[z]

    def __add__(self, other: "EquivSection") -> "EquivSection":
        return EquivSection(self.equiv, {z: self.data[z] + other.data[z] for z in self.data})

    def __rmul__(self, c) -> "EquivSection":
        return EquivSection(self.equiv, {z: c * v for z, v in self.data.items()})

    @staticmethod
    def random(q: FellEquivalence, rng: np.random.Generator) -> "EquivSection":
        return EquivSection(
            q,
            {
                z: rng.standard_normal(q.xdim[z]) + 1j * rng.standard_normal(q.xdim[z])
                for z in q.bibundle.points
            },
        )

    def conj_flip(self) -> "EquivSection":
        """Coordinates of the flipped section over the inverse points."""
        return EquivSection(self.equiv, {z: np.conj(v) for z, v in self.data.items()})


def bimodule_act(arg1, arg2, side: str) -> EquivSection:
    """Module actions of the two section algebras on carrier sections.

    side == "left":  (xi . phi)(z)  = sum over Gamma^rr(z) of
                     xi(gamma) phi(gamma^-1 z) haar(gamma)
    side == "right": (phi . eta)(z) = sum over G^rs(z) of
                     phi(z g) eta(g^-1) haar(g)
    """
    if side == "left":
        xi, phi = arg1, arg2
        if not isinstance(xi, Section) or not isinstance(phi, EquivSection):
            raise StructuralError("left action takes (Section over left bundle, EquivSection)")
        q = phi.equiv
        if xi.bundle is not q.left_bundle:
            raise StructuralError("left action section must live on the left bundle")
        b = q.bibundle
        gg = q.left_bundle.base
        out = {}
        for z in b.points:
            acc = np.zeros(q.xdim[z], dtype=complex)
            for gm in gg.range_fiber(b.anchor_r[z]):
                w = b.act_left(gg.inv[gm], z)
                acc += gg.haar[gm] * q.act_left(gm, xi.data[gm], w, phi.data[w])
            out[z] = acc
        return EquivSection(q, out)
    if side == "right":
        phi, eta = arg1, arg2
        if not isinstance(phi, EquivSection) or not isinstance(eta, Section):
            raise StructuralError("right action takes (EquivSection, Section over right bundle)")
        q = phi.equiv
        if eta.bundle is not q.right_bundle:
            raise StructuralError("right action section must live on the right bundle")
        b = q.bibundle
        gg = q.right_bundle.base
        out = {}
        for z in b.points:
            acc = np.zeros(q.xdim[z], dtype=complex)
            for g in gg.range_fiber(b.anchor_s[z]):
                zg = b.act_right(z, g)
                acc += gg.haar[g] * q.act_right(zg, phi.data[zg], gg.inv[g], eta.data[gg.inv[g]])
            out[z] = acc
        return EquivSection(q, out)
    raise StructuralError("side must be 'left' or 'right'")


def bimodule_inner(phi: EquivSection, psi: EquivSection, side: str,
                   check_representatives: bool = True, rtol: float = 1e-12) -> Section:
    """Section-algebra-valued inner products of carrier sections.

    side == "left" gives the left-bundle-valued product

      <phi, psi>(gamma) = sum over G^rs(z) of
          ip_left(phi(z g), psi(gamma^-1 z g)) haar(g),   rr(z) = rng(gamma),

    side == "right" the right-bundle-valued product

      <phi, psi>(g) = sum over Gamma^rr(z) of
          ip_right(phi(gamma^-1 z), psi(gamma^-1 z g)) haar(gamma),
          rs(z) = rng(g).

    Both are independent of the fiber representative z; all admissible
    representatives are evaluated and compared (to rtol) unless
    check_representatives is False.  An empty fiber is a domain error.
    """
    q = phi.equiv
    if psi.equiv is not q:
        raise StructuralError("sections live on different equivalences")
    b = q.bibundle

    if side == "left":
        F = q.left_bundle
        gamma_base = F.base
        g_base = q.right_bundle.base
        out = {}
        for gm in gamma_base.arrows:
            reps = [z for z in b.points if b.anchor_r[z] == gamma_base.rng[gm]]
            if not reps:
                raise StructuralError(f"empty fiber over unit {gamma_base.rng[gm]!r}")
            values = []
            for z in reps:
                acc = np.zeros(F.dim[gm], dtype=complex)
                for g in g_base.range_fiber(b.anchor_s[z]):
                    zg = b.act_right(z, g)
                    w = b.act_left(gamma_base.inv[gm], zg)
                    acc += g_base.haar[g] * q.ip_left(zg, phi.data[zg], w, psi.data[w])
                values.append(acc)
                if not check_representatives:
                    break
            for v in values[1:]:
                if not np.allclose(v, values[0], rtol=rtol, atol=1e-10):
                    raise ValueError(f"representative dependence at arrow {gm!r}")
            out[gm] = values[0]
        return Section(F, out)

    if side == "right":
        E = q.right_bundle
        g_base = E.base
        gamma_base = q.left_bundle.base
        out = {}
        for g in g_base.arrows:
            reps = [z for z in b.points if b.anchor_s[z] == g_base.rng[g]]
            if not reps:
                raise StructuralError(f"empty fiber over unit {g_base.rng[g]!r}")
            values = []
            for z in reps:
                acc = np.zeros(E.dim[g], dtype=complex)
                for gm in gamma_base.range_fiber(b.anchor_r[z]):
                    w = b.act_left(gamma_base.inv[gm], z)
                    wg = b.act_right(w, g)
                    acc += gamma_base.haar[gm] * q.ip_right(w, phi.data[w], wg, psi.data[wg])
                values.append(acc)
                if not check_representatives:
                    break
            for v in values[1:]:
                if not np.allclose(v, values[0], rtol=rtol, atol=1e-10):
                    raise ValueError(f"representative dependence at arrow {g!r}")
            out[g] = values[0]
        return Section(E, out)
    raise StructuralError("side must be 'left' or 'right'")


def r_x_representation(q: FellEquivalence, xi: Section, x) -> np.ndarray:
    """Matrix of xi acting on the carrier sections over the fiber at a
    right unit x, in orthonormal coordinates.

    The space is the direct sum over z with anchor_s(z) == x of
    (carrier fiber) tensor (unit fiber representation space), with the
    Gram form from the right inner product localized at x.
    """
    if xi.bundle is not q.left_bundle:
        raise StructuralError("r_x_representation acts with left-bundle sections")
    builder = _r_block(q, x)
    return builder.matrix(xi)


class _RBlock:
    def __init__(self, q: FellEquivalence, x):
        b = q.bibundle
        fiber = [z for z in b.points if b.anchor_s[z] == x]
        if not fiber:
            raise StructuralError(f"empty point fiber over right unit {x!r}")
        self.q = q
        self.x = x
        self.fiber = fiber
        gamma_base = q.left_bundle.base
        alg = q.right_bundle.unit_fiber_algebra(x)
        self.rep = alg.rep
        self.m = alg.rep.shape[1]
        self.offsets = {}
        off = 0
        for z in fiber:
            self.offsets[z] = off
            off += q.xdim[z] * self.m
        self.dim = off

        # weights: image of the left Haar measure under gamma -> gamma^-1 z0
        z0 = fiber[0]
        weight = {}
        for gm in gamma_base.range_fiber(b.anchor_r[z0]):
            weight[b.act_left(gamma_base.inv[gm], z0)] = gamma_base.haar[gm]
        gram = np.zeros((self.dim, self.dim), dtype=complex)
        for z in fiber:
            t = q.inner_right[(z, z)]
            K = np.einsum("kij,kpq->ipjq", t, self.rep) * weight[z]
            d = q.xdim[z]
            o = self.offsets[z]
            gram[o : o + d * self.m, o : o + d * self.m] = K.reshape(d * self.m, d * self.m)
        lam, U = np.linalg.eigh((gram + gram.conj().T) / 2)
        scale = max(lam.max(initial=0.0), 1.0)
        keep = lam > RANK_TOL * scale
        lam, U = lam[keep], U[:, keep]
        self._S = np.sqrt(lam)[:, None] * U.conj().T
        self._Sinv = U * (1.0 / np.sqrt(lam))[None, :]

    def matrix(self, xi: Section) -> np.ndarray:
        q = self.q
        b = q.bibundle
        gamma_base = q.left_bundle.base
        B = np.zeros((self.dim, self.dim), dtype=complex)
        eye = np.eye(self.m)
        for z in self.fiber:
            for gm in gamma_base.range_fiber(b.anchor_r[z]):
                w = b.act_left(gamma_base.inv[gm], z)
                vec = xi.data[gm]
                if not np.any(vec):
                    continue
                mat = np.einsum("kij,i->kj", q.left_action[(gm, w)], vec) * gamma_base.haar[gm]
                oz, ow = self.offsets[z], self.offsets[w]
                dz, dw = q.xdim[z], q.xdim[w]
                B[oz : oz + dz * self.m, ow : ow + dw * self.m] += np.kron(mat, eye)
        return self._S @ B @ self._Sinv


def _r_block(q: FellEquivalence, x) -> _RBlock:
    key = ("r_block", x)
    if key not in q._cache:
        q._cache[key] = _RBlock(q, x)
    return q._cache[key]


# -- standard constructions -------------------------------------------


def self_equivalence(e: FellBundle) -> FellEquivalence:
    """A Fell system is equivalent to itself over its identity bibundle.

    The carrier is the bundle acting on itself; the inner products are
    <e1, e2>_F = e1 e2* and <e1, e2>_E = e1* e2.
    """
    from .groupoid import identity_bibundle

    g = e.base
    b = identity_bibundle(g)
    xdim = {z: e.dim[z] for z in b.points}
    left_action = {(gm, z): e.mult[(gm, z)] for (gm, z) in g.compose}
    right_action = {(z, a): e.mult[(z, a)] for (z, a) in g.compose}
    inner_left = {}
    inner_right = {}
    for z in g.arrows:
        for w in g.arrows:
            if g.src[z] == g.src[w]:
                wi = g.inv[w]
                inner_left[(z, w)] = np.einsum("kia,aj->kij", e.mult[(z, wi)], e.invol[w])
            if g.rng[z] == g.rng[w]:
                zi = g.inv[z]
                inner_right[(z, w)] = np.einsum("kaj,ai->kij", e.mult[(zi, w)], e.invol[z])
    return FellEquivalence(b, e, e, xdim, left_action, right_action, inner_left, inner_right)


def scalar_equivalence(b: Bibundle) -> FellEquivalence:
    """Trivial line bundles on both sides of any equivalence bibundle."""
    from .fellbundle import trivial_bundle

    F = trivial_bundle(b.left)
    E = trivial_bundle(b.right)
    one3 = np.ones((1, 1, 1), dtype=complex)
    xdim = {z: 1 for z in b.points}
    left_action = {key: one3.copy() for key in b.left_action}
    right_action = {key: one3.copy() for key in b.right_action}
    inner_left = {
        (z, w): one3.copy()
        for z in b.points
        for w in b.points
        if b.anchor_s[z] == b.anchor_s[w]
    }
    inner_right = {
        (z, w): one3.copy()
        for z in b.points
        for w in b.points
        if b.anchor_r[z] == b.anchor_r[w]
    }
    return FellEquivalence(b, F, E, xdim, left_action, right_action, inner_left, inner_right)
