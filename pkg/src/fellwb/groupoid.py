"""Finite groupoids with Haar weights, and the bibundles between them.

Conventions used throughout the package:

  * compose(a, b) is defined exactly when src(a) == rng(b); the composite
    ab has rng(ab) == rng(a) and src(ab) == src(b).
  * range_fiber(x)  = {g : rng(g) == x}   (written G^x)
  * source_fiber(x) = {g : src(g) == x}   (written G_x)
  * haar is a strictly positive weight per arrow, left invariant:
    haar(g*h) == haar(h) whenever src(g) == rng(h).  The counting weight
    (all ones) always qualifies.

A bibundle Z between groupoids carries two anchor maps and two commuting
actions.  Right principality means that two points over the same left
unit differ by exactly one right arrow; a bibundle that is principal on
both sides is an equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .validation import PrincipalityError, StructuralError, ValidationReport, close


@dataclass(eq=False)
class FiniteGroupoid:
    units: tuple
    arrows: tuple
    src: dict
    rng: dict
    compose: dict
    inv: dict
    haar: dict = None

    def __post_init__(self):
        self.units = tuple(self.units)
        self.arrows = tuple(self.arrows)
        if self.haar is None:
            self.haar = {a: 1.0 for a in self.arrows}
        self._check_structure()
        self._range_fibers = {u: tuple(a for a in self.arrows if self.rng[a] == u) for u in self.units}
        self._source_fibers = {u: tuple(a for a in self.arrows if self.src[a] == u) for u in self.units}
        self._identities = self._find_identities()

    def _check_structure(self) -> None:
        arrow_set = set(self.arrows)
        if len(arrow_set) != len(self.arrows):
            raise StructuralError("duplicate arrow labels")
        if len(set(self.units)) != len(self.units):
            raise StructuralError("duplicate unit labels")
        for table, name in ((self.src, "src"), (self.rng, "rng")):
            for a in self.arrows:
                if a not in table:
                    raise StructuralError(f"{name} undefined for arrow {a!r}")
                if table[a] not in set(self.units):
                    raise StructuralError(f"{name}[{a!r}] is not a unit")
        for a in self.arrows:
            if a not in self.inv or self.inv[a] not in arrow_set:
                raise StructuralError(f"inv undefined or invalid for arrow {a!r}")
            if a not in self.haar:
                raise StructuralError(f"haar undefined for arrow {a!r}")
        for (a, b), c in self.compose.items():
            if a not in arrow_set or b not in arrow_set or c not in arrow_set:
                raise StructuralError(f"compose entry {(a, b)} -> {c!r} references unknown arrows")

    def _find_identities(self) -> dict:
        ids = {}
        for u in self.units:
            loops = [a for a in self.arrows if self.src[a] == u and self.rng[a] == u]
            for e in loops:
                if all(self.compose.get((e, h)) == h for h in self._range_fibers[u]) and all(
                    self.compose.get((h, e)) == h for h in self._source_fibers[u]
                ):
                    ids[u] = e
                    break
        return ids

    # -- basic queries ------------------------------------------------

    def composable(self, a, b) -> bool:
        return self.src[a] == self.rng[b]

    def mul(self, a, b):
        try:
            return self.compose[(a, b)]
        except KeyError:
            raise StructuralError(f"arrows {a!r}, {b!r} are not composable or table incomplete")

    def identity(self, u):
        try:
            return self._identities[u]
        except KeyError:
            raise StructuralError(f"unit {u!r} has no identity arrow")

    def range_fiber(self, x) -> tuple:
        return self._range_fibers[x]

    def source_fiber(self, x) -> tuple:
        return self._source_fibers[x]

    def is_unit_arrow(self, a) -> bool:
        return a in self._identities.values()

    @property
    def n_arrows(self) -> int:
        return len(self.arrows)

    def __repr__(self):
        return f"FiniteGroupoid({len(self.units)} units, {len(self.arrows)} arrows)"


def validate_groupoid(g: FiniteGroupoid, rtol: float = 1e-9) -> ValidationReport:
    """Check every groupoid axiom, reporting a witness for each violation."""
    rep = ValidationReport("groupoid")
    arrow_set = set(g.arrows)

    # compose defined exactly on range-source matched pairs
    bad_domain = None
    for a in g.arrows:
        for b in g.arrows:
            should = g.src[a] == g.rng[b]
            does = (a, b) in g.compose
            if should != does:
                bad_domain = (a, b, "missing" if should else "spurious")
                break
        if bad_domain:
            break
    rep.record("composability-domain", bad_domain is None, bad_domain)

    bad = None
    for (a, b), c in g.compose.items():
        if g.src[c] != g.src[b] or g.rng[c] != g.rng[a]:
            bad = (a, b, c)
            break
    rep.record("composite-src-rng", bad is None, bad)

    bad = None
    for a in g.arrows:
        for b in g._range_fibers.get(g.src[a], ()):
            ab = g.compose.get((a, b))
            if ab is None:
                continue
            for c in g._range_fibers.get(g.src[b], ()):
                bc = g.compose.get((b, c))
                if bc is None or g.compose.get((ab, c)) != g.compose.get((a, bc)):
                    bad = (a, b, c)
                    break
            if bad:
                break
        if bad:
            break
    rep.record("associativity", bad is None, bad)

    missing = [u for u in g.units if u not in g._identities]
    rep.record("identities", not missing, missing[0] if missing else None)

    bad = None
    for a in g.arrows:
        ia = g.inv[a]
        if g.inv[ia] != a or g.src[ia] != g.rng[a] or g.rng[ia] != g.src[a]:
            bad = a
            break
        ru, su = g.rng[a], g.src[a]
        if ru in g._identities and su in g._identities:
            if g.compose.get((a, ia)) != g._identities[ru] or g.compose.get((ia, a)) != g._identities[su]:
                bad = a
                break
    rep.record("inverses", bad is None, bad)

    bad = None
    for a in g.arrows:
        w = g.haar[a]
        if not (isinstance(w, (int, float)) and w > 0):
            bad = (a, w)
            break
    rep.record("haar-positive", bad is None, bad)

    bad = None
    for a in g.arrows:
        for b in g._range_fibers.get(g.src[a], ()):
            ab = g.compose.get((a, b))
            if ab is not None and not close(g.haar[ab], g.haar[b], rtol=rtol):
                bad = (a, b, g.haar[ab], g.haar[b])
                break
        if bad:
            break
    rep.record("haar-left-invariance", bad is None, bad)

    assert arrow_set  # non-empty groupoids only
    return rep


# -- generators -------------------------------------------------------


def pair_groupoid(n: int) -> FiniteGroupoid:
    """The pair groupoid on n units: arrows (i, j), (i, j)*(j, k) = (i, k)."""
    if n < 1:
        raise ValueError("pair_groupoid needs n >= 1")
    units = tuple(range(n))
    arrows = tuple((i, j) for i in range(n) for j in range(n))
    src = {(i, j): j for (i, j) in arrows}
    rng = {(i, j): i for (i, j) in arrows}
    compose = {((i, j), (j, k)): (i, k) for i in range(n) for j in range(n) for k in range(n)}
    inv = {(i, j): (j, i) for (i, j) in arrows}
    return FiniteGroupoid(units, arrows, src, rng, compose, inv)


def cyclic_groupoid(n: int) -> FiniteGroupoid:
    """Z/n as a groupoid with a single unit."""
    if n < 1:
        raise ValueError("cyclic_groupoid needs n >= 1")
    units = (0,)
    arrows = tuple(range(n))
    src = {a: 0 for a in arrows}
    rng = {a: 0 for a in arrows}
    compose = {(a, b): (a + b) % n for a in arrows for b in arrows}
    inv = {a: (-a) % n for a in arrows}
    return FiniteGroupoid(units, arrows, src, rng, compose, inv)


def point_groupoid() -> FiniteGroupoid:
    return pair_groupoid(1)


def product_group(g1: FiniteGroupoid, g2: FiniteGroupoid) -> FiniteGroupoid:
    """Direct product of two one-unit groupoids."""
    if len(g1.units) != 1 or len(g2.units) != 1:
        raise StructuralError("product_group expects one-unit groupoids")
    arrows = tuple((a, b) for a in g1.arrows for b in g2.arrows)
    compose = {
        ((a, b), (c, d)): (g1.compose[(a, c)], g2.compose[(b, d)])
        for (a, b) in arrows
        for (c, d) in arrows
    }
    inv = {(a, b): (g1.inv[a], g2.inv[b]) for (a, b) in arrows}
    return FiniteGroupoid(
        (0,), arrows, {x: 0 for x in arrows}, {x: 0 for x in arrows}, compose, inv
    )


def klein_four_group() -> FiniteGroupoid:
    return product_group(cyclic_groupoid(2), cyclic_groupoid(2))


def action_groupoid(group: FiniteGroupoid, points, action: dict) -> FiniteGroupoid:
    """Transformation groupoid of a right action of a one-unit groupoid.

    action maps (point, group arrow) -> point and must satisfy
    x . e == x and (x . g) . h == x . (g h).  Arrows of the result are
    (x, g) with rng = x and src = x . g.
    """
    if len(group.units) != 1:
        raise StructuralError("action_groupoid expects a one-unit groupoid")
    points = tuple(points)
    e = group.identity(group.units[0])
    for x in points:
        for gm in group.arrows:
            if (x, gm) not in action or action[(x, gm)] not in set(points):
                raise StructuralError(f"action undefined or out of range at {(x, gm)}")
    for x in points:
        if action[(x, e)] != x:
            raise StructuralError(f"identity does not act trivially on {x!r}")
        for a in group.arrows:
            for b in group.arrows:
                if action[(action[(x, a)], b)] != action[(x, group.compose[(a, b)])]:
                    raise StructuralError(f"not a group action at {(x, a, b)}")
    arrows = tuple((x, gm) for x in points for gm in group.arrows)
    src = {(x, gm): action[(x, gm)] for (x, gm) in arrows}
    rng = {(x, gm): x for (x, gm) in arrows}
    compose = {}
    for (x, a) in arrows:
        for (y, b) in arrows:
            if action[(x, a)] == y:
                compose[((x, a), (y, b))] = (x, group.compose[(a, b)])
    inv = {(x, a): (action[(x, a)], group.inv[a]) for (x, a) in arrows}
    return FiniteGroupoid(points, arrows, src, rng, compose, inv)


def groupoids_equal(g1: FiniteGroupoid, g2: FiniteGroupoid) -> bool:
    """Structural equality of the underlying tables."""
    if g1 is g2:
        return True
    return (
        g1.units == g2.units
        and g1.arrows == g2.arrows
        and g1.src == g2.src
        and g1.rng == g2.rng
        and g1.compose == g2.compose
        and g1.inv == g2.inv
        and g1.haar == g2.haar
    )


def orbits(g: FiniteGroupoid) -> list:
    """Partition of the units into orbits (connected components)."""
    parent = {u: u for u in g.units}

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for a in g.arrows:
        ra, sa = find(g.rng[a]), find(g.src[a])
        if ra != sa:
            parent[ra] = sa
    groups = {}
    for u in g.units:
        groups.setdefault(find(u), []).append(u)
    return sorted(groups.values(), key=lambda c: str(c))


def isotropy(g: FiniteGroupoid, u) -> tuple:
    return tuple(a for a in g.arrows if g.src[a] == u and g.rng[a] == u)


# -- bibundles --------------------------------------------------------


@dataclass(eq=False)
class Bibundle:
    left: FiniteGroupoid
    right: FiniteGroupoid
    points: tuple
    anchor_r: dict  # point -> left unit
    anchor_s: dict  # point -> right unit
    left_action: dict  # (left arrow, point) -> point
    right_action: dict  # (point, right arrow) -> point
    equivalence: bool = False

    def __post_init__(self):
        self.points = tuple(self.points)
        pts = set(self.points)
        for z in self.points:
            if self.anchor_r.get(z) not in set(self.left.units):
                raise StructuralError(f"anchor_r invalid at {z!r}")
            if self.anchor_s.get(z) not in set(self.right.units):
                raise StructuralError(f"anchor_s invalid at {z!r}")
        for (gm, z), w in self.left_action.items():
            if z not in pts or w not in pts or gm not in set(self.left.arrows):
                raise StructuralError(f"left_action entry {(gm, z)} invalid")
        for (z, gm), w in self.right_action.items():
            if z not in pts or w not in pts or gm not in set(self.right.arrows):
                raise StructuralError(f"right_action entry {(z, gm)} invalid")

    def act_left(self, gm, z):
        try:
            return self.left_action[(gm, z)]
        except KeyError:
            raise StructuralError(f"left action undefined at {(gm, z)}")

    def act_right(self, z, gm):
        try:
            return self.right_action[(z, gm)]
        except KeyError:
            raise StructuralError(f"right action undefined at {(z, gm)}")

    def r_fiber(self, y) -> tuple:
        return tuple(z for z in self.points if self.anchor_r[z] == y)

    def s_fiber(self, x) -> tuple:
        return tuple(z for z in self.points if self.anchor_s[z] == x)

    def __repr__(self):
        kind = "equivalence" if self.equivalence else "bibundle"
        return f"Bibundle({len(self.points)} points, {kind})"


def validate_bibundle(b: Bibundle) -> ValidationReport:
    rep = ValidationReport("bibundle")
    G, H = b.left, b.right

    bad = None
    for gm in G.arrows:
        for z in b.points:
            should = G.src[gm] == b.anchor_r[z]
            if should != ((gm, z) in b.left_action):
                bad = (gm, z)
                break
        if bad:
            break
    for z in b.points:
        for gm in H.arrows:
            should = b.anchor_s[z] == H.rng[gm]
            if should != ((z, gm) in b.right_action):
                bad = bad or (z, gm)
                break
        if bad:
            break
    rep.record("action-domains", bad is None, bad)
    if bad is not None:
        return rep

    bad = None
    for (gm, z), w in b.left_action.items():
        if b.anchor_r[w] != G.rng[gm] or b.anchor_s[w] != b.anchor_s[z]:
            bad = (gm, z)
            break
    rep.record("left-action-anchors", bad is None, bad)

    bad = None
    for (z, gm), w in b.right_action.items():
        if b.anchor_s[w] != H.src[gm] or b.anchor_r[w] != b.anchor_r[z]:
            bad = (z, gm)
            break
    rep.record("right-action-anchors", bad is None, bad)

    bad = None
    for z in b.points:
        if b.act_left(G.identity(b.anchor_r[z]), z) != z or b.act_right(z, H.identity(b.anchor_s[z])) != z:
            bad = z
            break
    rep.record("unit-actions", bad is None, bad)

    bad = None
    for (g2, z) in list(b.left_action):
        w = b.left_action[(g2, z)]
        for g1 in G.arrows:
            if G.src[g1] != G.rng[g2]:
                continue
            if b.act_left(G.mul(g1, g2), z) != b.act_left(g1, w):
                bad = (g1, g2, z)
                break
        if bad:
            break
    rep.record("left-action-associativity", bad is None, bad)

    bad = None
    for (z, g1) in list(b.right_action):
        w = b.right_action[(z, g1)]
        for g2 in H.arrows:
            if H.src[g1] != H.rng[g2]:
                continue
            if b.act_right(z, H.mul(g1, g2)) != b.act_right(w, g2):
                bad = (z, g1, g2)
                break
        if bad:
            break
    rep.record("right-action-associativity", bad is None, bad)

    bad = None
    for (gm, z) in list(b.left_action):
        for h in H.arrows:
            if b.anchor_s[z] != H.rng[h]:
                continue
            if b.act_right(b.act_left(gm, z), h) != b.act_left(gm, b.act_right(z, h)):
                bad = (gm, z, h)
                break
        if bad:
            break
    rep.record("actions-commute", bad is None, bad)

    bad = None
    for z in b.points:
        for w in b.points:
            if b.anchor_r[z] != b.anchor_r[w]:
                continue
            sols = [h for h in H.arrows if (z, h) in b.right_action and b.right_action[(z, h)] == w]
            if len(sols) != 1:
                bad = (z, w, len(sols))
                break
        if bad:
            break
    rep.record("right-principality", bad is None, bad)

    if b.equivalence:
        bad = None
        for z in b.points:
            for w in b.points:
                if b.anchor_s[z] != b.anchor_s[w]:
                    continue
                sols = [gm for gm in G.arrows if (gm, w) in b.left_action and b.left_action[(gm, w)] == z]
                if len(sols) != 1:
                    bad = (z, w, len(sols))
                    break
            if bad:
                break
        rep.record("left-principality", bad is None, bad)
        surj = all(b.r_fiber(y) for y in G.units) and all(b.s_fiber(x) for x in H.units)
        rep.record("anchors-surjective", surj, None)
    return rep


def gamma_of(b: Bibundle, z, zp):
    """The unique left arrow with z == gamma . zp (needs same right anchor)."""
    if b.anchor_s[z] != b.anchor_s[zp]:
        raise StructuralError(f"gamma_of needs matching right anchors, got {z!r}, {zp!r}")
    sols = [gm for gm in b.left.arrows if (gm, zp) in b.left_action and b.left_action[(gm, zp)] == z]
    if len(sols) != 1:
        raise PrincipalityError(f"left fiber over ({z!r}, {zp!r}) has {len(sols)} solutions")
    return sols[0]


def g_of(b: Bibundle, z, zp):
    """The unique right arrow with zp == z . g (needs same left anchor)."""
    if b.anchor_r[z] != b.anchor_r[zp]:
        raise StructuralError(f"g_of needs matching left anchors, got {z!r}, {zp!r}")
    sols = [gm for gm in b.right.arrows if (z, gm) in b.right_action and b.right_action[(z, gm)] == zp]
    if len(sols) != 1:
        raise PrincipalityError(f"right fiber over ({z!r}, {zp!r}) has {len(sols)} solutions")
    return sols[0]


def identity_bibundle(g: FiniteGroupoid) -> Bibundle:
    """The groupoid acting on its own arrow space by multiplication."""
    left_action = {(a, z): g.compose[(a, z)] for (a, z) in g.compose}
    right_action = {(z, a): g.compose[(z, a)] for (z, a) in g.compose}
    return Bibundle(
        g, g, g.arrows, dict(g.rng), dict(g.src), left_action, right_action, equivalence=True
    )


def invert_bibundle(b: Bibundle, require_equivalence: bool = True) -> Bibundle:
    """Swap the roles of the two groupoids.

    Points of the inverse are the same labels; the new left action of the
    old right groupoid is g . z := z . inv(g), the new right action is
    z . gamma := inv(gamma) . z.
    """
    if require_equivalence and not b.equivalence:
        raise StructuralError("invert_bibundle needs an equivalence bibundle")
    left_action = {}
    for (z, gm), w in b.right_action.items():
        left_action[(b.right.inv[gm], z)] = w
    right_action = {}
    for (gm, z), w in b.left_action.items():
        right_action[(z, b.left.inv[gm])] = w
    return Bibundle(
        b.right,
        b.left,
        b.points,
        dict(b.anchor_s),
        dict(b.anchor_r),
        left_action,
        right_action,
        equivalence=b.equivalence,
    )


def compose_bibundles(b1: Bibundle, b2: Bibundle) -> Bibundle:
    """Fibered product of bibundles, quotiented by the middle groupoid.

    Points are orbits of {(z1, z2) : anchor_s(z1) == anchor_r(z2)} under
    (z1, z2) ~ (z1 . g, inv(g) . z2); the orbit relation is closed with
    union-find.  Orbit labels are consecutive integers in order of first
    appearance; the members of each orbit are kept on the result for
    isomorphism checks.
    """
    if not groupoids_equal(b1.right, b2.left):
        raise StructuralError("compose_bibundles: middle groupoids differ")
    mid = b1.right
    pairs = [
        (z1, z2) for z1 in b1.points for z2 in b2.points if b1.anchor_s[z1] == b2.anchor_r[z2]
    ]
    parent = {p: p for p in pairs}

    def find(p):
        while parent[p] != p:
            parent[p] = parent[parent[p]]
            p = parent[p]
        return p

    def union(p, q):
        rp, rq = find(p), find(q)
        if rp != rq:
            parent[rp] = rq

    for (z1, z2) in pairs:
        for gm in mid.arrows:
            if (z1, gm) in b1.right_action and (mid.inv[gm], z2) in b2.left_action:
                union((z1, z2), (b1.right_action[(z1, gm)], b2.left_action[(mid.inv[gm], z2)]))

    labels = {}
    members: dict[int, list] = {}
    for p in pairs:
        r = find(p)
        if r not in labels:
            labels[r] = len(labels)
            members[labels[r]] = []
        members[labels[r]].append(p)
    points = tuple(range(len(labels)))
    of_pair = {p: labels[find(p)] for p in pairs}

    anchor_r = {}
    anchor_s = {}
    for p, lab in of_pair.items():
        anchor_r[lab] = b1.anchor_r[p[0]]
        anchor_s[lab] = b2.anchor_s[p[1]]
    left_action = {}
    for (gm, z1), w in b1.left_action.items():
        for p, lab in of_pair.items():
            if p[0] == z1:
                left_action[(gm, lab)] = of_pair[(w, p[1])]
    right_action = {}
    for (z2, gm), w in b2.right_action.items():
        for p, lab in of_pair.items():
            if p[1] == z2:
                right_action[(lab, gm)] = of_pair[(p[0], w)]
    out = Bibundle(
        b1.left,
        b2.right,
        points,
        anchor_r,
        anchor_s,
        left_action,
        right_action,
        equivalence=b1.equivalence and b2.equivalence,
    )
    out.members = members
    return out


def from_strict_morphism(dom: FiniteGroupoid, cod: FiniteGroupoid, f: dict) -> Bibundle:
    """Bibundle induced by a groupoid homomorphism f: dom -> cod.

    Points are pairs (y, g) with y a unit of dom and g an arrow of cod
    whose range is the image unit of y.  Right principality always holds;
    the equivalence flag is set from an exhaustive left-principality check.
    """
    for a in dom.arrows:
        if f.get(a) not in set(cod.arrows):
            raise StructuralError(f"morphism undefined or invalid at {a!r}")
    for a in dom.arrows:
        for b in dom.arrows:
            if dom.composable(a, b):
                if not cod.composable(f[a], f[b]) or f[dom.mul(a, b)] != cod.mul(f[a], f[b]):
                    raise StructuralError(f"not a homomorphism at {(a, b)}")
        if f[dom.inv[a]] != cod.inv[f[a]]:
            raise StructuralError(f"morphism does not respect inv at {a!r}")
    f_unit = {}
    for y in dom.units:
        img = f[dom.identity(y)]
        if not cod.is_unit_arrow(img):
            raise StructuralError(f"image of identity at {y!r} is not an identity")
        f_unit[y] = cod.rng[img]

    points = tuple((y, g) for y in dom.units for g in cod.arrows if f_unit[y] == cod.rng[g])
    anchor_r = {(y, g): y for (y, g) in points}
    anchor_s = {(y, g): cod.src[g] for (y, g) in points}
    left_action = {}
    for gm in dom.arrows:
        for (y, g) in points:
            if dom.src[gm] == y:
                left_action[(gm, (y, g))] = (dom.rng[gm], cod.mul(f[gm], g))
    right_action = {}
    for (y, g) in points:
        for h in cod.arrows:
            if cod.composable(g, h):
                right_action[((y, g), h)] = (y, cod.mul(g, h))
    b = Bibundle(dom, cod, points, anchor_r, anchor_s, left_action, right_action)
    b.equivalence = validate_bibundle(
        Bibundle(dom, cod, points, anchor_r, anchor_s, left_action, right_action, equivalence=True)
    ).passed
    return b


def pair_to_point_bibundle(n: int) -> Bibundle:
    """The n-point equivalence between pair_groupoid(n) and the point."""
    left = pair_groupoid(n)
    right = point_groupoid()
    points = tuple(range(n))
    anchor_r = {z: z for z in points}
    anchor_s = {z: 0 for z in points}
    left_action = {((i, j), j): i for i in range(n) for j in range(n)}
    right_action = {(z, (0, 0)): z for z in points}
    return Bibundle(left, right, points, anchor_r, anchor_s, left_action, right_action, equivalence=True)


def bibundle_isomorphism(b1: Bibundle, b2: Bibundle) -> dict | None:
    """Explicit point bijection intertwining anchors and both actions.

    Returns the bijection as a dict, or None when no isomorphism exists.
    Backtracking search; the anchor signature prunes hard enough for the
    sizes this package deals with.
    """
    if not groupoids_equal(b1.left, b2.left) or not groupoids_equal(b1.right, b2.right):
        return None
    if len(b1.points) != len(b2.points):
        return None

    def signature(b, z):
        return (b.anchor_r[z], b.anchor_s[z])

    candidates = {
        z: [w for w in b2.points if signature(b2, w) == signature(b1, z)] for z in b1.points
    }

    assignment: dict = {}
    used: set = set()

    def consistent(z, w):
        for (gm, z0), z1 in b1.left_action.items():
            if z0 == z and z1 in assignment:
                if b2.left_action.get((gm, w)) != assignment[z1]:
                    return False
            if z1 == z and z0 in assignment:
                if b2.left_action.get((gm, assignment[z0])) != w:
                    return False
        for (z0, gm), z1 in b1.right_action.items():
            if z0 == z and z1 in assignment:
                if b2.right_action.get((w, gm)) != assignment[z1]:
                    return False
            if z1 == z and z0 in assignment:
                if b2.right_action.get((assignment[z0], gm)) != w:
                    return False
        return True

    order = sorted(b1.points, key=lambda z: len(candidates[z]))

    def search(i):
        if i == len(order):
            return True
        z = order[i]
        for w in candidates[z]:
            if w in used or not consistent(z, w):
                continue
            assignment[z] = w
            used.add(w)
            if search(i + 1):
                return True
            del assignment[z]
            used.discard(w)
        return False

    if not search(0):
        return None
    for (gm, z), z1 in b1.left_action.items():
        if b2.left_action.get((gm, assignment[z])) != assignment[z1]:
            return None
    for (z, gm), z1 in b1.right_action.items():
        if b2.right_action.get((assignment[z], gm)) != assignment[z1]:
            return None
    return dict(assignment)
