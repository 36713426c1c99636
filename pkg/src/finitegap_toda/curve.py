"""Hyperelliptic curve y^2 = prod(z - E_m), cut systems and square-root branches.

Sheet convention: on the cut plane the branch of y that behaves like
+z^(p+1) at infinity is called the upper sheet.  The point at infinity of
the *other* sheet (where y ~ -z^(p+1)) is the one called ``P_inf_plus``
throughout the package; the third-kind differential has residue +1 there.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CutConstructionFailed, StepTooLarge, ValidationError

# Relative minimum separation between branch points.
MIN_SEPARATION = 1e-6


@dataclass(frozen=True)
class CurveSpec:
    """Branch points E_0..E_{2p+1} of a nonsingular hyperelliptic curve."""

    branch_points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.branch_points, dtype=complex).ravel().copy()
        pts.setflags(write=False)
        object.__setattr__(self, "branch_points", pts)
        validate_branch_points(pts)

    @classmethod
    def from_points(cls, points: Sequence) -> "CurveSpec":
        return cls(np.asarray(points, dtype=complex))

    @property
    def genus(self) -> int:
        return len(self.branch_points) // 2 - 1

    @property
    def diameter(self) -> float:
        e = self.branch_points
        return float(np.max(np.abs(e[:, None] - e[None, :])))

    @property
    def scale(self) -> float:
        """A size used to make tolerances relative: 1 + max |E_m|."""
        return 1.0 + float(np.max(np.abs(self.branch_points)))

    def eval_R(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.ones_like(z)
        for e in self.branch_points:
            out = out * (z - e)
        return out

    def poly_R(self) -> np.ndarray:
        """Coefficients of R, highest power first."""
        return np.poly(self.branch_points)

    def clearance(self, z):
        """Distance from z to the nearest branch point."""
        z = np.asarray(z, dtype=complex)
        return np.min(np.abs(z[..., None] - self.branch_points), axis=-1)

    def __repr__(self):
        pts = ", ".join(f"{e:.6g}" for e in self.branch_points)
        return f"CurveSpec(genus={self.genus}, E=[{pts}])"


def validate_branch_points(pts: np.ndarray) -> None:
    if pts.size < 2 or pts.size % 2:
        raise ValidationError(
            f"need an even number >= 2 of branch points, got {pts.size}")
    bad = np.flatnonzero(~np.isfinite(pts))
    if bad.size:
        raise ValidationError(f"branch point {bad[0]} is not finite")
    diam = float(np.max(np.abs(pts[:, None] - pts[None, :])))
    eps = MIN_SEPARATION * max(diam, 1e-300)
    for i, j in itertools.combinations(range(pts.size), 2):
        if abs(pts[i] - pts[j]) <= eps:
            raise ValidationError(
                f"branch point {j} coincides with branch point {i} "
                f"(separation {abs(pts[i] - pts[j]):.3g})")


# ---------------------------------------------------------------- geometry

def _cross(u, v):
    return u.real * v.imag - u.imag * v.real


def segments_intersect(p1, p2, q1, q2, tol=0.0) -> bool:
    """True if closed segments [p1,p2] and [q1,q2] meet (touching counts)."""
    d1 = _cross(q2 - q1, p1 - q1)
    d2 = _cross(q2 - q1, p2 - q1)
    d3 = _cross(p2 - p1, q1 - p1)
    d4 = _cross(p2 - p1, q2 - p1)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and \
            ((d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)):
        return True
    # collinear / touching configurations
    return (point_segment_distance(p1, q1, q2) <= tol
            or point_segment_distance(p2, q1, q2) <= tol
            or point_segment_distance(q1, p1, p2) <= tol
            or point_segment_distance(q2, p1, p2) <= tol)


def point_segment_distance(x, p, q):
    x = np.asarray(x, dtype=complex)
    d = q - p
    if d == 0:
        return np.abs(x - p)
    t = np.clip(((x - p) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
    return np.abs(x - (p + t * d))


# ---------------------------------------------------------------- cuts

@dataclass(frozen=True)
class CutSystem:
    """p+1 disjoint straight segments, each joining two branch points."""

    spec: CurveSpec
    pairs: tuple

    def __post_init__(self):
        n = len(self.spec.branch_points)
        pairs = tuple(tuple(int(i) for i in pr) for pr in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        seen = []
        for k, pr in enumerate(pairs):
            if len(pr) != 2:
                raise ValidationError(f"cut {k} must name exactly two branch points")
            for i in pr:
                if not 0 <= i < n:
                    raise ValidationError(f"cut {k} references branch point {i} out of range")
                if i in seen:
                    raise ValidationError(f"cut {k} reuses branch point {i}")
                seen.append(i)
        if len(seen) != n:
            missing = sorted(set(range(n)) - set(seen))
            raise ValidationError(f"branch point {missing[0]} is not on any cut")
        e = self.spec.branch_points
        tol = 1e-12 * self.spec.diameter
        for (k, (i, j)), (l, (u, v)) in itertools.combinations(enumerate(pairs), 2):
            if segments_intersect(e[i], e[j], e[u], e[v], tol):
                raise ValidationError(f"cut {k} intersects cut {l}")
        for k, (i, j) in enumerate(pairs):
            for m in range(n):
                if m in (i, j):
                    continue
                if point_segment_distance(e[m], e[i], e[j]) <= tol:
                    raise ValidationError(f"cut {k} passes through branch point {m}")

    @property
    def endpoints(self):
        e = self.spec.branch_points
        return [(e[i], e[j]) for i, j in self.pairs]

    def sqrt_R(self, z):
        """Branch of sqrt(R) holomorphic off the cuts with y ~ +z^(p+1) at infinity."""
        z = np.asarray(z, dtype=complex)
        out = np.ones_like(z)
        for u, v in self.endpoints:
            mid = 0.5 * (u + v)
            half = 0.5 * (v - u)
            w = (z - mid) / half
            out = out * half * np.sqrt(w - 1.0) * np.sqrt(w + 1.0)
        return out

    def upper_point(self, z) -> "SurfacePoint":
        return SurfacePoint(complex(z), complex(self.sqrt_R(z)))

    def crossed_by(self, z0, z1) -> list:
        """Indices of cuts met by the segment [z0, z1]."""
        return [k for k, (u, v) in enumerate(self.endpoints)
                if segments_intersect(z0, z1, u, v)]


def _matchings(items):
    if not items:
        yield []
        return
    first = items[0]
    for k in range(1, len(items)):
        rest = items[1:k] + items[k + 1:]
        for m in _matchings(rest):
            yield [(first, items[k])] + m


def _crossing_free(e, pairs, tol):
    for (i, j), (u, v) in itertools.combinations(pairs, 2):
        if segments_intersect(e[i], e[j], e[u], e[v], tol):
            return False
    for i, j in pairs:
        for m in range(len(e)):
            if m not in (i, j) and point_segment_distance(e[m], e[i], e[j]) <= tol:
                return False
    return True


def default_cuts(spec: CurveSpec) -> CutSystem:
    """Lexicographic consecutive pairing, falling back to a shortest crossing-free matching."""
    e = spec.branch_points
    tol = 1e-12 * spec.diameter
    order = sorted(range(len(e)), key=lambda i: (e[i].real, e[i].imag))
    pairs = [(order[2 * k], order[2 * k + 1]) for k in range(len(e) // 2)]
    if _crossing_free(e, pairs, tol):
        return CutSystem(spec, tuple(pairs))

    def length(prs):
        return sum(abs(e[i] - e[j]) for i, j in prs)

    if spec.genus <= 4:
        best = None
        for m in _matchings(order):
            if _crossing_free(e, m, tol) and (best is None or length(m) < length(best) - 1e-15):
                best = m
        if best is None:
            raise CutConstructionFailed("no crossing-free straight-segment pairing exists")
        return CutSystem(spec, tuple(best))

    # greedy swap repair for large genus
    pairs = list(pairs)
    for _ in range(50 * len(pairs) ** 2):
        bad = None
        for (k, (i, j)), (l, (u, v)) in itertools.combinations(enumerate(pairs), 2):
            if segments_intersect(e[i], e[j], e[u], e[v], tol):
                bad = (k, l)
                break
        if bad is None:
            if _crossing_free(e, pairs, tol):
                return CutSystem(spec, tuple(pairs))
            break
        k, l = bad
        (i, j), (u, v) = pairs[k], pairs[l]
        options = [((i, u), (j, v)), ((i, v), (j, u))]
        options.sort(key=length)
        pairs[k], pairs[l] = options[0]
    raise CutConstructionFailed("greedy repair did not reach a crossing-free pairing")


# ---------------------------------------------------------------- surface points

@dataclass(frozen=True)
class SurfacePoint:
    """A finite point (z, y) with y^2 = R(z)."""

    z: complex
    y: complex

    def check(self, spec: CurveSpec, tol: float = 1e-9) -> bool:
        r = complex(spec.eval_R(self.z))
        return abs(self.y ** 2 - r) <= tol * max(1.0, abs(r), abs(self.y) ** 2)

    def involution(self) -> "SurfacePoint":
        return SurfacePoint(self.z, -self.y)


@dataclass(frozen=True)
class SurfacePath:
    """Polyline in the z-plane together with the value of y at its first node."""

    nodes: tuple
    y_start: complex

    @classmethod
    def straight(cls, z0, z1, y0):
        return cls((complex(z0), complex(z1)), complex(y0))


def anchor_point(spec: CurveSpec, cuts: CutSystem) -> SurfacePoint:
    """Reference point far from all branch points on the upper sheet."""
    z = 2.0 * spec.scale
    return SurfacePoint(complex(z), complex(cuts.sqrt_R(z)))


def continue_y(spec: CurveSpec, path: SurfacePath, return_all: bool = False):
    """Analytic continuation of y along a polyline by nearest-root selection.

    Segments are bisected until every step is short compared with the
    distance to the nearest branch point.
    """
    nodes = np.asarray(path.nodes, dtype=complex)
    y = complex(path.y_start)
    r0 = complex(spec.eval_R(nodes[0]))
    if abs(y * y - r0) > 1e-8 * max(1.0, abs(r0)):
        raise ValidationError("y_start does not lie on the curve")
    values = [y]
    for z0, z1 in zip(nodes[:-1], nodes[1:]):
        y = _continue_segment(spec, z0, z1, y)
        values.append(y)
    end = SurfacePoint(complex(nodes[-1]), y)
    return (end, values) if return_all else end


def _continue_segment(spec, z0, z1, y, depth=0):
    c0 = float(spec.clearance(z0))
    c1 = float(spec.clearance(z1))
    floor = 1e-12 * spec.scale
    if min(c0, c1) <= floor:
        raise StepTooLarge("path node coincides with a branch point")
    if abs(z1 - z0) > 0.25 * min(c0, c1):
        if depth > 60:
            raise StepTooLarge("could not refine the path near a branch point")
        zm = 0.5 * (z0 + z1)
        y = _continue_segment(spec, z0, zm, y, depth + 1)
        return _continue_segment(spec, zm, z1, y, depth + 1)
    w = complex(np.sqrt(spec.eval_R(z1)))
    d_plus, d_minus = abs(w - y), abs(w + y)
    if abs(d_plus - d_minus) <= 1e-10 * (abs(w) + abs(y)):
        raise StepTooLarge("square-root candidates are equidistant")
    return w if d_plus < d_minus else -w


def ray_sqrt(z, points, center):
    """Product of sqrt(z - e) over ``points`` with each cut a ray pointing away from ``center``.

    The product is holomorphic on any convex set that contains ``center``
    and none of the points.
    """
    z = np.asarray(z, dtype=complex)
    out = np.ones_like(z)
    for e in np.atleast_1d(points):
        d = e - center
        r = d / abs(d) if d != 0 else 1.0
        om = np.sqrt(-r)
        out = out * om * np.sqrt((z - e) / (om * om))
    return out


# ---------------------------------------------------------------- documents

def load_curve_document(doc) -> tuple:
    """Parse ``{"branch_points": [[re, im], ...], "cuts": [[i, j], ...]}``."""
    if not isinstance(doc, dict):
        raise ValidationError("curve document must be a JSON object")
    if "branch_points" not in doc:
        raise ValidationError("curve document lacks 'branch_points'")
    raw = doc["branch_points"]
    if not isinstance(raw, list):
        raise ValidationError("'branch_points' must be a list")
    pts = []
    for k, item in enumerate(raw):
        if (not isinstance(item, (list, tuple)) or len(item) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in item)):
            raise ValidationError(f"branch point {k} must be a pair [re, im] of numbers")
        pts.append(complex(item[0], item[1]))
    spec = CurveSpec.from_points(pts)
    cuts = None
    if doc.get("cuts") is not None:
        raw_cuts = doc["cuts"]
        if not isinstance(raw_cuts, list):
            raise ValidationError("'cuts' must be a list")
        pairs = []
        for k, item in enumerate(raw_cuts):
            if (not isinstance(item, (list, tuple)) or len(item) != 2
                    or not all(isinstance(x, int) and not isinstance(x, bool) for x in item)):
                raise ValidationError(f"cut {k} must be a pair [i, j] of integers")
            pairs.append(tuple(item))
        if len(pairs) != spec.genus + 1:
            raise ValidationError(
                f"expected {spec.genus + 1} cuts, got {len(pairs)}")
        cuts = CutSystem(spec, tuple(pairs))
    return spec, cuts


def curve_document(spec: CurveSpec, cuts: CutSystem | None = None) -> dict:
    doc = {"branch_points": [[float(e.real), float(e.imag)] for e in spec.branch_points]}
    if cuts is not None:
        doc["cuts"] = [list(p) for p in cuts.pairs]
    return doc
