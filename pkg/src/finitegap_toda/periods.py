"""Homology basis, periods, third-kind differential, Abel map and Riemann constants.

Cycles are built from a *chain*: an ordering e_0, ..., e_{2p+1} of the branch
points such that consecutive pairs (e_{2k}, e_{2k+1}) are the cuts and the
straight segments between consecutive chain points form a simple polyline.
The loop around segment k (lifted to the surface) is called c_k; consecutive
loops meet once, at their shared branch point, and the canonical basis is

    a_j = c_{2j-1},    b_j = c_{2j} + c_{2j+2} + ... + c_{2p}.

Loop integrals use the parametrisation z = m + d cosh(rho + i theta) of an
ellipse with foci at the segment ends, on which dz / y = i dtheta / q(z) with
q a single-valued square root of the remaining factors of R.  The trapezoid
rule in theta is therefore spectrally accurate.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .curve import CurveSpec, CutSystem, SurfacePoint, default_cuts, point_segment_distance, ray_sqrt
from .errors import (BasisConstructionFailed, NotSymplectic, NumericalError, PathInvalid,
                     SingularC, ValidationError)

ELLIPSE_INFLATION = 1.2          # semi-major axis / half focal distance
MIN_JOUKOWSKI_CLEARANCE = 0.02   # smallest admissible elliptic radius of a foreign branch point


# ---------------------------------------------------------------- quadrature helpers

@lru_cache(maxsize=None)
def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def adaptive_gauss(fun, lo, hi, tol, order=20, max_depth=40):
    """Adaptive composite Gauss-Legendre on [lo, hi] for vector-valued ``fun``.

    ``fun`` maps an array of parameters to an array of shape (len(t), m).
    """
    x, w = _gauss(order)

    def rule(a, b):
        return (b - a) * (w @ fun(a + (b - a) * x))

    total = 0.0
    stack = [(lo, hi, rule(lo, hi), 0)]
    scale = max(1.0, float(np.max(np.abs(stack[0][2]))))
    while stack:
        a, b, whole, depth = stack.pop()
        mid = 0.5 * (a + b)
        left, right = rule(a, mid), rule(mid, b)
        if np.max(np.abs(left + right - whole)) <= tol * scale or depth >= max_depth:
            if depth >= max_depth:
                raise NumericalError("adaptive quadrature did not converge")
            total = total + left + right
        else:
            stack.append((mid, b, right, depth + 1))
            stack.append((a, mid, left, depth + 1))
    return total


def inverse_sqrt_series(points, terms):
    """Taylor coefficients s_j of prod_m (1 - E_m t)^(-1/2)."""
    return _power_series_exp(points, terms, -0.5)


def sqrt_series(points, terms):
    """Taylor coefficients of prod_m (1 - E_m t)^(1/2)."""
    return _power_series_exp(points, terms, 0.5)


def _power_series_exp(points, terms, power):
    # log prod (1 - E t)^power = -power * sum_k P_k t^k / k
    pts = np.asarray(points, dtype=complex)
    logc = np.zeros(terms + 1, dtype=complex)
    for k in range(1, terms + 1):
        logc[k] = -power * np.sum(pts ** k) / k
    out = np.zeros(terms + 1, dtype=complex)
    out[0] = 1.0
    for k in range(1, terms + 1):
        j = np.arange(1, k + 1)
        out[k] = np.sum(j * logc[j] * out[k - j]) / k
    return out


# ---------------------------------------------------------------- segment integrals

def _moment_rows(z, p):
    """Stack z^0..z^p along the last axis."""
    return np.power.outer(np.asarray(z, dtype=complex), np.arange(p + 1))


def segment_moments(spec: CurveSpec, z0, z1, y0=None, start_branch=None, end_branch=None,
                    tol=1e-13):
    """Integrals of z^k dz / y (k = 0..p) along the straight segment [z0, z1].

    y is continued analytically from ``y0`` at z0.  When z0 (or z1) is a
    branch point its index must be given; a square-root substitution removes
    the endpoint singularity.  When both ends are branch points the sheet is
    fixed arbitrarily and the caller supplies the sign.  Returns (moments, y1).
    """
    e = spec.branch_points
    p = spec.genus
    z0, z1 = complex(z0), complex(z1)
    centre = 0.5 * (z0 + z1)
    skip = {i for i in (start_branch, end_branch) if i is not None}
    others = np.array([e[m] for m in range(len(e)) if m not in skip])
    lim = 1e-9 * spec.scale
    for m in range(len(e)):
        if m not in skip and point_segment_distance(e[m], z0, z1) < lim:
            raise PathInvalid(f"segment passes through branch point {m}")

    if start_branch is not None and end_branch is not None:
        half = 0.5 * (z1 - z0)

        def fun(th):
            z = centre - half * np.cos(th)
            return _moment_rows(z, p) / ray_sqrt(z, others, centre)[:, None]

        # y = i * half * sin(th) * q(z) with z running from z0 (th=0) to z1 (th=pi)
        # dz = half sin(th) dth, hence dz / y = -i dth / q
        val = -1j * adaptive_gauss(fun, 0.0, np.pi, tol)
        return val, 0.0j

    if start_branch is not None:
        root = np.sqrt(z1 - z0)

        def fun(s):
            z = z0 + (z1 - z0) * s * s
            return _moment_rows(z, p) / ray_sqrt(z, others, centre)[:, None]

        val = 2.0 * root * adaptive_gauss(fun, 0.0, 1.0, tol)
        y1 = root * complex(ray_sqrt(z1, others, centre))
        return val, y1

    if y0 is None:
        raise ValidationError("y0 is required when the segment does not start at a branch point")

    if end_branch is not None:
        root = np.sqrt(z0 - z1)
        q0 = root * complex(ray_sqrt(z0, others, centre))
        sigma = _match_sign(q0, y0)

        def fun(s):
            z = z1 + (z0 - z1) * s * s
            return _moment_rows(z, p) / ray_sqrt(z, others, centre)[:, None]

        val = -(2.0 * root / sigma) * adaptive_gauss(fun, 0.0, 1.0, tol)
        return val, 0.0j

    q0 = complex(ray_sqrt(z0, others, centre))
    sigma = _match_sign(q0, y0)
    dz = z1 - z0

    def fun(t):
        z = z0 + dz * t
        return _moment_rows(z, p) / (sigma * ray_sqrt(z, others, centre))[:, None]

    val = dz * adaptive_gauss(fun, 0.0, 1.0, tol)
    y1 = sigma * complex(ray_sqrt(z1, others, centre))
    return val, y1


def _match_sign(candidate, target):
    if abs(candidate - target) <= abs(candidate + target):
        if abs(candidate - target) > 1e-6 * max(abs(candidate), 1e-300):
            raise PathInvalid("y value at path start does not match the curve")
        return 1.0
    if abs(candidate + target) > 1e-6 * max(abs(candidate), 1e-300):
        raise PathInvalid("y value at path start does not match the curve")
    return -1.0


def plan_path(spec: CurveSpec, z0, z1, exclude=()):
    """Polyline from z0 to z1 keeping away from branch points not in ``exclude``."""
    e = spec.branch_points
    sep = min(abs(a - b) for a, b in itertools.combinations(e, 2))
    need = 0.2 * sep
    z0, z1 = complex(z0), complex(z1)

    def ok(a, b, ends):
        for m in range(len(e)):
            if m in ends:
                continue
            # an endpoint may itself sit close to a branch point
            thresh = min(need, 0.5 * abs(e[m] - a), 0.5 * abs(e[m] - b))
            if point_segment_distance(e[m], a, b) < thresh:
                return False
        return True

    if ok(z0, z1, set(exclude)):
        return [z0, z1]
    mid = 0.5 * (z0 + z1)
    normal = 1j * (z1 - z0)
    if normal == 0:
        return [z0, z1]
    for t in (0.3, -0.3, 0.6, -0.6, 1.0, -1.0, 1.6, -1.6):
        w = mid + t * normal
        if spec.clearance(w) < need or not (np.isfinite(w.real) and np.isfinite(w.imag)):
            continue
        first = {i for i in exclude if abs(e[i] - z0) < 1e-15 * spec.scale}
        last = {i for i in exclude if abs(e[i] - z1) < 1e-15 * spec.scale}
        if ok(z0, w, first) and ok(w, z1, last):
            return [z0, w, z1]
    raise PathInvalid("no admissible detour between path endpoints")


# ---------------------------------------------------------------- homology basis

@dataclass(frozen=True)
class HomologyBasis:
    """Chain of branch points plus orientation data for the loops c_k."""

    spec: CurveSpec
    cuts: CutSystem
    chain: tuple            # branch point indices e_0..e_{2p+1}
    cut_order: tuple        # cut indices in chain order
    sigmas: tuple           # sign of q on each loop c_k
    rhos: tuple             # elliptic radius of each loop
    b_sign: float = 1.0     # -1 when all b cycles were reversed to make Im tau > 0
    base_index: int = 0

    @property
    def genus(self):
        return self.spec.genus

    def segment(self, k):
        """Endpoints (u, v) of loop c_k, k = 1..2p+1."""
        e = self.spec.branch_points
        return e[self.chain[k - 1]], e[self.chain[k]]

    def others(self, k):
        e = self.spec.branch_points
        ends = (self.chain[k - 1], self.chain[k])
        return np.array([e[m] for m in range(len(e)) if m not in ends])


def _joukowski_radius(x, u, v):
    m, d = 0.5 * (u + v), 0.5 * (v - u)
    w = (x - m) / d
    r = np.arccosh(w + 0j)
    return abs(r.real)


def _chain_ok(spec, chain):
    e = spec.branch_points
    segs = [(chain[k], chain[k + 1]) for k in range(len(chain) - 1)]
    tol = 1e-12 * spec.diameter
    for (i, (a, b)), (j, (c, d)) in itertools.combinations(enumerate(segs), 2):
        if j == i + 1:
            # share b == c; must not fold back onto each other
            u1 = (e[a] - e[b]) / abs(e[a] - e[b])
            u2 = (e[d] - e[c]) / abs(e[d] - e[c])
            if abs(u1 - u2) < 1e-9:
                return False
            continue
        from .curve import segments_intersect
        if segments_intersect(e[a], e[b], e[c], e[d], tol):
            return False
    worst = np.inf
    for a, b in segs:
        for m in range(len(e)):
            if m in (a, b):
                continue
            worst = min(worst, _joukowski_radius(e[m], e[a], e[b]))
    return worst >= MIN_JOUKOWSKI_CLEARANCE


def _chains(cuts: CutSystem):
    pairs = list(cuts.pairs)
    n = len(pairs)
    for perm in itertools.permutations(range(n)):
        for flips in itertools.product((False, True), repeat=n):
            chain = []
            for k, f in zip(perm, flips):
                i, j = pairs[k]
                chain.extend((j, i) if f else (i, j))
            yield perm, tuple(chain)


def build_basis(spec: CurveSpec, cuts: CutSystem | None = None) -> HomologyBasis:
    """Choose the chain and the loop orientations.

    The cut order given by ``cuts`` is kept when a simple chain exists in that
    order; otherwise the shortest admissible reordering is used.
    """
    if cuts is None:
        cuts = default_cuts(spec)
    e = spec.branch_points
    p = spec.genus
    if p == 0:
        return HomologyBasis(spec, cuts, tuple(cuts.pairs[0]), (0,), (), ())

    def length(chain):
        return sum(abs(e[chain[2 * k + 1]] - e[chain[2 * k + 2]]) for k in range(p))

    best = None
    n_pairs = len(cuts.pairs)
    for perm, chain in _chains(cuts):
        if n_pairs > 5 and perm != tuple(range(n_pairs)):
            break
        if not _chain_ok(spec, chain):
            continue
        key = (perm != tuple(range(n_pairs)), length(chain))
        if best is None or key < best[0]:
            best = (key, perm, chain)
    if best is None:
        raise BasisConstructionFailed("no simple chain of segments through the branch points")
    _, perm, chain = best

    rho0 = float(np.arccosh(ELLIPSE_INFLATION))
    rhos = []
    for k in range(1, 2 * p + 2):
        u, v = e[chain[k - 1]], e[chain[k]]
        others = [e[m] for m in range(len(e)) if m not in (chain[k - 1], chain[k])]
        clear = min(_joukowski_radius(x, u, v) for x in others)
        rhos.append(min(rho0, 0.5 * clear))

    # orientations: make every consecutive intersection number equal
    sig = [1.0]
    for k in range(1, 2 * p + 1):
        u, v = e[chain[k - 1]], e[chain[k]]
        w = e[chain[k + 1]]
        q_k = complex(ray_sqrt(v, [x for m, x in enumerate(e) if m not in (chain[k - 1], chain[k])],
                               0.5 * (u + v)))
        q_n = complex(ray_sqrt(v, [x for m, x in enumerate(e) if m not in (chain[k], chain[k + 1])],
                               0.5 * (v + w)))
        d_k, d_n = 0.5 * (v - u), 0.5 * (w - v)
        s = np.imag(-np.conj(d_k * sig[-1] * q_k) * d_n * q_n)
        if s == 0:
            raise BasisConstructionFailed("degenerate intersection at a chain vertex")
        sig.append(1.0 if s > 0 else -1.0)
    return HomologyBasis(spec, cuts, tuple(chain), tuple(perm), tuple(sig), tuple(rhos))


def loop_moments(basis: HomologyBasis, k: int, tol=1e-13, rho=None, n_start=32, n_max=1 << 16):
    """Loop integrals of z^j dz / y, j = 0..p, over c_k by the doubling trapezoid rule."""
    u, v = basis.segment(k)
    others = basis.others(k)
    sigma = basis.sigmas[k - 1]
    rho = basis.rhos[k - 1] if rho is None else rho
    m, d = 0.5 * (u + v), 0.5 * (v - u)
    p = basis.genus

    def trap(n):
        th = 2.0 * np.pi * np.arange(n) / n
        z = m + d * np.cosh(rho + 1j * th)
        vals = _moment_rows(z, p) / ray_sqrt(z, others, m)[:, None]
        return (1j / sigma) * (2.0 * np.pi / n) * vals.sum(axis=0)

    n = n_start
    prev = trap(n)
    while n < n_max:
        n *= 2
        cur = trap(n)
        if np.max(np.abs(cur - prev)) <= tol * max(1.0, float(np.max(np.abs(cur)))):
            return cur, n
        prev = cur
    raise NumericalError(f"loop quadrature on cycle {k} did not converge")


# ---------------------------------------------------------------- period data

@dataclass(frozen=True)
class PeriodData:
    basis: HomologyBasis = field(repr=False)
    a_moments: np.ndarray       # (p, p+1): a-periods of z^k dz/y
    b_moments: np.ndarray       # (p, p+1)
    C_matrix: np.ndarray        # C[j, k] = a_k-period of z^j dz / y
    c_rows: np.ndarray          # inverse of C; row j gives omega_j in the eta basis
    tau: np.ndarray
    omega3_coeffs: np.ndarray   # ascending coefficients of the monic numerator of omega^(3)
    lam: np.ndarray
    U0_3: np.ndarray
    nodes_used: tuple = ()
    e3_0: complex = 0j
    A_inf: np.ndarray = None     # Abel map of P_inf_plus
    Xi: np.ndarray = None
    inf_path: tuple = ()

    @property
    def genus(self):
        return self.basis.genus

    @property
    def spec(self):
        return self.basis.spec


def compute_periods(spec: CurveSpec, basis: HomologyBasis | None = None, tol_quad=1e-12,
                    with_abel=True) -> PeriodData:
    if basis is None:
        basis = build_basis(spec)
    p = spec.genus
    if p == 0:
        e = spec.branch_points
        empty = np.zeros((0, 1), dtype=complex)
        return PeriodData(basis, empty, empty, np.zeros((0, 0), complex), np.zeros((0, 0), complex),
                          np.zeros((0, 0), complex), np.ones(1, complex), np.zeros(0, complex),
                          np.zeros(0, complex), (), _genus0_e3(e), np.zeros(0, complex),
                          np.zeros(0, complex))
    loops, nodes = [], []
    for k in range(1, 2 * p + 2):
        val, n = loop_moments(basis, k, tol=0.1 * tol_quad)
        loops.append(val)
        nodes.append(n)
    loops = np.array(loops)
    a_mom = np.array([loops[2 * j - 2] for j in range(1, p + 1)])
    b_mom = np.array([loops[2 * j - 1::2][: p - j + 1].sum(axis=0) for j in range(1, p + 1)])
    data = _assemble(basis, a_mom, b_mom, tuple(nodes))
    if np.all(np.linalg.eigvalsh(data.tau.imag + data.tau.imag.T) < 0):
        basis = replace(basis, b_sign=-basis.b_sign)
        data = _assemble(basis, a_mom, -b_mom, tuple(nodes))
    eig = np.linalg.eigvalsh(0.5 * (data.tau.imag + data.tau.imag.T))
    if eig[0] <= 0:
        raise BasisConstructionFailed("Im tau is not positive definite for the constructed cycles")
    if with_abel:
        data = _attach_infinity(data, tol_quad)
        data = replace(data, Xi=riemann_constants(data))
    return data


def _genus0_e3(e):
    # omega^(3) = dz / y on a genus-0 curve: integral from E_0 to P_inf_plus, regularised
    spec = CurveSpec.from_points(e)
    basis = HomologyBasis(spec, default_cuts(spec), (0, 1), (0,), (), ())
    dummy = PeriodData(basis, np.zeros((0, 1)), np.zeros((0, 1)), np.zeros((0, 0)), np.zeros((0, 0)),
                       np.zeros((0, 0)), np.ones(1, complex), np.zeros(0, complex), np.zeros(0, complex))
    return _infinity_integrals(dummy, 1e-13)[1]


def _assemble(basis, a_mom, b_mom, nodes):
    p = basis.genus
    C = a_mom[:, :p].T
    cond = np.linalg.cond(C)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularC(f"a-period matrix is numerically singular (cond {cond:.3g})")
    c_rows = np.linalg.inv(C)
    tau = b_mom[:, :p] @ c_rows.T
    coeffs = np.linalg.solve(a_mom[:, :p], -a_mom[:, p])
    poly = np.concatenate([coeffs, [1.0]])
    lam = np.roots(poly[::-1]) if p else np.zeros(0, complex)
    U = (b_mom[:, :p] @ coeffs + b_mom[:, p]) / (2j * np.pi)
    return PeriodData(basis, a_mom, b_mom, C, c_rows, tau, poly.astype(complex),
                      np.sort_complex(lam.astype(complex)), U, nodes)


# ---------------------------------------------------------------- Abel map

@dataclass(frozen=True)
class PathIntegral:
    """Integrals of z^k dz / y from the base point to a surface point."""

    point: SurfacePoint
    moments: np.ndarray
    nodes: tuple


def moments_to_point(data: PeriodData, P: SurfacePoint, path=None, tol=1e-13) -> PathIntegral:
    """Integrate z^k dz/y from Q0 to P along ``path`` (default: straight or one detour)."""
    spec = data.spec
    q0 = data.basis.base_index
    e = spec.branch_points
    z = complex(P.z)
    end_branch = None
    for m in range(len(e)):
        if abs(z - e[m]) <= 1e-14 * spec.scale:
            end_branch = m
    if end_branch == q0:
        return PathIntegral(P, np.zeros(spec.genus + 1, complex), (z,))
    if path is None:
        excl = (q0,) if end_branch is None else (q0, end_branch)
        path = plan_path(spec, e[q0], z, exclude=excl)
    path = [complex(x) for x in path]
    if abs(path[0] - e[q0]) > 1e-14 * spec.scale or abs(path[-1] - z) > 1e-12 * spec.scale:
        raise PathInvalid("path must run from the base point to P")
    total = np.zeros(spec.genus + 1, complex)
    y = None
    for i, (a, b) in enumerate(zip(path[:-1], path[1:])):
        last = i == len(path) - 2
        val, y = segment_moments(spec, a, b, y0=y, start_branch=q0 if i == 0 else None,
                                 end_branch=end_branch if last else None, tol=tol)
        total = total + val
    if end_branch is None:
        if abs(y + P.y) < abs(y - P.y):
            total = -total          # landed on P*, use the involution
    return PathIntegral(P, total, tuple(path))


def abel_map(data: PeriodData, P: SurfacePoint, path=None) -> np.ndarray:
    return data.c_rows @ moments_to_point(data, P, path).moments[: data.genus]


def omega3_integral(data: PeriodData, moments: np.ndarray) -> complex:
    return complex(moments @ data.omega3_coeffs)


def reduce_mod_lattice(data: PeriodData, v):
    """Representative of v modulo Z^p + tau Z^p with coordinates in [-1/2, 1/2)."""
    v = np.asarray(v, dtype=complex)
    tau = data.tau
    k = np.round(np.linalg.solve(tau.imag, v.imag))
    w = v - tau @ k
    return w - np.round(w.real)


def _infinity_integrals(data: PeriodData, tol):
    """Moments from Q0 to P_inf_plus (holomorphic part) and the constant e3_0."""
    spec = data.spec
    p = spec.genus
    e = spec.branch_points
    q0 = data.basis.base_index
    radius = 4.0 * spec.scale
    centre = np.mean(e)
    base_dir = e[q0] - centre
    base_dir = base_dir / abs(base_dir) if abs(base_dir) > 0 else 1.0
    best = None
    for t in range(16):
        d = base_dir * np.exp(1j * np.pi * ((t + 1) // 2) * (-1) ** t / 8)
        end = e[q0] + d * (radius + abs(e[q0]))
        others = [m for m in range(len(e)) if m != q0]
        clear = min(point_segment_distance(e[m], e[q0], end) for m in others)
        if best is None or clear > best[0] + 1e-12 * spec.scale:
            best = (clear, end)
        if clear > 0.25 * spec.diameter:
            break
    z_r = complex(best[1])
    val, y_end = segment_moments(spec, e[q0], z_r, start_branch=q0, tol=tol)
    far = CutSystem(spec, default_cuts(spec).pairs).sqrt_R(z_r)
    # P_inf_plus lives where y ~ -z^(p+1)
    if abs(y_end - far) < abs(y_end + far):
        val = -val
    ratio = float(np.max(np.abs(e))) / abs(z_r)
    terms = int(np.ceil(np.log(1e-18) / np.log(max(ratio, 1e-3)))) + 5
    s = inverse_sqrt_series(e, terms)
    tail = np.zeros(p + 1, complex)
    for k in range(p):
        j = np.arange(terms + 1)
        ex = k - p - j
        tail[k] = np.sum(s * z_r ** ex / ex)
    coeffs = data.omega3_coeffs
    holo = val[:p] + tail[:p]
    jj = np.arange(1, terms + 1)
    log_part = val[p] + np.log(z_r) + np.sum(s[1:] * z_r ** (-jj) / (-jj))
    e3 = complex(log_part + coeffs[:p] @ holo)
    return holo, e3, (complex(e[q0]), z_r)


def _attach_infinity(data: PeriodData, tol_quad):
    holo, e3, path = _infinity_integrals(data, 0.1 * tol_quad)
    return replace(data, A_inf=data.c_rows @ holo, e3_0=e3, inf_path=path)


# ---------------------------------------------------------------- Riemann constants

def half_periods(tau):
    p = tau.shape[0]
    for bits in itertools.product((0, 1), repeat=2 * p):
        m = np.array(bits[:p], float)
        n = np.array(bits[p:], float)
        yield bits, 0.5 * (m + tau @ n)


def riemann_constants(data: PeriodData, seed=7):
    """Vector of Riemann constants for the branch-point base.

    With a branch-point base the vector is a half period; it is singled out
    among the 4^p half periods as the one with theta(Xi + alpha(D)) = 0 for
    every effective divisor D of degree p - 1.
    """
    from .theta import ThetaContext
    p = data.genus
    if p == 0:
        return np.zeros(0, complex)
    if p == 1:
        return np.array([0.5 * (1.0 + data.tau[0, 0])])
    ctx = ThetaContext(data.tau)
    spec = data.spec
    cuts = data.basis.cuts
    rng = np.random.default_rng(seed)
    centre = np.mean(spec.branch_points)
    divisors = []
    while len(divisors) < 3:
        pts = []
        for _ in range(p - 1):
            z = centre + 0.6 * spec.diameter * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
            if spec.clearance(z) < 0.1 * spec.diameter:
                break
            pts.append(cuts.upper_point(z))
        else:
            divisors.append(sum(abel_map(data, P) for P in pts))
    scores = []
    for bits, h in half_periods(data.tau):
        vals = [float(ctx.normalized_abs(h + d)) for d in divisors]
        scores.append((max(vals), bits, h))
    scores.sort(key=lambda s: s[0])
    best, second = scores[0], scores[1]
    if best[0] > 1e-6 or second[0] < 1e3 * best[0]:
        raise NumericalError("could not single out the Riemann constants among half periods")
    return best[2]


# ---------------------------------------------------------------- symplectic changes

@dataclass(frozen=True)
class SymplecticTransform:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        X = self.matrix
        p = X.shape[0] // 2
        if X.shape != (2 * p, 2 * p) or np.any(X != np.round(X)):
            raise NotSymplectic("blocks must be square integer matrices of equal size")
        J = np.block([[np.zeros((p, p)), np.eye(p)], [-np.eye(p), np.zeros((p, p))]])
        if not np.array_equal(X @ J @ X.T, J):
            raise NotSymplectic("X J X^T != J")

    @property
    def matrix(self):
        return np.block([[np.asarray(self.A), np.asarray(self.B)],
                         [np.asarray(self.C), np.asarray(self.D)]]).astype(float)

    @classmethod
    def from_matrix(cls, X):
        X = np.asarray(X)
        p = X.shape[0] // 2
        return cls(X[:p, :p], X[:p, p:], X[p:, :p], X[p:, p:])

    @classmethod
    def identity(cls, p):
        return cls.from_matrix(np.eye(2 * p, dtype=int))


def apply_symplectic(data: PeriodData, X: SymplecticTransform) -> PeriodData:
    """New cycles a' = A a + B b, b' = C a + D b."""
    A, B, C, D = (np.asarray(m, float) for m in (X.A, X.B, X.C, X.D))
    tau = data.tau
    M = np.linalg.inv(A + B @ tau)
    tau_new = (C + D @ tau) @ M
    a_new = A @ data.a_moments + B @ data.b_moments
    b_new = C @ data.a_moments + D @ data.b_moments
    U = data.U0_3
    U_new = D @ U - tau_new @ (B @ U)
    c_rows = M.T @ data.c_rows
    out = replace(data, a_moments=a_new, b_moments=b_new, C_matrix=np.linalg.inv(c_rows),
                  c_rows=c_rows, tau=tau_new, U0_3=U_new, Xi=None,
                  A_inf=None if data.A_inf is None else M.T @ data.A_inf)
    return out


def _symplectic_generators(p):
    gens = []
    for i in range(p):
        for j in range(p):
            E = np.zeros((p, p), int)
            E[i, j] = 1
            if i != j:
                A = np.eye(p, dtype=int) + E
                gens.append(np.block([[A, np.zeros((p, p), int)],
                                      [np.zeros((p, p), int), np.linalg.inv(A).T.round().astype(int)]]))
            S = E + E.T if i != j else E
            gens.append(np.block([[np.eye(p, dtype=int), S], [np.zeros((p, p), int), np.eye(p, dtype=int)]]))
            gens.append(np.block([[np.eye(p, dtype=int), np.zeros((p, p), int)], [S, np.eye(p, dtype=int)]]))
    gens.append(np.block([[np.zeros((p, p), int), np.eye(p, dtype=int)],
                          [-np.eye(p, dtype=int), np.zeros((p, p), int)]]))
    full = []
    for g in gens:
        full.append(g)
        full.append(np.linalg.inv(g).round().astype(int))
    return full


def find_real_basis(data: PeriodData, bound: int, tol_real=1e-9, max_visits=20000):
    """Search Sp(2p, Z) with entries bounded by ``bound`` for a basis making U0_3 real.

    Returns (transform or None, best sup-norm of Im U found).
    """
    p = data.genus
    ident = np.eye(2 * p, dtype=int)

    def score(X):
        M = SymplecticTransform.from_matrix(X)
        return float(np.max(np.abs(apply_symplectic(data, M).U0_3.imag))) if p else 0.0

    best = (score(ident), ident)
    if best[0] < tol_real:
        return SymplecticTransform.from_matrix(ident), best[0]
    if bound <= 0:
        return None, best[0]
    gens = _symplectic_generators(p)
    seen = {ident.tobytes()}
    frontier = [ident]
    visits = 0
    while frontier and visits < max_visits:
        nxt = []
        for X in frontier:
            for g in gens:
                Y = g @ X
                if np.max(np.abs(Y)) > bound:
                    continue
                key = Y.tobytes()
                if key in seen:
                    continue
                seen.add(key)
                visits += 1
                try:
                    s = score(Y)
                except np.linalg.LinAlgError:
                    continue
                if s < best[0]:
                    best = (s, Y)
                    if s < tol_real:
                        return SymplecticTransform.from_matrix(Y), s
                nxt.append(Y)
        frontier = nxt
    return None, best[0]


# ---------------------------------------------------------------- reporting

def invariant_report(data: PeriodData) -> dict:
    p = data.genus
    if p == 0:
        return {"tau_asymmetry": 0.0, "min_eig_im_tau": None, "omega3_a_periods": 0.0,
                "U_minus_2A_inf": 0.0}
    asym = float(np.max(np.abs(data.tau - data.tau.T)))
    eig = float(np.linalg.eigvalsh(0.5 * (data.tau.imag + data.tau.imag.T))[0])
    # independent check: re-integrate the a-loops on a different ellipse
    a_check = []
    for j in range(1, p + 1):
        k = 2 * j - 1
        rho = 0.5 * data.basis.rhos[k - 1]
        val, _ = loop_moments(data.basis, k, rho=rho)
        a_check.append(abs(val @ data.omega3_coeffs))
    report = {"tau_asymmetry": asym, "min_eig_im_tau": eig,
              "omega3_a_periods": float(max(a_check))}
    if data.A_inf is not None:
        diff = reduce_mod_lattice(data, data.U0_3 - 2.0 * data.A_inf)
        report["U_minus_2A_inf"] = float(np.max(np.abs(diff)))
    return report


def period_document(data: PeriodData) -> dict:
    def cx(a):
        a = np.asarray(a)
        if a.ndim == 0:
            return [float(a.real), float(a.imag)]
        return [cx(x) for x in a]

    return {
        "genus": data.genus,
        "chain": list(data.basis.chain),
        "cut_order": list(data.basis.cut_order),
        "b_orientation": data.basis.b_sign,
        "C": cx(data.C_matrix),
        "tau": cx(data.tau),
        "lambda": cx(data.lam),
        "U0_3": cx(data.U0_3),
        "Xi": cx(data.Xi) if data.Xi is not None else None,
        "A_inf_plus": cx(data.A_inf) if data.A_inf is not None else None,
        "e3_0": cx(data.e3_0),
        "invariants": invariant_report(data),
    }
