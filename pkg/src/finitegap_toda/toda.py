"""Stationary Toda hierarchy: recursion tables, F_p / G_{p+1}, curve recovery, Dirichlet data.

The homogeneous coefficients are evaluated from matrix elements of the
Jacobi operator H = a S^+ + a^- S^- + b,

    fhat_j(n) = <delta_n, H^j delta_n>,
    ghat_j(n) = -2 a(n) <delta_{n+1}, H^j delta_n>,

which satisfy the homogeneous recursion exactly and carry no additive
constants, so no telescoping sums are needed.  The inhomogeneous levels are

    f_j = sum_{k=0}^{j} c_{j-k} fhat_k,   g_j = sum_{k=1}^{j} c_{j-k} ghat_k - c_{j+1}.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .curve import CurveSpec
from .errors import (AnchorInconsistent, NotStationary, RootFindFailed, ValidationError,
                     WindowTooNarrow)


@dataclass(frozen=True)
class CoefficientWindow:
    """Complex sequences a(n), b(n) for n = n_lo .. n_lo + len(a) - 1."""

    n_lo: int
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    provenance: str = "user"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=complex).ravel().copy()
        b = np.asarray(self.b, dtype=complex).ravel().copy()
        if a.shape != b.shape:
            raise ValidationError("a and b must have the same length")
        if a.size == 0:
            raise ValidationError("empty coefficient window")
        bad = np.flatnonzero(~np.isfinite(a) | ~np.isfinite(b))
        if bad.size:
            raise ValidationError(f"non-finite coefficient at n={self.n_lo + bad[0]}")
        zero = np.flatnonzero(a == 0)
        if zero.size:
            raise ValidationError(f"a(n) vanishes at n={self.n_lo + zero[0]}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "n_lo", int(self.n_lo))

    @property
    def n_hi(self) -> int:
        return self.n_lo + len(self.a) - 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n_lo, self.n_hi + 1)

    def __len__(self):
        return len(self.a)

    def index(self, n: int) -> int:
        if not self.n_lo <= n <= self.n_hi:
            raise ValidationError(f"site {n} outside window [{self.n_lo}, {self.n_hi}]")
        return n - self.n_lo

    def flip_signs(self, mask) -> "CoefficientWindow":
        """Gauge change a(n) -> -a(n) on the sites selected by ``mask``."""
        s = np.where(np.asarray(mask, bool), -1.0, 1.0)
        return CoefficientWindow(self.n_lo, self.a * s, self.b, self.provenance)


# ---------------------------------------------------------------- CSV

CSV_HEADER = ["n", "re_a", "im_a", "re_b", "im_b"]


def window_to_csv(window: CoefficientWindow) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for n, a, b in zip(window.sites, window.a, window.b):
        w.writerow([int(n)] + [repr(float(x)) for x in (a.real, a.imag, b.real, b.imag)])
    return buf.getvalue()


def window_from_csv(text: str, provenance="csv") -> CoefficientWindow:
    # leading "# ..." lines carry provenance (e.g. the manifest name)
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows or [h.strip() for h in rows[0]] != CSV_HEADER:
        raise ValidationError("coefficient CSV must start with header " + ",".join(CSV_HEADER))
    ns, a, b = [], [], []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ValidationError(f"line {line}: expected 5 fields")
        try:
            ns.append(int(row[0]))
            a.append(complex(float(row[1]), float(row[2])))
            b.append(complex(float(row[3]), float(row[4])))
        except ValueError as exc:
            raise ValidationError(f"line {line}: {exc}") from None
    if not ns:
        raise ValidationError("coefficient CSV has no data rows")
    if any(y - x != 1 for x, y in zip(ns, ns[1:])):
        raise ValidationError("site indices must be consecutive and increasing")
    return CoefficientWindow(ns[0], np.array(a), np.array(b), provenance)


# ---------------------------------------------------------------- constants

def _compositions(total, parts):
    # all tuples of ``parts`` nonnegative integers summing to ``total``
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 2 - prev)
        yield out


def _sqrt_binomial(j):
    # Taylor coefficient of (1 - x)^(1/2) at x^j
    return -factorial(2 * j) / (4 ** j * factorial(j) ** 2 * (2 * j - 1))


def ck_from_E(spec: CurveSpec) -> np.ndarray:
    """Summation constants c_1..c_p as symmetric functions of the branch points.

    c_k is the coefficient of t^k in prod_m (1 - E_m t)^(1/2), written out as a
    multinomial sum; in particular c_1 = -(1/2) sum E_m.
    """
    e = spec.branch_points
    p = spec.genus
    out = np.zeros(p, dtype=complex)
    for k in range(1, p + 1):
        acc = 0j
        for js in _compositions(k, len(e)):
            term = 1.0 + 0j
            for jm, em in zip(js, e):
                if jm:
                    term *= _sqrt_binomial(jm) * em ** jm
            acc += term
        out[k - 1] = acc
    return out


# ---------------------------------------------------------------- hierarchy

@dataclass(frozen=True)
class HierarchyTable:
    """f_j(n), g_j(n) for j = 0..p+1 at the sites ``sites``."""

    p: int
    sites: np.ndarray
    f: np.ndarray          # shape (p+2, n_sites)
    g: np.ndarray
    fhat: np.ndarray
    ghat: np.ndarray
    constants: np.ndarray  # c_0..c_{p+1}, the last one fixed to 0
    a: np.ndarray          # a(n) on the same sites
    a_next: np.ndarray     # a(n+1)


def _matrix_elements(window: CoefficientWindow, depth: int):
    """<delta_n, H^j delta_n> and <delta_{n+1}, H^j delta_n> for j <= depth.

    Defined at sites with ``depth + 1`` neighbours available on each side.
    """
    a, b = window.a, window.b
    N = len(a)
    lo, hi = depth, N - depth - 2
    if hi < lo:
        raise WindowTooNarrow(f"window of {N} sites is too short for level {depth}")
    idx = np.arange(lo, hi + 1)
    width = 2 * depth + 3
    # v[s, k] = (H^j delta_{idx[s]})(idx[s] + k - depth - 1)
    v = np.zeros((idx.size, width), dtype=complex)
    v[:, depth + 1] = 1.0
    rel = np.arange(width) - depth - 1
    pos = idx[:, None] + rel[None, :]
    posc = np.clip(pos, 0, N - 1)
    a_here = np.where((pos >= 0) & (pos < N), a[posc], 0)
    a_prev = np.where((pos - 1 >= 0) & (pos - 1 < N), a[np.clip(pos - 1, 0, N - 1)], 0)
    b_here = np.where((pos >= 0) & (pos < N), b[posc], 0)
    diag = np.empty((depth + 1, idx.size), dtype=complex)
    off = np.empty((depth + 1, idx.size), dtype=complex)
    for j in range(depth + 1):
        diag[j] = v[:, depth + 1]
        off[j] = v[:, depth + 2]
        w = b_here * v
        w[:, :-1] += a_here[:, :-1] * v[:, 1:]
        w[:, 1:] += a_prev[:, 1:] * v[:, :-1]
        v = w
    return idx, diag, off


def hierarchy(window: CoefficientWindow, constants, p: int) -> HierarchyTable:
    """Recursion table through level p+1 with summation constants c_1..c_p."""
    c = np.zeros(p + 3, dtype=complex)
    c[0] = 1.0
    consts = np.asarray(constants, dtype=complex).ravel()
    if consts.size != p:
        raise ValidationError(f"expected {p} summation constants, got {consts.size}")
    c[1:p + 1] = consts
    idx, diag, off = _matrix_elements(window, p + 1)
    a_site = window.a[idx]
    fhat = diag
    ghat = -2.0 * a_site[None, :] * off
    ghat[0] = 0.0
    f = np.zeros_like(fhat)
    g = np.zeros_like(ghat)
    for j in range(p + 2):
        f[j] = sum(c[j - k] * fhat[k] for k in range(j + 1))
        g[j] = sum(c[j - k] * ghat[k] for k in range(1, j + 1)) - c[j + 1]
    a_next = window.a[idx + 1]
    return HierarchyTable(p, window.n_lo + idx, f, g, fhat, ghat, c[:p + 2], a_site, a_next)


def stationary_residual(window: CoefficientWindow, constants, p: int):
    """(sup |f_{p+1}(n+1) - f_{p+1}(n)|, sup |g_{p+1}(n) - g_{p+1}(n-1)|) over interior sites."""
    t = hierarchy(window, constants, p)
    fp = t.f[p + 1]
    gp = t.g[p + 1]
    if fp.size < 2:
        raise WindowTooNarrow("need at least two interior sites")
    return float(np.max(np.abs(np.diff(fp)))), float(np.max(np.abs(np.diff(gp))))


# ---------------------------------------------------------------- polynomials

@dataclass(frozen=True)
class SpectralPolys:
    """Per-site coefficients, highest power first.

    F[:, s] has p+1 entries (monic), G[:, s] has p+2 entries (leading -1).
    """

    p: int
    sites: np.ndarray
    F: np.ndarray
    G: np.ndarray
    a: np.ndarray
    anchor_shift: complex = 0j
    anchor_residual: float = 0.0

    def index(self, n):
        k = int(n) - int(self.sites[0])
        if not 0 <= k < self.sites.size:
            raise ValidationError(f"site {n} outside the polynomial table")
        return k

    def eval_F(self, z, n):
        return np.polyval(self.F[:, self.index(n)], z)

    def eval_G(self, z, n):
        return np.polyval(self.G[:, self.index(n)], z)

    def a_at(self, n):
        return self.a[self.index(n)]


def build_polys(table: HierarchyTable, tol_alg=1e-8, check=True) -> SpectralPolys:
    """Assemble F_p, G_{p+1} and re-anchor the constant term of G_{p+1}.

    The shift delta added to every G_{p+1}(., n) is the least-squares solution
    making G^2 - 4 a^2 F F^+ agree across all sites on 2p+2 sample points.
    It is needed only when the unshifted curve already varies by more than
    ``tol_alg``; a failed fit is reported (or raised when ``check`` is set).
    """
    p = table.p
    F = table.f[:p + 1].copy()
    G = np.zeros((p + 2, table.sites.size), dtype=complex)
    G[0] = -1.0
    G[1:p + 2] = table.g[:p + 1]
    G[p + 1] += table.f[p + 1]
    if table.sites.size < 3:
        raise WindowTooNarrow("need at least three sites to anchor G")
    scale = 1.0 + float(np.max(np.abs(F))) + float(np.max(np.abs(G[1:])))
    zs = scale * np.exp(2j * np.pi * (np.arange(2 * p + 2) + 0.25) / (2 * p + 2))
    Gv = np.array([np.polyval(G[:, s], zs) for s in range(table.sites.size)])
    Fv = np.array([np.polyval(F[:, s], zs) for s in range(table.sites.size)])
    curves = Gv[:-1] ** 2 - 4 * table.a[:-1, None] ** 2 * Fv[:-1] * Fv[1:]
    # R_s + 2 delta G_s (+ delta^2) must not depend on s; fit delta over all sites
    rhs = -(curves[1:] - curves[0]).ravel()
    dg = 2.0 * (Gv[1:-1] - Gv[0]).ravel()
    ref = float(np.max(np.abs(curves[0]))) or 1.0
    resid = float(np.max(np.abs(rhs))) / ref
    shift = 0j
    if resid > tol_alg and float(np.linalg.norm(dg)) > 1e-12 * ref * np.sqrt(dg.size):
        shift = complex(np.vdot(dg, rhs) / np.vdot(dg, dg))
        fitted = float(np.max(np.abs(rhs - shift * dg))) / ref
        if fitted <= tol_alg:
            G[p + 1] += shift
            resid = fitted
        else:
            shift = 0j
    if check and resid > tol_alg:
        raise AnchorInconsistent(
            f"coefficients do not satisfy a stationary equation (residual {resid:.3g})")
    return SpectralPolys(p, table.sites, F, G, table.a, shift, resid)


@dataclass(frozen=True)
class RecoveredCurve:
    coeffs: np.ndarray        # highest power first, monic
    roots: np.ndarray
    deviation: float          # max relative cross-site coefficient deviation


def curve_polynomial(polys: SpectralPolys, s: int) -> np.ndarray:
    """Coefficients of G^2 - 4 a^2 F F^+ at table position s (highest first)."""
    G = polys.G[:, s]
    return np.polysub(np.polymul(G, G),
                      4 * polys.a[s] ** 2 * np.polymul(polys.F[:, s], polys.F[:, s + 1]))


def recover_curve(polys: SpectralPolys, tol_alg=1e-8, check=True) -> RecoveredCurve:
    if polys.sites.size < 2:
        raise WindowTooNarrow("need two sites to recover the curve")
    rows = np.array([curve_polynomial(polys, s) for s in range(polys.sites.size - 1)])
    ref = rows[0]
    dev = float(np.max(np.abs(rows - ref))) / float(np.max(np.abs(ref)))
    if check and dev > tol_alg:
        raise NotStationary(f"G^2 - 4a^2 F F^+ varies across sites (relative {dev:.3g})")
    roots = np.roots(ref)
    return RecoveredCurve(ref, np.sort_complex(roots), dev)


@dataclass(frozen=True)
class DirichletDivisor:
    site: int
    mu: np.ndarray
    y_hat: np.ndarray
    curve_residual: float


def dirichlet(polys: SpectralPolys, n: int, spec: CurveSpec | None = None,
              tol_root=None) -> DirichletDivisor:
    """Zeros mu_j(n) of F_p(., n) with lifts -G_{p+1}(mu_j, n)."""
    s = polys.index(n)
    coeffs = polys.F[:, s]
    if polys.p == 0:
        return DirichletDivisor(int(n), np.zeros(0, complex), np.zeros(0, complex), 0.0)
    mu = np.roots(coeffs)
    if mu.size != polys.p or not np.all(np.isfinite(mu)):
        raise RootFindFailed(f"F_p at site {n} has {mu.size} finite roots, expected {polys.p}")
    # one Newton polish step per root
    d = np.polyder(coeffs)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.polyval(coeffs, mu) / np.polyval(d, mu)
    mu = np.where(np.isfinite(step), mu - step, mu)
    tol = tol_root if tol_root is not None else 1e-10 * (1 + float(np.max(np.abs(coeffs))))
    if np.max(np.abs(np.polyval(coeffs, mu))) > tol * max(1.0, float(np.max(np.abs(mu)))) ** polys.p:
        raise RootFindFailed(f"root residual too large at site {n}")
    y_hat = -np.polyval(polys.G[:, s], mu)
    if spec is not None:
        r = spec.eval_R(mu)
        resid = float(np.max(np.abs(r - y_hat ** 2) / (1 + np.abs(r))))
    else:
        resid = float("nan")
    order = np.lexsort((mu.imag, mu.real))
    return DirichletDivisor(int(n), mu[order], y_hat[order], resid)


def trace_residuals(polys: SpectralPolys, window: CoefficientWindow, spec: CurveSpec,
                    separation=1e-6):
    """Site-wise residuals of the trace formulas for b(n) and a(n)^2.

    The a^2 formula is skipped (nan) where two mu_j come closer than
    ``separation * scale``.
    """
    e = spec.branch_points
    half_sum = 0.5 * np.sum(e)
    res_b, res_a = [], []
    for s, n in enumerate(polys.sites[:-1]):
        if n - 1 < window.n_lo or n + 1 > window.n_hi:
            continue
        div = dirichlet(polys, n)
        b = window.b[window.index(n)]
        res_b.append(abs(b + np.sum(div.mu) - half_sum))
        p = polys.p
        if p == 0:
            res_a.append(abs(window.a[window.index(n)] ** 2 - (e[1] - e[0]) ** 2 / 16))
            continue
        gaps = [abs(x - y) for x, y in itertools.combinations(div.mu, 2)]
        if gaps and min(gaps) < separation * spec.scale:
            res_a.append(float("nan"))
            continue
        total = 0j
        for j in range(p):
            prod = np.prod([div.mu[j] - div.mu[k] for k in range(p) if k != j])
            total += div.y_hat[j] / prod
        b_sq = 0.5 * np.sum(e ** 2) - np.sum(div.mu ** 2)
        a_sq = 0.5 * total + 0.25 * (b_sq - b ** 2)
        res_a.append(abs(window.a[window.index(n)] ** 2 - a_sq))
    return np.array(res_b), np.array(res_a)
