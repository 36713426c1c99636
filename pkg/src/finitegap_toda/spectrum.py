"""Spectral function h, arc tracing and transfer-matrix / finite-section oracles.

h(P) = Re int_{E_m}^{P} Omega with Omega = 2 <F_p>(z) dz / y, the mean of
the diagonal Green's function doubled.  Omega has purely imaginary periods,
so the real part does not depend on the path or on which branch point
starts it; h is odd under the sheet exchange and the spectrum is the
projection of its zero set.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .curve import CurveSpec, CutSystem, point_segment_distance, ray_sqrt
from .errors import (ArcEscapedBox, EigenFailed, MeanNotConverged, PathBlocked,
                     SeedStalled, ValidationError)
from .periods import PeriodData, plan_path, segment_moments
from .toda import CoefficientWindow, hierarchy


# ---------------------------------------------------------------- means

@dataclass(frozen=True)
class MeanData:
    """Mean values <f_0>..<f_p> and the roots of the mean polynomial."""

    means: np.ndarray            # <f_0> .. <f_p>; <f_0> = 1
    lambda_tilde: np.ndarray
    window_length: int = 0
    error: float = 0.0
    source: str = "window"

    @property
    def genus(self) -> int:
        return self.means.size - 1

    @property
    def poly(self) -> np.ndarray:
        """<F_p>(z) coefficients, highest power first."""
        return self.means.astype(complex)


def fejer_weights(n: int) -> np.ndarray:
    k = np.arange(n) - (n - 1) / 2.0
    w = 1.0 - np.abs(k) / ((n + 1) / 2.0)
    return w / w.sum()


def mean_values(window: CoefficientWindow, constants, p: int, tol_mean=1e-6,
                check=True) -> MeanData:
    """Fejer-weighted means of f_0..f_p over the window.

    The error estimate compares the full window with its central half.
    """
    t = hierarchy(window, constants, p)
    f = t.f[:p + 1]
    n = f.shape[1]
    full = f @ fejer_weights(n)
    q = n // 4
    half = f[:, q:q + n // 2] @ fejer_weights(n // 2) if n // 2 >= 1 else full
    err = float(np.max(np.abs(full - half))) if p else 0.0
    full[0] = 1.0
    if check and err > tol_mean:
        raise MeanNotConverged(f"mean values not converged (half/full discrepancy {err:.3g})")
    lam = np.sort_complex(np.roots(full)) if p else np.zeros(0, complex)
    return MeanData(full, lam, n, err, "window")


def real_normalized_coeffs(data: PeriodData) -> np.ndarray:
    """Monic P(z) (highest first) such that P(z) dz / y has purely imaginary periods."""
    p = data.genus
    if p == 0:
        return np.ones(1, complex)
    per = np.vstack([data.a_moments, data.b_moments])      # (2p, p+1)
    low = per[:, :p]
    # Re(sum_k d_k P_k) = -Re(P_p) for all 2p cycles; unknowns Re d, Im d
    M = np.hstack([low.real, -low.imag])
    rhs = -per[:, p].real
    x = np.linalg.solve(M, rhs)
    d = x[:p] + 1j * x[p:]
    return np.concatenate([[1.0 + 0j], d[::-1]])


def curve_means(data: PeriodData) -> MeanData:
    """Mean polynomial obtained from the curve alone by real normalisation."""
    coeffs = real_normalized_coeffs(data)
    lam = np.sort_complex(np.roots(coeffs)) if data.genus else np.zeros(0, complex)
    return MeanData(coeffs, lam, 0, 0.0, "curve")


# ---------------------------------------------------------------- spectral function

@dataclass(frozen=True)
class SpectralFunction:
    """h and H = int Omega on the surface for a fixed mean polynomial."""

    spec: CurveSpec
    cuts: CutSystem
    poly: np.ndarray                  # <F_p>, highest first
    tol: float = 1e-13
    _asc: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        poly = np.asarray(self.poly, dtype=complex)
        if poly.size != self.spec.genus + 1:
            raise ValidationError("mean polynomial degree does not match the genus")
        object.__setattr__(self, "poly", poly)
        object.__setattr__(self, "_asc", 2.0 * poly[::-1])

    @property
    def min_separation(self) -> float:
        e = self.spec.branch_points
        return min(abs(a - b) for a, b in itertools.combinations(e, 2))

    def upper_y(self, z):
        return complex(self.cuts.sqrt_R(z))

    def derivative(self, z, y):
        """H'(z) = 2 <F>(z) / y."""
        return 2.0 * np.polyval(self.poly, z) / y

    def increment(self, z0, y0, z1):
        """(int_{z0}^{z1} Omega, y(z1)) along the straight segment with y continued."""
        val, y1 = segment_moments(self.spec, z0, z1, y0=y0, tol=self.tol)
        return complex(val @ self._asc), complex(y1)

    def _route(self, z, base=None):
        e = self.spec.branch_points
        need = 0.1 * self.min_separation
        order = [base] if base is not None else list(np.argsort(np.abs(e - z)))
        for m in order:
            m = int(m)
            if all(point_segment_distance(e[k], e[m], z) >= min(need, 0.5 * abs(e[k] - z))
                   for k in range(len(e)) if k != m):
                return m, [complex(e[m]), complex(z)]
        m = int(order[0])
        try:
            return m, plan_path(self.spec, e[m], z, exclude=(m,))
        except Exception as exc:
            raise PathBlocked(f"no integration path to {z}") from exc

    def evaluate(self, z, y=None, base=None):
        """(h, H, y) at the surface point over z (upper sheet unless y is given)."""
        z = complex(z)
        y = self.upper_y(z) if y is None else complex(y)
        e = self.spec.branch_points
        hit = np.flatnonzero(np.abs(e - z) <= 1e-14 * self.spec.scale)
        if hit.size:
            return 0.0, 0j, 0j
        m, path = self._route(z, base)
        total = 0j
        yc = None
        for i, (a, b) in enumerate(zip(path[:-1], path[1:])):
            val, yc = segment_moments(self.spec, a, b, y0=yc, start_branch=m if i == 0 else None,
                                      tol=self.tol)
            total += val @ self._asc
        if abs(yc + y) < abs(yc - y):
            total = -total
        return float(total.real), complex(total), y

    def h(self, z, y=None):
        return self.evaluate(z, y)[0]

    def h_grid(self, zs):
        return np.array([self.h(z) for z in np.ravel(zs)]).reshape(np.shape(zs))

    def branch_value(self, m, base):
        """Re int_{E_base}^{E_m} Omega along a path through a regular midpoint."""
        e = self.spec.branch_points
        if m == base:
            return 0.0
        mid = 0.5 * (e[base] + e[m])
        nodes = plan_path(self.spec, e[base], e[m], exclude=(base, m))
        if len(nodes) == 2:
            off = 0.15j * (e[m] - e[base])
            for cand in (mid, mid + off, mid - off):
                if self.spec.clearance(cand) > 0.1 * self.min_separation:
                    nodes = [e[base], cand, e[m]]
                    break
        total = 0j
        yc = None
        for i, (a, b) in enumerate(zip(nodes[:-1], nodes[1:])):
            last = i == len(nodes) - 2
            val, yc = segment_moments(self.spec, a, b, y0=yc, start_branch=base if i == 0 else None,
                                      end_branch=m if last else None, tol=self.tol)
            total += val @ self._asc
        return float(total.real)

    def local_coefficient(self, m):
        """(N0, C) with h ~ Re(C (z - E_m)^(N0 + 1/2)) near E_m, N0 from root coincidences."""
        e = self.spec.branch_points
        others = np.delete(e, m)
        q = complex(ray_sqrt(e[m], others, e[m] + 1e-3 * self.min_separation))
        lam = np.roots(self.poly) if self.poly.size > 1 else np.zeros(0)
        tol = 1e-6 * self.spec.diameter
        n0 = int(np.sum(np.abs(lam - e[m]) < tol))
        taylor = np.polyder(self.poly, n0) if n0 else self.poly
        coef = np.polyval(taylor, e[m]) / np.prod(np.arange(1, n0 + 1))
        return n0, complex(2.0 * coef / (q * (n0 + 0.5)))


def spectral_function(means: MeanData, spec: CurveSpec, cuts: CutSystem, z, y=None) -> float:
    return SpectralFunction(spec, cuts, means.poly).h(z, y)


# ---------------------------------------------------------------- bounding box

def bounding_box(window: CoefficientWindow):
    a, b = window.a, window.b
    ra, ia = float(np.max(np.abs(a.real))), float(np.max(np.abs(a.imag)))
    return (-2 * ra + float(np.min(b.real)), 2 * ra + float(np.max(b.real)),
            -2 * ia + float(np.min(b.imag)), 2 * ia + float(np.max(b.imag)))


def in_box(box, z, margin=0.0):
    return (box[0] - margin <= z.real <= box[1] + margin
            and box[2] - margin <= z.imag <= box[3] + margin)


# ---------------------------------------------------------------- arcs

@dataclass(frozen=True)
class ArcEnd:
    kind: str            # "E", "crossing", "join" or "open"
    index: int | None
    point: complex

    def to_json(self):
        return {"type": self.kind, "index": self.index,
                "point": [float(self.point.real), float(self.point.imag)]}


@dataclass(frozen=True)
class Arc:
    points: np.ndarray
    start: ArcEnd
    end: ArcEnd

    @property
    def arclength(self) -> float:
        return float(np.sum(np.abs(np.diff(self.points))))


@dataclass(frozen=True)
class SpectrumResult:
    arcs: list
    lambda_tilde: np.ndarray
    crossings: list
    bbox: tuple
    seeds: list          # per seed: branch index, predicted angle, measured angle
    ambiguous: list

    def endpoint_counts(self, n_branch):
        counts = np.zeros(n_branch, int)
        for arc in self.arcs:
            for end in (arc.start, arc.end):
                if end.kind == "E":
                    counts[end.index] += 1
        return counts

    def to_json(self):
        return {
            "arcs": [{"points": [[float(z.real), float(z.imag)] for z in a.points],
                      "start": a.start.to_json(), "end": a.end.to_json()} for a in self.arcs],
            "lambda_tilde": [[float(z.real), float(z.imag)] for z in self.lambda_tilde],
            "crossings": self.crossings,
            "bbox": [float(x) for x in self.bbox],
            "seeds": self.seeds,
            "ambiguous": self.ambiguous,
        }

    def to_csv(self):
        lines = ["arc,k,re,im"]
        for i, a in enumerate(self.arcs):
            for k, z in enumerate(a.points):
                lines.append(f"{i},{k},{float(z.real)!r},{float(z.imag)!r}")
        return "\n".join(lines) + "\n"


def _fan(n_half, phase, order):
    # directions phi with cos(order * phi + phase) = 0, order = n_half
    count = int(round(2 * order))
    return [float(np.mod((np.pi / 2 + k * np.pi - phase) / order, 2 * np.pi)) for k in range(count)]


def _angle_diff(a, b):
    return abs((a - b + np.pi) % (2 * np.pi) - np.pi)


class _Tracer:
    def __init__(self, sf: SpectralFunction, box, step, tol_arc, max_steps):
        self.sf = sf
        self.box = box
        self.step0 = step
        self.tol = tol_arc
        self.max_steps = max_steps
        self.arcs = []
        self.e = sf.spec.branch_points
        self.margin = 1e-6 * (1 + sf.spec.diameter)

    def _correct(self, z0, y0, h0, zp, direction):
        """Newton on h along the gradient, starting from the predictor zp."""
        sf = self.sf
        z = zp
        for it in range(12):
            dH, y = sf.increment(z0, y0, z)
            h = h0 + dH.real
            d = sf.derivative(z, y)
            if abs(h) < self.tol:
                return z, y, h0 + dH, it, d
            g = np.conj(d)
            if abs(g) == 0:
                break
            z = z - h * g / abs(g) ** 2
        return None

    def near_arc(self, z, radius, direction=None):
        """Index of an arc passing within radius of z (and parallel to direction, if given)."""
        for i, arc in enumerate(self.arcs):
            pts = arc.points
            if pts.size < 2:
                continue
            dist = [point_segment_distance(z, pts[k], pts[k + 1]) for k in range(pts.size - 1)]
            k = int(np.argmin(dist))
            if dist[k] >= radius:
                continue
            if direction is not None:
                seg = pts[k + 1] - pts[k]
                if abs((seg * np.conj(direction)).real) < 0.95 * abs(seg) * abs(direction):
                    continue
            return i
        return None

    def trace(self, start: ArcEnd, z1, y1, H1, targets):
        """Follow the zero set from start through (z1, y1) until a terminal event."""
        sf = self.sf
        pts = [start.point, z1]
        z, y, H = z1, y1, H1
        direction = (z1 - start.point) / abs(z1 - start.point)
        s = self.step0
        s_min = 1e-7 * self.step0
        for _ in range(self.max_steps):
            d = sf.derivative(z, y)
            tan = 1j * np.conj(d) / abs(d)
            if (tan * np.conj(direction)).real < 0:
                tan = -tan
            done = None
            while s >= s_min:
                res = self._correct(z, y, H.real, z + s * tan, tan)
                if res is not None:
                    zn, yn, Hn, its, _ = res
                    turn = _angle_diff(np.angle(zn - z), np.angle(tan))
                    if turn < np.radians(20) and abs(zn - z) < 2 * s:
                        done = res
                        break
                s *= 0.5
            if done is None:
                raise SeedStalled(f"arc tracing stalled near {z:.6g}")
            zn, yn, Hn, its, _ = done
            direction = (zn - z) / abs(zn - z)
            z, y, H = zn, yn, Hn
            pts.append(z)
            if not in_box(self.box, z, self.margin):
                raise ArcEscapedBox(f"traced arc left the bounding box at {z:.6g}")
            if its <= 2:
                s = min(1.5 * s, self.step0)
            capture = 3.0 * s
            for kind, idx, point in targets:
                if kind == start.kind and idx == start.index and len(pts) < 6:
                    continue
                if abs(z - point) < max(capture, 3 * abs(pts[-1] - pts[-2])):
                    pts.append(point)
                    return Arc(np.array(pts), start, ArcEnd(kind, idx, complex(point)))
            # zero sets only meet at crossings, so a nearby arc here is a retrace
            hit = self.near_arc(z, 1.5 * s, direction)
            if hit is not None and len(pts) > 3:
                return Arc(np.array(pts), start, ArcEnd("join", hit, complex(z)))
        return Arc(np.array(pts), start, ArcEnd("open", None, complex(z)))


def trace_arcs(means: MeanData, spec: CurveSpec, cuts: CutSystem, box, step=None,
               tol_arc=1e-8, tol_coincide=None, max_steps=20000) -> SpectrumResult:
    """Trace the zero set of h from every branch point and every arc crossing."""
    sf = SpectralFunction(spec, cuts, means.poly)
    e = spec.branch_points
    sep = sf.min_separation
    step = step or 0.02 * spec.diameter
    tol_coincide = tol_coincide or 1e-6 * spec.diameter
    tracer = _Tracer(sf, box, step, tol_arc, max_steps)
    lam = np.asarray(means.lambda_tilde, dtype=complex)

    ambiguous = []
    crossings = []
    targets = [("E", m, complex(e[m])) for m in range(len(e))]
    # arc crossings: roots of the mean polynomial on the zero set of h
    grouped = []
    for j, l in enumerate(lam):
        if np.min(np.abs(e - l)) < tol_coincide:
            continue
        if np.min(np.abs(e - l)) < 1e3 * tol_coincide:
            ambiguous.append({"lambda_index": j, "reason": "close to a branch point"})
            continue
        if any(abs(l - lam[k]) < tol_coincide for k in grouped):
            continue
        grouped.append(j)
        mult = int(np.sum(np.abs(lam - l) < tol_coincide))
        hval = sf.h(l)
        on = abs(hval) < 1e3 * tol_arc
        crossings.append({"index": j, "point": [float(l.real), float(l.imag)], "h": hval,
                          "multiplicity": mult, "on_spectrum": bool(on)})
        if on:
            targets.append(("crossing", j, complex(l)))

    r0 = min(0.25 * step, 0.05 * sep)
    seeds = []
    for m in range(len(e)):
        n0, C = sf.local_coefficient(m)
        for phi in _fan(n0, np.angle(C), n0 + 0.5):
            if _seed_taken(tracer, ("E", m), e[m], phi, r0):
                seeds.append({"branch": m, "predicted": phi, "measured": None, "skipped": True})
                continue
            z1, y1, H1 = _seed_point(sf, e[m], phi, r0, base=m)
            arc = tracer.trace(ArcEnd("E", m, complex(e[m])), z1, y1, H1, targets)
            tracer.arcs.append(arc)
            seeds.append({"branch": m, "predicted": phi,
                          "measured": float(np.mod(np.angle(z1 - e[m]), 2 * np.pi)),
                          "skipped": False})
    for cr in crossings:
        if not cr["on_spectrum"]:
            continue
        l = complex(*cr["point"])
        d = sf.poly
        mult = cr["multiplicity"]
        # h ~ Re(C (z - l)^(M0 + 1)) with C from the M0-th derivative of <F> / y
        taylor = np.polyder(d, mult) if mult else d
        y = sf.upper_y(l)
        C = 2.0 * np.polyval(taylor, l) / (np.prod(np.arange(1, mult + 1)) * y * (mult + 1))
        for phi in _fan(mult + 1, np.angle(C), mult + 1):
            if _seed_taken(tracer, ("crossing", cr["index"]), l, phi, r0):
                continue
            z1 = l + r0 * np.exp(1j * phi)
            base_h, base_H, _ = sf.evaluate(l)
            dH, y1 = sf.increment(l, y, z1)
            res = tracer._correct(l, y, base_h, z1, None)
            if res is None:
                raise SeedStalled("could not start an arc at a crossing")
            arc = tracer.trace(ArcEnd("crossing", cr["index"], l), res[0], res[1], res[2], targets)
            tracer.arcs.append(arc)
    return SpectrumResult(tracer.arcs, lam, crossings, tuple(box), seeds, ambiguous)


def _seed_taken(tracer, key, point, phi, r0):
    """True when an existing arc already leaves (or reaches) ``point`` in direction phi."""
    for arc in tracer.arcs:
        for end, nxt in ((arc.start, arc.points[1]), (arc.end, arc.points[-2])):
            if (end.kind, end.index) != key:
                continue
            if _angle_diff(np.angle(nxt - point), phi) < np.radians(30):
                return True
    probe = point + 2 * r0 * np.exp(1j * phi)
    return tracer.near_arc(probe, r0) is not None


def _seed_point(sf: SpectralFunction, em, phi, r0, base):
    """Zero of h on the circle |z - E_m| = r0 nearest the predicted angle."""
    e = sf.spec.branch_points
    q = complex(ray_sqrt(em, np.delete(e, base), em + 1e-3 * sf.min_separation))

    def h_at(t):
        # fix the sheet by continuity in t: y ~ q sqrt(r0) exp(i t / 2)
        z = em + r0 * np.exp(1j * t)
        dH, y = sf.increment_from_branch(base, z)
        ref = q * np.sqrt(r0) * np.exp(0.5j * t)
        if abs(y + ref) < abs(y - ref):
            dH, y = -dH, -y
        return dH.real, z, y, dH

    t0, t1 = phi - 0.05, phi + 0.05
    f0, f1 = h_at(t0)[0], h_at(t1)[0]
    for _ in range(60):
        if f1 == f0:
            break
        t2 = t1 - f1 * (t1 - t0) / (f1 - f0)
        t0, f0 = t1, f1
        t1 = t2
        f1, z, y, dH = h_at(t1)
        if abs(f1) < 1e-15 or abs(t1 - t0) < 1e-14:
            return z, y, dH
    f1, z, y, dH = h_at(t1)
    if abs(f1) > 1e-8:
        raise SeedStalled(f"no zero of h near the predicted seed direction at {em:.6g}")
    return z, y, dH


def _increment_from_branch(self, m, z):
    val, y = segment_moments(self.spec, self.spec.branch_points[m], z, start_branch=m, tol=self.tol)
    return complex(val @ self._asc), complex(y)


SpectralFunction.increment_from_branch = _increment_from_branch


# ---------------------------------------------------------------- oracles

def lyapunov(window: CoefficientWindow, z, N: int, start: int | None = None):
    """Growth rate of transfer-matrix products over N sites, for an array of z."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if len(window) < N + 1:
        raise ValidationError(f"window has {len(window)} sites, need {N + 1}")
    i0 = 1 if start is None else window.index(start)
    a, b = window.a, window.b
    # columns: two vectors per z, orthonormalised every step
    u = np.ones(z.shape, complex)
    v = np.zeros(z.shape, complex)
    log_growth = np.zeros(z.shape)
    for i in range(i0, i0 + N):
        nu = ((z - b[i]) * u - a[i - 1] * v) / a[i]
        v = u
        u = nu
        nrm = np.sqrt(np.abs(u) ** 2 + np.abs(v) ** 2)
        log_growth += np.log(nrm)
        u = u / nrm
        v = v / nrm
    return log_growth / N


def finite_section(window: CoefficientWindow, N: int | None = None):
    """Eigenvalues of the N x N truncation (diagnostic only)."""
    N = len(window) if N is None else N
    if N > len(window):
        raise ValidationError("finite section larger than the window")
    a, b = window.a[:N], window.b[:N]
    M = np.diag(b) + np.diag(a[:N - 1], 1) + np.diag(a[:N - 1], -1)
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise EigenFailed(str(exc)) from None
    return {"eigenvalues": np.sort_complex(ev), "flag": "diagnostic"}
