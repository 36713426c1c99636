"""Theta-function synthesis of finite-gap Toda coefficients and Baker-Akhiezer functions.

With z(P, D) = Xi - A(P) + alpha(D) and the linear flow of the Dirichlet
divisor, the argument at P_inf_plus is affine in the site,

    z(P_inf_plus, mu(n)) = A_vec - B_vec n,    B_vec = U0_3,

so b(n) is a directional log-derivative of a theta ratio and a(n)^2 a
second difference of log theta.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .curve import CurveSpec, CutSystem, SurfacePoint
from .errors import (CalibrationDegenerate, OnThetaDivisor, PoleAtDivisor, SpecialDivisor,
                     ValidationError)
from .periods import PeriodData, abel_map, moments_to_point, omega3_integral
from .theta import ThetaContext
from .toda import CoefficientWindow, SpectralPolys


# ---------------------------------------------------------------- divisor input

@dataclass(frozen=True)
class DivisorInput:
    """Initial Dirichlet points (mu_j, sign_j * sqrt_R(mu_j)) at site n0."""

    mu: np.ndarray
    sheet_signs: np.ndarray
    n0: int = 0

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=complex).ravel()
        signs = np.asarray(self.sheet_signs, dtype=float).ravel()
        if mu.shape != signs.shape:
            raise ValidationError("mu and sheet_signs must have equal length")
        bad = np.flatnonzero(~np.isin(signs, (-1.0, 1.0)))
        if bad.size:
            raise ValidationError(f"sheet sign {bad[0]} must be +1 or -1")
        bad = np.flatnonzero(~np.isfinite(mu))
        if bad.size:
            raise ValidationError(f"mu {bad[0]} is not finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sheet_signs", signs)
        object.__setattr__(self, "n0", int(self.n0))

    def points(self, cuts: CutSystem) -> list:
        return [SurfacePoint(complex(m), complex(s * cuts.sqrt_R(m)))
                for m, s in zip(self.mu, self.sheet_signs)]

    def to_json(self) -> dict:
        return {"mu": [[float(m.real), float(m.imag)] for m in self.mu],
                "sheet_signs": [int(s) for s in self.sheet_signs], "n0": self.n0}

    @classmethod
    def from_json(cls, doc) -> "DivisorInput":
        if not isinstance(doc, dict):
            raise ValidationError("divisor document must be a JSON object")
        for key in ("mu", "sheet_signs"):
            if key not in doc:
                raise ValidationError(f"divisor document lacks '{key}'")
        mu = []
        for i, item in enumerate(doc["mu"]):
            if not (isinstance(item, (list, tuple)) and len(item) == 2):
                raise ValidationError(f"mu {i} must be a [re, im] pair")
            try:
                mu.append(complex(float(item[0]), float(item[1])))
            except (TypeError, ValueError):
                raise ValidationError(f"mu {i} is not numeric") from None
        return cls(np.array(mu, dtype=complex), np.array(doc["sheet_signs"], dtype=float),
                   int(doc.get("n0", 0)))


def load_divisor(path) -> DivisorInput:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"divisor file is not valid JSON: {exc}") from None
    return DivisorInput.from_json(doc)


def default_divisor(data: PeriodData, n0: int = 0) -> DivisorInput:
    """A generic divisor: upper-sheet points at the centres of the first p connectors.

    For a real curve the points sit at the gap centres instead, which gives
    real coefficients (the self-adjoint case).
    """
    p = data.genus
    e = data.spec.branch_points
    if p and np.all(e.imag == 0):
        x = np.sort(e.real)
        mu = 0.5 * (x[1:-1:2] + x[2::2])
        return DivisorInput(mu.astype(complex), np.ones(p), n0)
    chain = data.basis.chain
    mu = []
    for j in range(p):
        u, v = e[chain[2 * j + 1]], e[chain[2 * j + 2]]
        mu.append(0.5 * (u + v) + 0.15j * (v - u))
    return DivisorInput(np.array(mu, complex), np.ones(p), n0)


# ---------------------------------------------------------------- flow vectors

@dataclass(frozen=True)
class ThetaFlowVectors:
    A_vec: np.ndarray
    B_vec: np.ndarray
    C_vec: np.ndarray
    Lambda0: complex
    n0: int
    divisor_abel: np.ndarray = field(repr=False, default=None)


def flow_vectors(data: PeriodData, divisor: DivisorInput, ctx: ThetaContext | None = None,
                 tol_theta: float = 1e-12) -> ThetaFlowVectors:
    p = data.genus
    if divisor.mu.size != p:
        raise ValidationError(f"divisor has {divisor.mu.size} points, genus is {p}")
    e = data.spec.branch_points
    lam0 = complex(0.5 * np.sum(e) - np.sum(data.lam))
    if p == 0:
        z = np.zeros(0, complex)
        return ThetaFlowVectors(z, z, z, lam0, divisor.n0, z)
    pts = divisor.points(data.basis.cuts)
    alpha = np.sum([abel_map(data, P) for P in pts], axis=0)
    B = data.U0_3
    A = data.Xi - data.A_inf + B * divisor.n0 + alpha
    ctx = ctx or ThetaContext(data.tau, tol_theta)
    size = float(ctx.normalized_abs(A - B * divisor.n0))
    if size < np.sqrt(ctx.tol_theta):
        raise SpecialDivisor(f"theta vanishes at the initial divisor (|theta| ~ {size:.3g})")
    return ThetaFlowVectors(A, B, A + B, lam0, divisor.n0, alpha)


def _sites(n_range):
    lo, hi = n_range
    return np.arange(int(lo), int(hi) + 1)


def generate_b(vectors: ThetaFlowVectors, ctx: ThetaContext, c_rows: np.ndarray, n_range):
    """b(n) = Lambda0 + sum_j c_j(p) d_j log[theta(C - B n) / theta(A - B n)].

    The orientation of the ratio is the one for which the generated (a, b)
    solve the stationary equation with the curve's summation constants.
    """
    n = _sites(n_range)
    p = ctx.genus
    if p == 0:
        return np.full(n.size, vectors.Lambda0, dtype=complex)
    weights = c_rows[:, p - 1]
    z1 = vectors.A_vec[None, :] - np.outer(n, vectors.B_vec)
    z2 = vectors.C_vec[None, :] - np.outer(n, vectors.B_vec)
    try:
        vals = ctx.dirlog(weights, z2, z1)
    except OnThetaDivisor as exc:
        raise OnThetaDivisor(str(exc), sites=[int(n[s]) for s in exc.sites]) from None
    return vectors.Lambda0 + vals


def log_theta_flow(vectors: ThetaFlowVectors, ctx: ThetaContext, n):
    """log theta(z(P_inf_plus, mu(n))) for integer array n."""
    n = np.asarray(n)
    if ctx.genus == 0:
        return np.zeros(n.shape, complex)
    z = vectors.A_vec[None, :] - np.outer(n, vectors.B_vec)
    return ctx.log_theta(z)


def trace_a_squared(spec: CurveSpec, points: list, b: complex, separation=1e-6) -> complex:
    """a(n)^2 from the Dirichlet points at n and b(n) via the trace formula."""
    e = spec.branch_points
    mu = np.array([P.z for P in points], dtype=complex)
    yh = np.array([P.y for P in points], dtype=complex)
    p = mu.size
    for j in range(p):
        for k in range(j + 1, p):
            if abs(mu[j] - mu[k]) < separation * spec.scale:
                raise CalibrationDegenerate(f"Dirichlet points {j} and {k} coincide")
    total = 0j
    for j in range(p):
        prod = np.prod([mu[j] - mu[k] for k in range(p) if k != j])
        total += yh[j] / prod
    b2 = 0.5 * np.sum(e ** 2) - np.sum(mu ** 2)
    return complex(0.5 * total + 0.25 * (b2 - b * b))


def generate_a(vectors: ThetaFlowVectors, ctx: ThetaContext, divisor: DivisorInput,
               data: PeriodData, b_n0: complex, n_range):
    """a(n) with a(n)^2 = a_tilde^2 theta(n-1) theta(n+1) / theta(n)^2.

    a_tilde^2 is calibrated at n0 by the trace formula.  Returns (a, a_tilde^2).
    The sign of a(n0) has nonnegative real part; other signs follow by
    continuity from neighbouring sites.
    """
    n = _sites(n_range)
    n0 = divisor.n0
    if not n[0] <= n0 <= n[-1]:
        raise ValidationError("site range must contain n0")
    pts = divisor.points(data.basis.cuts)
    a0_sq = trace_a_squared(data.spec, pts, b_n0)
    ext = np.arange(n[0] - 1, n[-1] + 2)
    lt = log_theta_flow(vectors, ctx, ext)
    if ctx.genus:
        sizes = ctx.normalized_abs(vectors.A_vec[None, :] - np.outer(ext, vectors.B_vec))
        bad = np.flatnonzero(sizes < np.sqrt(ctx.tol_theta))
        if bad.size:
            raise OnThetaDivisor("theta vanishes along the flow", sites=[int(ext[i]) for i in bad])
    second = lt[:-2] + lt[2:] - 2.0 * lt[1:-1]
    i0 = n0 - n[0]
    log_at_sq = np.log(a0_sq) - second[i0]
    a_sq = np.exp(log_at_sq + second)
    root = np.sqrt(a_sq)
    a = root.copy()
    if a[i0].real < 0 or (a[i0].real == 0 and a[i0].imag < 0):
        a[i0] = -a[i0]
    for i in range(i0 + 1, n.size):
        a[i] = root[i] if abs(root[i] - a[i - 1]) <= abs(root[i] + a[i - 1]) else -root[i]
    for i in range(i0 - 1, -1, -1):
        a[i] = root[i] if abs(root[i] - a[i + 1]) <= abs(root[i] + a[i + 1]) else -root[i]
    return a, complex(np.exp(log_at_sq))


# ---------------------------------------------------------------- bundled model

@dataclass(frozen=True)
class FiniteGapModel:
    """Curve data, theta context and flow vectors for one divisor."""

    data: PeriodData
    ctx: ThetaContext
    divisor: DivisorInput
    vectors: ThetaFlowVectors
    a_tilde_sq: complex = 0j

    @property
    def spec(self) -> CurveSpec:
        return self.data.spec


def build_model(data: PeriodData, divisor: DivisorInput | None = None,
                tol_theta: float = 1e-12) -> FiniteGapModel:
    divisor = divisor or default_divisor(data)
    ctx = ThetaContext(data.tau if data.genus else np.zeros((0, 0)), tol_theta)
    vec = flow_vectors(data, divisor, ctx)
    return FiniteGapModel(data, ctx, divisor, vec)


def generate_window(model: FiniteGapModel, n_lo: int, n_hi: int):
    """Coefficient window on [n_lo, n_hi] (must contain n0); returns (window, model)."""
    rng = (n_lo, n_hi)
    b = generate_b(model.vectors, model.ctx, model.data.c_rows, rng)
    n0 = model.divisor.n0
    if not n_lo <= n0 <= n_hi:
        raise ValidationError("window must contain the divisor site n0")
    a, at2 = generate_a(model.vectors, model.ctx, model.divisor, model.data, b[n0 - n_lo], rng)
    model = FiniteGapModel(model.data, model.ctx, model.divisor, model.vectors, at2)
    return CoefficientWindow(n_lo, a, b, provenance="theta"), model


# ---------------------------------------------------------------- Baker-Akhiezer and phi

def baker_akhiezer(model: FiniteGapModel, window: CoefficientWindow, P: SurfacePoint, n,
                   path=None):
    """psi(P, n, n0) for integer array n.

    The normalisation C(n, n0) is telescoped from
    C(m+1) / C(m) = a(m) theta(m) / (exp(e3_0) theta(m+1)),
    whose square is the theta quotient defining C, with the sign fixed by a(m).
    """
    n = np.atleast_1d(np.asarray(n, dtype=int))
    data, ctx, vec = model.data, model.ctx, model.vectors
    n0 = model.divisor.n0
    mom = moments_to_point(data, P, path).moments
    i3 = omega3_integral(data, mom)
    lo, hi = min(n.min(), n0), max(n.max(), n0)
    if lo < window.n_lo or hi > window.n_hi:
        raise ValidationError("requested sites exceed the coefficient window")
    sites = np.arange(lo, hi + 1)
    lt_inf = log_theta_flow(vec, ctx, np.arange(lo, hi + 2))
    steps = (np.log(window.a[sites - window.n_lo]) + lt_inf[:-1] - lt_inf[1:] - data.e3_0)
    cum = np.concatenate([[0j], np.cumsum(steps)])        # log C(m) - log C(lo), m = lo..hi+1
    log_c = cum[: sites.size] - cum[n0 - lo]
    if data.genus:
        shift = data.A_inf - data.c_rows @ mom[: data.genus]
        zP = vec.A_vec[None, :] - np.outer(sites, vec.B_vec) + shift[None, :]
        if np.any(ctx.normalized_abs(zP) < np.sqrt(ctx.tol_theta)):
            raise OnThetaDivisor("P lies on a pole of the Baker-Akhiezer function")
        lt_p = ctx.log_theta(zP)
    else:
        lt_p = np.zeros(sites.size, complex)
    logpsi = log_c + lt_p - lt_p[n0 - lo] + (sites - n0) * i3
    out = np.exp(logpsi)
    out[n0 - lo] = 1.0
    return out[n - lo]


def phi(P: SurfacePoint, n: int, polys: SpectralPolys) -> complex:
    """phi(P, n) = psi(P, n+1) / psi(P, n) from F_p and G_{p+1}."""
    z, y = complex(P.z), complex(P.y)
    F = polys.eval_F(z, n)
    G = polys.eval_G(z, n)
    a = polys.a_at(n)
    if abs(y + G) > abs(y - G):
        Fn = polys.eval_F(z, n + 1)
        return complex(-2 * a * Fn / (y + G))
    if abs(F) == 0:
        raise PoleAtDivisor(f"F_p(z, {n}) vanishes")
    return complex((y - G) / (2 * a * F))
