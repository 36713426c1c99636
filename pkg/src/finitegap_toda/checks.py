"""Invariant suite run by ``verify``: one residual per identity, compared with a threshold."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curve import CurveSpec, CutSystem, default_cuts
from .finitegap import DivisorInput, build_model, generate_window
from .periods import compute_periods, invariant_report
from .spectrum import SpectralFunction, curve_means, mean_values
from .theta import ThetaContext
from .toda import build_polys, ck_from_E, hierarchy, recover_curve, stationary_residual, trace_residuals


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.threshold)

    def to_json(self):
        return {"name": self.name, "value": float(self.value), "threshold": self.threshold,
                "passed": self.passed}


def _match_roots(found, expected):
    """Largest distance after greedy nearest matching."""
    left = list(np.asarray(expected, complex))
    worst = 0.0
    for z in np.asarray(found, complex):
        k = int(np.argmin([abs(z - e) for e in left]))
        worst = max(worst, abs(z - left.pop(k)))
    return worst


def theta_checks(tau, tol_theta=1e-12, seed=0):
    ctx = ThetaContext(tau, tol_theta)
    p = ctx.genus
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(8, p)) * 0.4 + 1j * rng.normal(size=(8, p)) * 0.2
    t0 = ctx.theta(z)
    parity = float(np.max(np.abs(ctx.theta(-z) - t0)))
    quasi = 0.0
    for j in range(p):
        shift = ctx.tau[:, j]
        lhs = ctx.theta(z + shift)
        rhs = np.exp(-2j * np.pi * z[:, j] - 1j * np.pi * ctx.tau[j, j]) * t0
        quasi = max(quasi, float(np.max(np.abs(lhs - rhs) / np.abs(rhs))))
        e = np.zeros(p)
        e[j] = 1.0
        quasi = max(quasi, float(np.max(np.abs(ctx.theta(z + e) - t0) / np.abs(t0))))
    return [Check("theta parity", parity, 1e-14 * max(1.0, float(np.max(np.abs(t0))))),
            Check("theta quasi-periodicity", quasi, 1e-10)]


def run_checks(spec: CurveSpec, cuts: CutSystem | None = None, divisor: DivisorInput | None = None,
               half_width=40, mean_half_width=2000, tol_quad=1e-12, tol_theta=1e-12,
               tol_alg=1e-8, tol_mean=1e-6, seed=0):
    """All invariant checks for one curve; returns a list of Check."""
    cuts = cuts or default_cuts(spec)
    p = spec.genus
    data = compute_periods(spec, tol_quad=tol_quad)
    out = []
    rep = invariant_report(data)
    if p:
        out += [Check("tau symmetry", rep["tau_asymmetry"], 1e-10),
                Check("Im tau positive definite", -rep["min_eig_im_tau"], 0.0),
                Check("omega3 a-periods", rep["omega3_a_periods"], 1e-10),
                Check("U0_3 - 2 A(P_inf+) mod lattice", rep["U_minus_2A_inf"], 1e-8)]
        out += theta_checks(data.tau, tol_theta, seed)

    model = build_model(data, divisor, tol_theta)
    n0 = model.divisor.n0
    window, model = generate_window(model, n0 - half_width, n0 + half_width)
    consts = ck_from_E(spec)
    e = spec.branch_points
    if p == 0:
        a2 = (e[1] - e[0]) ** 2 / 16
        out += [Check("genus-0 a^2 closed form", float(np.max(np.abs(window.a ** 2 - a2))), 1e-12),
                Check("genus-0 b closed form",
                      float(np.max(np.abs(window.b - 0.5 * (e[0] + e[1])))), 1e-12)]
    fr, gr = stationary_residual(window, consts, p)
    out.append(Check("stationarity", max(fr, gr), tol_alg))
    polys = build_polys(hierarchy(window, consts, p), tol_alg, check=False)
    rec = recover_curve(polys, tol_alg, check=False)
    out.append(Check("curve constant across sites", rec.deviation, tol_alg))
    out.append(Check("recovered branch points", _match_roots(rec.roots, e) / spec.scale, 1e-6))
    rb, ra = trace_residuals(polys, window, spec)
    out.append(Check("trace formula b", float(np.nanmax(rb)), tol_alg))
    if np.any(np.isfinite(ra)):
        out.append(Check("trace formula a^2", float(np.nanmax(ra)), tol_alg))

    means = curve_means(data)
    sf = SpectralFunction(spec, cuts, means.poly)
    base = int(np.argmin(np.abs(e)))
    out.append(Check("h(E_m) = 0", max(abs(sf.branch_value(m, base)) for m in range(e.size)), 1e-6))
    out += [Check("h' = 2<g> (finite differences)", _derivative_error(sf, seed), 1e-6)]
    if p:
        # the half/full discrepancy is the window's own error bar
        long_window, _ = generate_window(model, n0 - mean_half_width, n0 + mean_half_width)
        wm = mean_values(long_window, consts, p, check=False)
        out.append(Check("window means vs real normalisation",
                         float(np.max(np.abs(wm.means - means.means))), max(wm.error, tol_mean)))
    return out


def _derivative_error(sf: SpectralFunction, seed=0):
    spec = sf.spec
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    count = 0
    delta = 1e-4 * spec.scale
    while count < 5:
        z = complex(*(rng.uniform(-1, 1, 2) * spec.scale))
        if spec.clearance(z) < 0.2 * sf.min_separation or sf.cuts.crossed_by(z - 2 * delta, z + 2 * delta):
            continue
        m, _ = sf._route(z)
        y = sf.upper_y(z)
        hp = sf.evaluate(z + delta, sf.upper_y(z + delta), base=m)[1]
        hm = sf.evaluate(z - delta, sf.upper_y(z - delta), base=m)[1]
        fd = (hp - hm) / (2 * delta)
        exact = sf.derivative(z, y)
        worst = max(worst, abs(fd - exact) / abs(exact))
        count += 1
    return worst
