"""End-to-end acceptance checks; each records one PASS/FAIL line printed after the run."""
import time

import numpy as np
import pytest

from conftest import CURVES, ba_residuals, curve, periods, window
from finitegap_toda.checks import theta_checks
from finitegap_toda.curve import CurveSpec, default_cuts, point_segment_distance
from finitegap_toda.finitegap import build_model, generate_window
from finitegap_toda.periods import compute_periods, invariant_report
from finitegap_toda.spectrum import (SpectralFunction, bounding_box, curve_means, in_box,
                                     lyapunov, trace_arcs)
from finitegap_toda.theta import ThetaContext
from finitegap_toda.toda import (build_polys, ck_from_E, curve_polynomial, hierarchy,
                                 recover_curve, stationary_residual, trace_residuals)

RESULTS = {}
GENERIC = ["g1_complex", "g2_complex"]


def record(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    assert ok, line


def polys_for(name, half_width=40):
    spec, _ = curve(name)
    w, _ = window(name, half_width)
    return spec, w, build_polys(hierarchy(w, ck_from_E(spec), spec.genus))


def loop_period(sf, centre, rx, ry, n=96):
    t = np.linspace(0, 2 * np.pi, n + 1)
    zs = centre + rx * np.cos(t) + 1j * ry * np.sin(t)
    y = sf.upper_y(zs[0])
    total = 0j
    for a, b in zip(zs[:-1], zs[1:]):
        val, y = sf.increment(a, y, b)
        total += val
    return total / 2 / (1j * np.pi)


def distance_to_arcs(z, arcs):
    return min(point_segment_distance(z, p, q) for arc in arcs
               for p, q in zip(arc.points[:-1], arc.points[1:]))


def test_1_genus0_closed_form():
    t = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(5):
        e0, e1 = rng.normal(size=2) + 1j * rng.normal(size=2)
        data = compute_periods(CurveSpec.from_points([e0, e1]))
        w, _ = generate_window(build_model(data), -10, 10)
        worst = max(worst, np.max(np.abs(w.a ** 2 - (e1 - e0) ** 2 / 16)),
                    np.max(np.abs(w.b - 0.5 * (e0 + e1))))
    dt = time.perf_counter() - t
    record(1, worst < 1e-12 and dt < 1, f"max error {worst:.1e} (< 1e-12), {dt:.2f} s (< 1 s)")


def test_2_self_adjoint_bands():
    t = time.perf_counter()
    spec, cuts = curve("g1_real")
    w, _ = window("g1_real")
    res = trace_arcs(curve_means(periods("g1_real")), spec, cuts, bounding_box(w))
    bands = [(-2.0, -1.0), (1.0, 2.0)]
    # Hausdorff distance between the traced polylines and the two bands
    to_bands = max(min(point_segment_distance(z, lo, hi) for lo, hi in bands)
                   for arc in res.arcs for z in arc.points)
    from_bands = max(distance_to_arcs(x, res.arcs)
                     for lo, hi in bands for x in np.linspace(lo, hi, 400))
    haus = max(to_bands, from_bands)
    ends = [end for arc in res.arcs for end in (arc.start, arc.end)]
    hit = sorted(end.index for end in ends if end.kind == "E")
    dt = time.perf_counter() - t
    ok = haus < 4e-6 and len(res.arcs) == 2 and hit == [0, 1, 2, 3] and dt < 60
    record(2, ok, f"{len(res.arcs)} arcs, endpoints at E{hit}, Hausdorff {haus:.1e} (< 4e-6), "
                  f"{dt:.2f} s")


def test_3_stationarity_and_recovery():
    t = time.perf_counter()
    stat, rec_err = 0.0, 0.0
    for name in GENERIC:
        spec, w, polys = polys_for(name)
        stat = max(stat, *stationary_residual(w, ck_from_E(spec), spec.genus))
        roots = recover_curve(polys).roots
        left = list(spec.branch_points)
        for r in roots:
            k = int(np.argmin(np.abs(np.array(left) - r)))
            rec_err = max(rec_err, abs(r - left.pop(k)))
    dt = time.perf_counter() - t
    ok = stat < 1e-8 and rec_err < 1e-6 and dt < 300
    record(3, ok, f"stationary residual {stat:.1e} (< 1e-8), recovered E error {rec_err:.1e} "
                  f"(< 1e-6), {dt:.2f} s")


def test_4_curve_constant_across_sites():
    rng = np.random.default_rng(4)
    worst = 0.0
    for name in GENERIC:
        spec, _, polys = polys_for(name, 30)
        zs = (rng.normal(size=5) + 1j * rng.normal(size=5)) * spec.scale
        vals = np.array([np.polyval(curve_polynomial(polys, s), zs) for s in range(50)])
        worst = max(worst, float(np.max(np.abs(vals - vals[0]) / np.abs(vals[0]))))
    record(4, worst < 1e-8, f"relative variation of R over 50 sites {worst:.1e} (< 1e-8)")


def test_5_period_certificates():
    worst = {"tau_asymmetry": 0.0, "omega3_a_periods": 0.0, "U_minus_2A_inf": 0.0}
    min_eig = np.inf
    for name in CURVES:
        if curve(name)[0].genus == 0:
            continue
        rep = invariant_report(periods(name))
        for k in worst:
            worst[k] = max(worst[k], rep[k])
        min_eig = min(min_eig, rep["min_eig_im_tau"])
    ok = (worst["tau_asymmetry"] < 1e-10 and min_eig > 0 and worst["omega3_a_periods"] < 1e-10
          and worst["U_minus_2A_inf"] < 1e-8)
    record(5, ok, f"asymmetry {worst['tau_asymmetry']:.1e}, min eig Im tau {min_eig:.3f}, "
                  f"a-periods {worst['omega3_a_periods']:.1e}, "
                  f"U - 2A {worst['U_minus_2A_inf']:.1e}")


def test_6_theta():
    ctx = ThetaContext(np.array([[1j]]))
    # independent oracle: direct sum over |n| <= 30
    n = np.arange(-30, 31)
    direct = np.sum(np.exp(-np.pi * n ** 2))
    value = ctx.theta(np.zeros((1, 1)))[0]
    err = max(abs(value - 1.0864348112133080), abs(direct - 1.0864348112133080))
    parity, quasi = theta_checks(periods("g2_complex").tau)
    ctx2 = ThetaContext(periods("g2_complex").tau)
    rng = np.random.default_rng(6)
    z = rng.normal(size=(5, 2)) * 0.3 + 0.1j * rng.normal(size=(5, 2))
    grad = ctx2.gradient(z)
    d = 1e-6
    fd_err = 0.0
    for j in range(2):
        dz = np.zeros(2)
        dz[j] = d
        fd = (ctx2.theta(z + dz) - ctx2.theta(z - dz)) / (2 * d)
        fd_err = max(fd_err, float(np.max(np.abs(fd - grad[:, j]) / np.abs(grad[:, j]))))
    ok = err < 1e-9 and parity.passed and quasi.value < 1e-10 and fd_err < 1e-6
    record(6, ok, f"theta(0|i) error {err:.1e} (< 1e-9), parity {parity.value:.1e}, "
                  f"quasi-periodicity {quasi.value:.1e} (< 1e-10), gradient {fd_err:.1e} (< 1e-6)")


def test_7_baker_akhiezer():
    worst = {}
    for name in GENERIC:
        for k, v in ba_residuals(name, n_points=10, n_sites=40).items():
            worst[k] = max(worst.get(k, 0.0), v)
    exact = worst.pop("psi(n0) = 1") == 0.0
    top = max(worst.values())
    record(7, exact and top < 1e-8,
           f"psi(n0) = 1 {'exactly' if exact else 'NOT exactly'}, worst identity residual "
           f"{top:.1e} (< 1e-8) over {len(worst)} identities")


def test_8_trace_formula():
    worst = 0.0
    for name in GENERIC:
        spec, w, polys = polys_for(name)
        rb, ra = trace_residuals(polys, w, spec)
        worst = max(worst, float(np.max(rb)), float(np.nanmax(ra)))
    record(8, worst < 1e-8, f"worst trace residual {worst:.1e} (< 1e-8)")


def _spectral(name):
    spec, cuts = curve(name)
    return spec, SpectralFunction(spec, cuts, curve_means(periods(name)).poly)


@pytest.mark.xfail(strict=True, reason="band cycles of a generic curve integrate to i pi times "
                                        "twice the band's density of states")
def test_9_spectral_function_structure():
    h_e = 0.0
    deriv = 0.0
    for name in ("g1_real",) + tuple(GENERIC):
        spec, sf = _spectral(name)
        e = spec.branch_points
        base = int(np.argmin(np.abs(e)))
        h_e = max(h_e, max(abs(sf.branch_value(m, base)) for m in range(e.size)))
        z, d = 1.7 + 1.9j, 1e-4
        fd = (sf.evaluate(z + d, base=0)[1] - sf.evaluate(z - d, base=0)[1]) / (2 * d)
        deriv = max(deriv, abs(fd - sf.derivative(z, sf.upper_y(z))) / abs(fd))
    # cycle integrals of <F>/y dz divided by i pi
    quant = {}
    _, sf = _spectral("g1_real")
    quant["symmetric band"] = loop_period(sf, -1.5, 0.8, 0.4)
    quant["infinity"] = loop_period(sf, 0, 10, 10)
    spec = CurveSpec.from_points([-2, -0.5, 1, 2])
    sf = SpectralFunction(spec, default_cuts(spec), curve_means(compute_periods(spec)).poly)
    quant["asymmetric band"] = loop_period(sf, -1.25, 0.9, 0.4)
    off = {k: abs(v - round(v.real)) for k, v in quant.items()}
    ok = h_e < 1e-6 and deriv < 1e-6 and max(off.values()) < 1e-6
    shown = ", ".join(f"{k} {v.real:.6f}" for k, v in quant.items())
    record(9, ok, f"h(E_m) {h_e:.1e} (< 1e-6), h' {deriv:.1e} (< 1e-6), "
                  f"cycle / i pi: {shown} (integer to 1e-6)")


def test_10_arc_geometry():
    spec, cuts = curve("g2_complex")
    w, _ = window("g2_complex")
    box = bounding_box(w)
    res = trace_arcs(curve_means(periods("g2_complex")), spec, cuts, box)
    e = spec.branch_points
    counts = [int(c) for c in res.endpoint_counts(e.size)]
    worst_angle = 0.0
    for seed in res.seeds:
        m, phi = seed["branch"], seed["predicted"]
        if seed["measured"] is not None:
            got = seed["measured"]
        else:
            # the arc arrived here; use its node nearest E_m
            pts = [arc.points[-2] if (arc.end.kind, arc.end.index) == ("E", m) else arc.points[1]
                   for arc in res.arcs
                   if ("E", m) in ((arc.start.kind, arc.start.index), (arc.end.kind, arc.end.index))]
            got = min((np.angle(p - e[m]) for p in pts),
                      key=lambda a: abs(np.angle(np.exp(1j * (a - phi)))))
        worst_angle = max(worst_angle, abs(np.degrees(np.angle(np.exp(1j * (got - phi))))))
    inside = all(in_box(box, z, margin=1e-9 * spec.diameter) for arc in res.arcs for z in arc.points)
    closed = sum(arc.start.kind not in ("E", "crossing") or arc.end.kind not in ("E", "crossing")
                 for arc in res.arcs)
    ok = counts == [1] * e.size and worst_angle < 5 and inside and closed == 0
    record(10, ok, f"endpoint counts {counts}, worst tangent angle {worst_angle:.2f} deg (< 5), "
                   f"inside box {inside}, open or closed arcs {closed}")


def test_11_lyapunov_oracle():
    t = time.perf_counter()
    name = "g2_complex"
    spec, cuts = curve(name)
    data = periods(name)
    means = curve_means(data)
    sf = SpectralFunction(spec, cuts, means.poly)
    short, _ = window(name)
    box = bounding_box(short)
    res = trace_arcs(means, spec, cuts, box)
    rng = np.random.default_rng(11)
    nodes = np.concatenate([arc.points[1:-1] for arc in res.arcs])
    on = rng.choice(nodes, 20, replace=False)
    off = []
    x0, x1, y0, y1 = box
    while len(off) < 20:
        z = complex(rng.uniform(x0 - 0.5, x1 + 0.5), rng.uniform(y0 - 0.5, y1 + 0.5))
        if distance_to_arcs(z, res.arcs) > 0.2:
            off.append(z)
    pts = np.concatenate([on, off])
    N = 100_000
    long_w, _ = generate_window(build_model(data), -N // 2 - 2, N // 2 + 2)
    gamma = lyapunov(long_w, pts, N)
    half_h = np.array([0.5 * abs(sf.h(z)) for z in pts])
    agree = float(np.mean((gamma < 0.01) == (half_h < 0.01)))
    dt = time.perf_counter() - t
    record(11, agree >= 0.95 and dt < 300,
           f"Lyapunov and h agree at {agree:.0%} of 40 points (>= 95%), N = {N}, {dt:.1f} s")
