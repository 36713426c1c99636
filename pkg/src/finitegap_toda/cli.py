"""Command-line front end: curve, periods, coeffs, spectrum, verify, oracle, theta."""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .checks import run_checks
from .curve import curve_document, default_cuts, load_curve_document
from .errors import NumericalError, ValidationError
from .finitegap import build_model, generate_window, load_divisor
from .periods import compute_periods, period_document
from .spectrum import (SpectralFunction, bounding_box, curve_means, finite_section, lyapunov,
                       mean_values, trace_arcs)
from .theta import ThetaContext
from .toda import ck_from_E, window_to_csv

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 2, 3, 4
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class RunConfig:
    tol_quad: float = 1e-12
    tol_theta: float = 1e-12
    tol_alg: float = 1e-8
    tol_arc: float = 1e-8
    tol_mean: float = 1e-6
    window: int = 40
    mean_window: int = 4001
    step: float | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("tol_quad", "tol_theta", "tol_alg", "tol_arc", "tol_mean"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.window < 1:
            raise ValidationError("window half-width must be at least 1")
        if self.mean_window < 9:
            raise ValidationError("mean window must have at least 9 sites")
        if self.step is not None and not self.step > 0:
            raise ValidationError("step must be positive")


# ---------------------------------------------------------------- io helpers

def _read_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {what} file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} file is not valid JSON: {exc}") from None


def _dumps(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _sha256_file(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


class Outputs:
    """Collects artifacts and writes them with a manifest into one directory."""

    def __init__(self, out_dir, command, config, inputs):
        self.dir = out_dir
        self.command = command
        self.config = config
        self.inputs = inputs
        self.files = {}

    def json(self, name, doc):
        doc = dict(doc)
        doc["manifest"] = MANIFEST
        self.files[name] = _dumps(doc)

    def csv(self, name, text):
        self.files[name] = f"# manifest: {MANIFEST}\n" + text

    def write(self):
        if self.dir is None:
            for name, text in self.files.items():
                if name.endswith(".json"):
                    sys.stdout.write(text)
            return
        os.makedirs(self.dir, exist_ok=True)
        for name, text in self.files.items():
            with open(os.path.join(self.dir, name), "w") as fh:
                fh.write(text)
        manifest = {
            "command": self.command,
            "config": asdict(self.config),
            "inputs": {k: _sha256_file(v) for k, v in sorted(self.inputs.items()) if v},
            "outputs": {k: hashlib.sha256(t.encode()).hexdigest() for k, t in sorted(self.files.items())},
            "versions": {"finitegap_toda": __version__, "numpy": np.__version__,
                         "python": platform.python_version()},
        }
        with open(os.path.join(self.dir, MANIFEST), "w") as fh:
            fh.write(_dumps(manifest))


def _curve(args):
    if not args.curve:
        raise ValidationError("--curve is required")
    spec, cuts = load_curve_document(_read_json(args.curve, "curve"))
    return spec, cuts or default_cuts(spec)


def _divisor(args):
    return load_divisor(args.divisor) if getattr(args, "divisor", None) else None


def _config(args):
    return RunConfig(tol_quad=args.tol_quad, tol_theta=args.tol_theta, tol_alg=args.tol_alg,
                     tol_arc=args.tol_arc, tol_mean=args.tol_mean, window=args.window,
                     mean_window=args.mean_window, step=args.step, seed=args.seed)


def _cx(z):
    return [float(np.real(z)), float(np.imag(z))]


# ---------------------------------------------------------------- subcommands

def cmd_curve(args, cfg, out):
    spec, cuts = _curve(args)
    doc = curve_document(spec, cuts)
    doc["genus"] = spec.genus
    out.json("curve.json", doc)
    return EXIT_OK


def cmd_periods(args, cfg, out):
    spec, cuts = _curve(args)
    data = compute_periods(spec, tol_quad=cfg.tol_quad)
    out.json("periods.json", period_document(data))
    return EXIT_OK


def _window(args, cfg, half_width):
    spec, cuts = _curve(args)
    data = compute_periods(spec, tol_quad=cfg.tol_quad)
    model = build_model(data, _divisor(args), cfg.tol_theta)
    n0 = model.divisor.n0
    window, model = generate_window(model, n0 - half_width, n0 + half_width)
    return spec, cuts, data, model, window


def cmd_coeffs(args, cfg, out):
    _, _, _, _, window = _window(args, cfg, cfg.window)
    out.csv("coeffs.csv", window_to_csv(window))
    return EXIT_OK


def cmd_spectrum(args, cfg, out):
    half = cfg.mean_window // 2
    spec, cuts, data, model, window = _window(args, cfg, half)
    exact = curve_means(data)
    window_means = mean_values(window, ck_from_E(spec), spec.genus, cfg.tol_mean,
                               check=args.means == "window")
    gap = float(np.max(np.abs(window_means.means - exact.means)))
    means = window_means if args.means == "window" else exact
    res = trace_arcs(means, spec, cuts, bounding_box(window), step=cfg.step, tol_arc=cfg.tol_arc)
    doc = res.to_json()
    doc["means"] = {"source": means.source, "window_error": window_means.error,
                    "route_discrepancy": gap,
                    "window_lambda_tilde": [_cx(z) for z in window_means.lambda_tilde]}
    out.json("spectrum.json", doc)
    out.csv("arcs.csv", res.to_csv())
    if gap > max(window_means.error, cfg.tol_mean):
        print(f"mean values from the window and from the curve disagree by {gap:.3g}",
              file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_verify(args, cfg, out):
    spec, cuts = _curve(args)
    checks = run_checks(spec, cuts, _divisor(args), half_width=cfg.window,
                        mean_half_width=cfg.mean_window // 2, tol_quad=cfg.tol_quad,
                        tol_theta=cfg.tol_theta, tol_alg=cfg.tol_alg, tol_mean=cfg.tol_mean,
                        seed=cfg.seed)
    ok = all(c.passed for c in checks)
    out.json("verify.json", {"passed": ok, "checks": [c.to_json() for c in checks]})
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.3e} (< {c.threshold:.1e})",
              file=sys.stderr)
    return EXIT_OK if ok else EXIT_INVARIANT


def _grid(text):
    try:
        parts = text.split(",")
        re0, re1, im0, im1 = (float(x) for x in parts[:4])
        nx, ny = int(parts[4]), int(parts[5])
    except (ValueError, IndexError):
        raise ValidationError("--grid must be re0,re1,im0,im1,nx,ny") from None
    if len(parts) != 6 or nx < 1 or ny < 1:
        raise ValidationError("--grid must be re0,re1,im0,im1,nx,ny with nx, ny >= 1")
    xs, ys = np.linspace(re0, re1, nx), np.linspace(im0, im1, ny)
    return (xs[None, :] + 1j * ys[:, None]).ravel()


def cmd_oracle(args, cfg, out):
    if not args.grid:
        raise ValidationError("--grid is required")
    zs = _grid(args.grid)
    N = args.lyapunov_n
    spec, cuts, data, model, window = _window(args, cfg, max(cfg.window, (N + 2) // 2))
    gam = lyapunov(window, zs, N)
    sf = SpectralFunction(spec, cuts, curve_means(data).poly)
    lines = ["re,im,gamma,half_abs_h"]
    for z, g in zip(zs, gam):
        try:
            hz = 0.5 * abs(sf.h(z))
        except NumericalError:
            hz = float("nan")
        lines.append(",".join(repr(float(x)) for x in (z.real, z.imag, g, hz)))
    out.csv("lyapunov.csv", "\n".join(lines) + "\n")
    if args.finite_section:
        fs = finite_section(window, args.finite_section)
        rows = ["re,im"] + [f"{float(z.real)!r},{float(z.imag)!r}" for z in fs["eigenvalues"]]
        out.csv("finite_section.csv", f"# flag: {fs['flag']}\n" + "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_theta(args, cfg, out):
    doc = _read_json(args.input, "theta input")
    try:
        tau = np.array([[complex(*x) for x in row] for row in doc["tau"]])
        zs = np.array([[complex(*x) for x in row] for row in doc["z"]])
    except (KeyError, TypeError, ValueError):
        raise ValidationError("theta input needs 'tau' (p x p of [re, im]) and 'z' "
                              "(list of p-vectors of [re, im])") from None
    ctx = ThetaContext(tau, cfg.tol_theta)
    vals = ctx.theta(zs)
    grads = ctx.gradient(zs)
    out.json("theta.json", {"theta": [_cx(v) for v in vals],
                             "gradient": [[_cx(g) for g in row] for row in grads],
                             "lattice_size": ctx.lattice_size})
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--curve")
    common.add_argument("--divisor")
    common.add_argument("--out", help="output directory (JSON goes to stdout when omitted)")
    common.add_argument("--window", type=int, default=40, help="coefficient window half-width")
    common.add_argument("--mean-window", type=int, default=4001, help="sites used for mean values")
    common.add_argument("--step", type=float, default=None, help="arc tracing step")
    for name, default in (("quad", 1e-12), ("theta", 1e-12), ("alg", 1e-8), ("arc", 1e-8),
                          ("mean", 1e-6)):
        common.add_argument(f"--tol-{name}", type=float, default=default)
    common.add_argument("--grid", help="re0,re1,im0,im1,nx,ny")
    common.add_argument("--seed", type=int, default=0)

    parser = argparse.ArgumentParser(prog="finitegap-toda", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("curve", parents=[common], help="validate and echo a curve")
    sub.add_parser("periods", parents=[common], help="period matrix and related constants")
    co = sub.add_parser("coeffs", help="coefficient windows")
    co_sub = co.add_subparsers(dest="action", required=True)
    co_sub.add_parser("generate", parents=[common])
    sp = sub.add_parser("spectrum", help="spectral arcs")
    sp_sub = sp.add_subparsers(dest="action", required=True)
    tr = sp_sub.add_parser("trace", parents=[common])
    tr.add_argument("--means", choices=("curve", "window"), default="curve",
                    help="mean polynomial used for tracing (the other route is a cross-check)")
    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    orc = sub.add_parser("oracle", parents=[common], help="Lyapunov / finite-section sweep")
    orc.add_argument("--lyapunov-n", type=int, default=100000)
    orc.add_argument("--finite-section", type=int, default=0)
    th = sub.add_parser("theta", help="theta diagnostics")
    th_sub = th.add_subparsers(dest="action", required=True)
    ev = th_sub.add_parser("eval", parents=[common])
    ev.add_argument("--input", required=True, help="JSON with tau and z")
    return parser


COMMANDS = {"curve": cmd_curve, "periods": cmd_periods, "coeffs": cmd_coeffs,
            "spectrum": cmd_spectrum, "verify": cmd_verify, "oracle": cmd_oracle,
            "theta": cmd_theta}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        inputs = {"curve": args.curve, "divisor": args.divisor,
                  "theta_input": getattr(args, "input", None)}
        command = " ".join(filter(None, [args.command, getattr(args, "action", None)]))
        out = Outputs(args.out, command, cfg, inputs)
        code = COMMANDS[args.command](args, cfg, out)
        out.write()
        return code
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
