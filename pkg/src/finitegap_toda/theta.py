"""Riemann theta function with argument reduction and ellipsoidal truncation.

theta(z) = sum_n exp(2 pi i <n, z> + pi i <n, tau n>).

Arguments are first shifted by lattice vectors m + tau k into the
fundamental cell; the quasi-periodicity factor is carried in log form so
that callers can combine several thetas in a ratio without overflow.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OnThetaDivisor, ThetaOverflow, ValidationError

_CHUNK = 4096
_LOG_MAX = 700.0


@dataclass(frozen=True)
class ThetaContext:
    """Precomputed lattice data for a fixed period matrix."""

    tau: np.ndarray = field(repr=False)
    tol_theta: float = 1e-12
    truncation_radius: float = 0.0
    extra_radius: float = 0.0

    def __post_init__(self):
        tau = np.atleast_2d(np.asarray(self.tau, dtype=complex)).copy()
        p = tau.shape[0]
        if tau.shape != (p, p):
            raise ValidationError("tau must be square")
        if p and np.max(np.abs(tau - tau.T)) > 1e-8 * max(1.0, np.max(np.abs(tau))):
            raise ValidationError("tau must be symmetric")
        tau = 0.5 * (tau + tau.T)
        tau.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        if p == 0:
            object.__setattr__(self, "_lattice", np.zeros((1, 0)))
            return
        y = tau.imag
        eig = np.linalg.eigvalsh(y)
        if eig[0] <= 0:
            raise ValidationError("Im tau must be positive definite")
        chol = np.linalg.cholesky(y)            # y = chol chol^T
        # every reduced argument has y^{-1} Im z in the unit cube centred at 0
        r0 = 0.5 * float(np.sum(np.sqrt(np.diag(y))))
        radius = self.truncation_radius
        if radius <= 0:
            # tail ~ exp(-pi R^2) times a polynomial volume factor
            radius = np.sqrt((-np.log(self.tol_theta) + 2.0 * p + 4.0) / np.pi) + 1.0
        radius += self.extra_radius
        reach = radius + r0
        yinv = np.linalg.inv(y)
        bounds = np.floor(reach * np.sqrt(np.diag(yinv))).astype(int)
        axes = [np.arange(-b, b + 1) for b in bounds]
        grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(p, -1).T
        norms = np.linalg.norm(grid @ chol, axis=1)
        lattice = grid[norms <= reach]
        # deterministic order: by norm, then lexicographic
        order = np.lexsort(tuple(lattice[:, ::-1].T) + (np.round(norms[norms <= reach], 12),))
        lattice = lattice[order].astype(float)
        object.__setattr__(self, "truncation_radius", float(radius))
        object.__setattr__(self, "_lattice", lattice)
        object.__setattr__(self, "_yinv", yinv)
        object.__setattr__(self, "_quad", np.einsum("ni,ij,nj->n", lattice, tau, lattice))

    @property
    def genus(self) -> int:
        return self.tau.shape[0]

    @property
    def lattice_size(self) -> int:
        return self._lattice.shape[0]

    # ------------------------------------------------------------ core
    def reduce(self, z):
        """Split z = z_red + m + tau k with z_red in the fundamental cell.

        Returns (z_red, k, log_factor) where theta(z) = exp(log_factor) theta(z_red).
        """
        z = np.asarray(z, dtype=complex)
        if self.genus == 0:
            return z, np.zeros(z.shape), np.zeros(z.shape[:-1], dtype=complex)
        coords = z.imag @ self._yinv.T
        k = np.round(coords)
        zr = z - k @ self.tau.T
        zr = zr - np.round(zr.real)
        log_factor = (-2j * np.pi * np.einsum("...i,...i->...", k, zr)
                      - 1j * np.pi * np.einsum("...i,ij,...j->...", k, self.tau, k))
        return zr, k, log_factor

    def _series(self, zr, grad=False):
        flat = zr.reshape(-1, self.genus)
        vals = np.empty(flat.shape[0], dtype=complex)
        grads = np.empty(flat.shape, dtype=complex) if grad else None
        lat = self._lattice
        for s in range(0, flat.shape[0], _CHUNK):
            blk = flat[s:s + _CHUNK]
            expo = np.exp(2j * np.pi * (blk @ lat.T) + 1j * np.pi * self._quad[None, :])
            vals[s:s + _CHUNK] = expo.sum(axis=1)
            if grad:
                grads[s:s + _CHUNK] = 2j * np.pi * (expo @ lat)
        vals = vals.reshape(zr.shape[:-1])
        if grad:
            grads = grads.reshape(zr.shape)
        return vals, grads

    def log_theta(self, z):
        """Complex logarithm of theta (branch unspecified, consistent for ratios)."""
        zr, _, lf = self.reduce(z)
        if self.genus == 0:
            return lf
        vals, _ = self._series(zr)
        with np.errstate(divide="ignore"):
            return lf + np.log(vals)

    def theta(self, z):
        z = np.asarray(z, dtype=complex)
        if self.genus == 0:
            return np.ones(z.shape[:-1], dtype=complex)
        zr, _, lf = self.reduce(z)
        if np.any(lf.real > _LOG_MAX):
            raise ThetaOverflow("theta value exceeds the floating point range")
        vals, _ = self._series(zr)
        return np.exp(lf) * vals

    def theta_reduced(self, z):
        """(theta(z_red), log_factor, k) for callers that manage scaling themselves."""
        zr, k, lf = self.reduce(z)
        vals, _ = self._series(zr) if self.genus else (np.ones(zr.shape[:-1], complex), None)
        return vals, lf, k

    def gradient(self, z):
        z = np.asarray(z, dtype=complex)
        zr, k, lf = self.reduce(z)
        if np.any(lf.real > _LOG_MAX):
            raise ThetaOverflow("theta gradient exceeds the floating point range")
        vals, grads = self._series(zr, grad=True)
        fac = np.exp(lf)
        return fac[..., None] * (grads - 2j * np.pi * k * vals[..., None])

    def dlog(self, z):
        """Gradient of log theta; returns (dlog, |theta_red| relative size)."""
        zr, k, _ = self.reduce(z)
        vals, grads = self._series(zr, grad=True)
        size = np.abs(vals) / self._scale(zr)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = grads / vals[..., None] - 2j * np.pi * k
        return d, size

    def _scale(self, zr):
        # natural size of |theta| at a reduced argument: the dominant term
        y = zr.imag @ self._yinv.T
        return np.exp(np.pi * np.einsum("...i,ij,...j->...", y, self.tau.imag, y))

    def normalized_abs(self, z):
        """|theta(z)| exp(-pi y^T Im(tau) y), y = Im(tau)^-1 Im z: lattice invariant."""
        zr, _, _ = self.reduce(z)
        vals, _ = self._series(zr)
        return np.abs(vals) / self._scale(zr)

    def dirlog(self, weights, z1, z2):
        """sum_j w_j (d_j log theta(z1) - d_j log theta(z2))."""
        w = np.asarray(weights, dtype=complex)
        d1, s1 = self.dlog(z1)
        d2, s2 = self.dlog(z2)
        thresh = np.sqrt(self.tol_theta)
        bad = (s1 < thresh) | (s2 < thresh)
        if np.any(bad):
            raise OnThetaDivisor("argument within tolerance of the theta divisor",
                                 sites=np.flatnonzero(np.atleast_1d(bad)).tolist())
        return (d1 - d2) @ w


def theta(ctx: ThetaContext, z):
    return ctx.theta(z)


def theta_dirlog(ctx: ThetaContext, c_weights, z1, z2):
    return ctx.dirlog(c_weights, z1, z2)
