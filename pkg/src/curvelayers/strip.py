"""Linear layer problems on the strip R x (0, L) via the x-eigenbasis.

The cross-section operator is either d_xx - 1 + p w^(p-1) (translated
variant, carrying the positive resonance mode and the translation zero mode)
or d_xx - Ktilde + p w^(p-1) (massive variant, negative definite for large
Ktilde). For Neumann data on the two ends, every mode reduces to a two-point
ODE c'' + mu c = 0 with c'(0), c'(L) prescribed, solved in closed form with
overflow-safe cosh/sinh ratios.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .profiles import ground_state
from .util import fd_first_axis

__all__ = ["StripBasis", "StripLayer", "build_strip_basis", "solve_strip_layer", "StripDataError"]


class StripDataError(RuntimeError):
    """Boundary data excites a non-decaying mode or is badly truncated."""


@dataclass
class StripBasis:
    """Discrete eigenbasis of the cross-section operator on [-X, X]."""

    p: float
    variant: str
    k_tilde: float
    x: np.ndarray
    hx: float
    w: np.ndarray
    mu: np.ndarray
    E: np.ndarray  # (nx, nmodes), discrete-L2 orthonormal, zero at the ends
    E_x: np.ndarray
    E_xx: np.ndarray
    idx_resonant: int | None
    idx_zero: np.ndarray

    def project(self, data):
        return self.hx * (self.E.T @ np.asarray(data, dtype=float))

    def synthesize(self, coef):
        return self.E @ coef


def build_strip_basis(p, x, variant="translated", k_tilde=25.0):
    x = np.asarray(x, dtype=float)
    hx = x[1] - x[0]
    w = ground_state(p, x)[0]
    shift = 1.0 if variant == "translated" else float(k_tilde)
    if variant not in ("translated", "massive"):
        raise ValueError("variant must be 'translated' or 'massive'")
    diag = -2.0 / hx**2 - shift + p * w[1:-1] ** (p - 1.0)
    off = np.full(x.size - 3, 1.0 / hx**2)
    mu, u = sla.eigh_tridiagonal(diag, off)
    e = np.zeros((x.size, mu.size))
    e[1:-1] = u / np.sqrt(hx)
    e_x = fd_first_axis(e, hx)
    e_xx = (shift + mu)[None, :] * e - p * w[:, None] ** (p - 1.0) * e

    idx_res = None
    if variant == "translated":
        # spectrum: single positive mode near lambda0, the translation mode at
        # zero up to O(hx^2), then a gap down to the continuum band below -1
        lam0 = 0.25 * (p - 1.0) * (p + 3.0)
        idx_res = int(np.argmax(mu))
        if abs(mu[idx_res] - lam0) > 0.05 * max(lam0, 1.0):
            raise RuntimeError(f"resonant mode eigenvalue {mu[idx_res]:.4f} far from {lam0:.4f}")
        idx_zero = np.where(np.abs(mu) <= 0.1)[0]
        others = np.setdiff1d(np.arange(mu.size), np.append(idx_zero, idx_res))
        if np.any(mu[others] > -0.5):
            raise RuntimeError("unexpected cross-section mode in the spectral gap")
    else:
        if np.any(mu > -1e-8):
            raise RuntimeError("massive variant is not negative definite; raise k_tilde")
        idx_zero = np.array([], dtype=int)
    return StripBasis(
        p=float(p),
        variant=variant,
        k_tilde=float(k_tilde),
        x=x,
        hx=float(hx),
        w=w,
        mu=mu,
        E=e,
        E_x=e_x,
        E_xx=e_xx,
        idx_resonant=idx_res,
        idx_zero=idx_zero,
    )


def _cosh_ratio(nu, z, L):
    """cosh(nu z)/sinh(nu L) evaluated without overflow (nu, z broadcast)."""
    den = -np.expm1(-2.0 * nu * L)
    return (np.exp(-nu * (L - z)) + np.exp(-nu * (L + z))) / den


def _sinh_ratio(nu, z, L):
    den = -np.expm1(-2.0 * nu * L)
    return (np.exp(-nu * (L - z)) - np.exp(-nu * (L + z))) / den


@dataclass
class StripLayer:
    """Closed-form modal solution of the strip problem with Neumann data."""

    basis: StripBasis
    L: float
    d0: np.ndarray
    d1: np.ndarray
    active: np.ndarray
    dropped: dict = field(default_factory=dict)

    def _coef(self, z, order=0):
        """Mode coefficients c (order 0), c' (1) or c'' (2) at points z."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        mu = self.basis.mu[self.active]
        d0 = self.d0[self.active][:, None]
        d1 = self.d1[self.active][:, None]
        nu = np.sqrt(np.abs(mu))[:, None]
        zz = z[None, :]
        c = np.zeros((mu.size, z.size))
        neg = mu < 0
        if np.any(neg):
            nn = nu[neg]
            c_neg = (d1[neg] * _cosh_ratio(nn, zz, self.L) - d0[neg] * _cosh_ratio(nn, self.L - zz, self.L)) / nn
            cp_neg = d1[neg] * _sinh_ratio(nn, zz, self.L) + d0[neg] * _sinh_ratio(nn, self.L - zz, self.L)
            if order == 0:
                c[neg] = c_neg
            elif order == 1:
                c[neg] = cp_neg
            else:
                c[neg] = -mu[neg][:, None] * c_neg
        pos = mu > 0
        if np.any(pos):
            npos = nu[pos]
            s = np.sin(npos * self.L)
            c_pos = (
                (d0[pos] * np.cos(npos * self.L) - d1[pos]) / (npos * s) * np.cos(npos * zz)
                + d0[pos] / npos * np.sin(npos * zz)
            )
            if order == 0:
                c[pos] = c_pos
            elif order == 1:
                c[pos] = (
                    -(d0[pos] * np.cos(npos * self.L) - d1[pos]) / s * np.sin(npos * zz)
                    + d0[pos] * np.cos(npos * zz)
                )
            else:
                c[pos] = -mu[pos][:, None] * c_pos
        return c

    def _synth(self, table, z, order=0):
        return table[:, self.active] @ self._coef(z, order)

    def value(self, z):
        return self._synth(self.basis.E, z)

    def dx(self, z):
        return self._synth(self.basis.E_x, z)

    def dxx(self, z):
        return self._synth(self.basis.E_xx, z)

    def dz(self, z):
        return self._synth(self.basis.E, z, order=1)

    def dxz(self, z):
        return self._synth(self.basis.E_x, z, order=1)

    def dzz(self, z):
        return self._synth(self.basis.E, z, order=2)

    def pde_residual(self, z):
        """Residual of the discrete-x PDE at interior points z (machine-level)."""
        v = self.value(z)
        vzz = self.dzz(z)
        hx = self.basis.hx
        shift = 1.0 if self.basis.variant == "translated" else self.basis.k_tilde
        lap_x = np.zeros_like(v)
        lap_x[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / hx**2
        res = lap_x + vzz - shift * v + self.basis.p * self.basis.w[:, None] ** (self.basis.p - 1.0) * v
        return res[1:-1]

    def boundary_mismatch(self, data0, data1):
        """Sup deviation of d_z at the two ends from the given data."""
        low = np.max(np.abs(self.dz(0.0)[:, 0] - data0))
        high = np.max(np.abs(self.dz(self.L)[:, 0] - data1))
        return max(low, high)

    def decay_rate(self, z_frac=0.5, x_window=(6.0, 12.0)):
        """Fitted exponential decay rate of |v| in x at mid-strip."""
        z = z_frac * self.L
        v = np.abs(self.value(z)[:, 0])
        x = self.basis.x
        sel = (x >= x_window[0]) & (x <= x_window[1]) & (v > 1e-300)
        if np.sum(sel) < 4:
            return np.nan
        coef = np.polyfit(x[sel], np.log(v[sel]), 1)
        return float(-coef[0])


def solve_strip_layer(basis, data0, data1, L, drop_tol=1e-6, tail_tol=1e-4):
    """Solve the strip problem for Neumann data (data0 at z=0, data1 at z=L).

    Translated variant: the resonance mode (positive eigenvalue) and the
    translation mode (zero eigenvalue) must not be excited; their data
    projections are checked against drop_tol relative to the data norm and
    the offending magnitudes are reported on refusal.
    """
    data0 = np.asarray(data0, dtype=float)
    data1 = np.asarray(data1, dtype=float)
    d0 = basis.project(data0)
    d1 = basis.project(data1)
    scale = max(np.sqrt(basis.hx) * max(np.linalg.norm(data0), np.linalg.norm(data1)), 1e-300)

    dropped = {}
    active = np.ones(basis.mu.size, dtype=bool)
    bad = list(basis.idx_zero)
    if basis.idx_resonant is not None:
        bad.append(basis.idx_resonant)
    for idx in bad:
        proj = max(abs(d0[idx]), abs(d1[idx]))
        label = "resonant" if idx == basis.idx_resonant else "zero"
        if proj > drop_tol * scale:
            raise StripDataError(
                f"data excites the {label} cross-section mode: |projection| = {proj:.3e} "
                f"(tolerance {drop_tol * scale:.3e})"
            )
        dropped[label] = float(proj)
        active[idx] = False
    tail = max(np.max(np.abs(data0[[0, -1]])), np.max(np.abs(data1[[0, -1]])))
    if tail > tail_tol * scale:
        raise StripDataError(f"boundary data not decayed at |x| = {basis.x[-1]}: {tail:.3e}")
    return StripLayer(basis=basis, L=float(L), d0=d0, d1=d1, active=active, dropped=dropped)
