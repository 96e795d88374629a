"""Damped Newton solve of the full nonlinear Neumann problem on 2D meshes.

Finite-volume discretization on tensor grids (plain rectangle, or an
orthogonal chart image for curved channels): the stiffness form is symmetric
with exact zero row sums, so constants are annihilated including at the
boundary and the no-flux condition is built in. The solver is seeded with
the layered approximation and validates the concentration law.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "Mesh2D",
    "graded_nodes",
    "rectangle_mesh",
    "chart_mesh",
    "SolveTrace",
    "newton_solve",
    "concentration_metrics",
    "MetricsReport",
]


def graded_nodes(eps, half_width, fine_per_layer=12, core=None, ratio=1.15, h_max=0.1):
    """Symmetric node set, uniform across the layer and geometric outside."""
    h_f = eps / fine_per_layer
    core = core if core is not None else max(12.0 * eps, 0.4)
    core = min(core, half_width)
    n_core = int(np.ceil(core / h_f))
    right = list(np.linspace(0.0, n_core * h_f, n_core + 1))
    h = h_f
    while right[-1] < half_width:
        h = min(h * ratio, h_max)
        right.append(min(right[-1] + h, half_width))
    right = np.asarray(right)
    return np.concatenate([-right[::-1][:-1], right])


def _flux_1d(nodes, face_coeff=None):
    """1D zero-flux stiffness K (symmetric) and cell volumes."""
    nodes = np.asarray(nodes, dtype=float)
    h = np.diff(nodes)
    a = np.ones_like(h) if face_coeff is None else np.asarray(face_coeff, dtype=float)
    c = a / h
    n = nodes.size
    main = np.zeros(n)
    main[:-1] -= c
    main[1:] -= c
    K = sp.diags([c, main, c], offsets=[-1, 0, 1], format="csr")
    vol = np.zeros(n)
    vol[:-1] += h / 2.0
    vol[1:] += h / 2.0
    return K, vol


@dataclass
class Mesh2D:
    kind: str
    t_nodes: np.ndarray
    th_nodes: np.ndarray
    K: object  # sparse stiffness, symmetric, zero row sums
    vol: np.ndarray  # cell volumes (flattened, t-major)
    V: np.ndarray  # potential at nodes (flattened)
    coords: tuple  # physical coordinates of the nodes (y1, y2) arrays
    chart: object = None

    @property
    def shape(self):
        return (self.t_nodes.size, self.th_nodes.size)

    def laplacian(self, u):
        return (self.K @ u) / self.vol

    def as_grid(self, u):
        return np.asarray(u).reshape(self.shape)


def rectangle_mesh(t_nodes, th_nodes, potential):
    """Plain Euclidean rectangle with Neumann flux form; V from (t, theta)."""
    t_nodes = np.asarray(t_nodes, dtype=float)
    th_nodes = np.asarray(th_nodes, dtype=float)
    Kt, vt = _flux_1d(t_nodes)
    Kh, vh = _flux_1d(th_nodes)
    K = sp.kron(Kt, sp.diags(vh)) + sp.kron(sp.diags(vt), Kh)
    vol = np.kron(vt, vh)
    tt, hh = np.meshgrid(t_nodes, th_nodes, indexing="ij")
    V = potential.V(tt, hh).ravel()
    return Mesh2D(
        kind="rectangle",
        t_nodes=t_nodes,
        th_nodes=th_nodes,
        K=K.tocsr(),
        vol=vol,
        V=V,
        coords=(tt.ravel(), hh.ravel()),
    )


def chart_mesh(chart, t_nodes, th_nodes, potential, orthogonality_tol=1e-10):
    """Laplace-Beltrami finite volumes on an orthogonal chart image.

    Valid when the chart has g12 = 0 (straight channel walls); fluxes carry
    sqrt(g) g^{ii} at the faces and the volume weight is sqrt(g).
    """
    t_nodes = np.asarray(t_nodes, dtype=float)
    th_nodes = np.asarray(th_nodes, dtype=float)
    tt, hh = np.meshgrid(t_nodes, th_nodes, indexing="ij")
    met = chart.metric(tt, hh)
    if np.max(np.abs(met["g12"])) > orthogonality_tol * np.max(met["g"]):
        raise ValueError("chart is not orthogonal; finite-volume form unsupported")

    nt, nh = t_nodes.size, th_nodes.size
    ht = np.diff(t_nodes)
    hh_ = np.diff(th_nodes)
    t_face = 0.5 * (t_nodes[:-1] + t_nodes[1:])
    th_face = 0.5 * (th_nodes[:-1] + th_nodes[1:])

    # faces normal to t: coefficient sqrt(g) g^{11} integrated over dtheta cell
    tf, hf = np.meshgrid(t_face, th_nodes, indexing="ij")
    m = chart.metric(tf, hf)
    a_t = m["sqrtg"] * (m["g22"] / m["g"])  # g^{11} = g22/g
    tf2, hf2 = np.meshgrid(t_nodes, th_face, indexing="ij")
    m2 = chart.metric(tf2, hf2)
    a_h = m2["sqrtg"] * (m2["g11"] / m2["g"])  # g^{22} = g11/g

    th_cell = np.zeros(nh)
    th_cell[:-1] += hh_ / 2.0
    th_cell[1:] += hh_ / 2.0
    t_cell = np.zeros(nt)
    t_cell[:-1] += ht / 2.0
    t_cell[1:] += ht / 2.0

    def idx(i, j):
        return i * nh + j

    rows, cols, vals = [], [], []
    # t-direction fluxes
    coef_t = a_t * th_cell[None, :] / ht[:, None]
    for i in range(nt - 1):
        for_j = np.arange(nh)
        c = coef_t[i]
        rows.extend(idx(i, for_j))
        cols.extend(idx(i + 1, for_j))
        vals.extend(c)
        rows.extend(idx(i + 1, for_j))
        cols.extend(idx(i, for_j))
        vals.extend(c)
        rows.extend(idx(i, for_j))
        cols.extend(idx(i, for_j))
        vals.extend(-c)
        rows.extend(idx(i + 1, for_j))
        cols.extend(idx(i + 1, for_j))
        vals.extend(-c)
    # theta-direction fluxes
    coef_h = a_h * t_cell[:, None] / hh_[None, :]
    for j in range(nh - 1):
        for_i = np.arange(nt)
        c = coef_h[:, j]
        rows.extend(idx(for_i, j))
        cols.extend(idx(for_i, j + 1))
        vals.extend(c)
        rows.extend(idx(for_i, j + 1))
        cols.extend(idx(for_i, j))
        vals.extend(c)
        rows.extend(idx(for_i, j))
        cols.extend(idx(for_i, j))
        vals.extend(-c)
        rows.extend(idx(for_i, j + 1))
        cols.extend(idx(for_i, j + 1))
        vals.extend(-c)
    K = sp.csr_matrix((vals, (rows, cols)), shape=(nt * nh, nt * nh))
    vol = (chart.metric(tt, hh)["sqrtg"] * np.outer(t_cell, th_cell)).ravel()
    V = potential.V(tt, hh).ravel()
    y = chart.F(tt, hh)
    return Mesh2D(
        kind="chart",
        t_nodes=t_nodes,
        th_nodes=th_nodes,
        K=K,
        vol=vol,
        V=V,
        coords=(y[..., 0].ravel(), y[..., 1].ravel()),
        chart=chart,
    )


@dataclass
class SolveTrace:
    u: np.ndarray
    residuals: list
    damping: list
    negative_events: int
    converged: bool
    iterations: int
    mesh: Mesh2D = field(repr=False, default=None)

    def quadratic_tail(self):
        """Ratios r_{k+1} / r_k^2 over the undamped final iterations."""
        r = self.residuals
        out = []
        for k in range(len(r) - 1):
            if self.damping[k] == 1.0 and r[k] < 1e-2:
                out.append(r[k + 1] / r[k] ** 2)
        return out


def _residual(mesh, u, p, eps):
    return eps**2 * mesh.laplacian(u) - mesh.V * u + np.sign(u) * np.abs(u) ** p


def _scaled_norm(mesh, u, r):
    scale = max(np.max(np.abs(mesh.V * u)), np.max(np.abs(u)) ** 1.0, 1e-300)
    return float(np.max(np.abs(r)) / scale)


def newton_solve(mesh, p, eps, u0, tol=1e-10, max_iter=25, min_damping=1.0 / 64.0):
    """Damped Newton iteration for eps^2 Lap u - V u + u^p = 0 with no-flux.

    The residual is scaled by the reaction size; backtracking halves the step
    while the residual norm fails to decrease. Negative excursions are not
    constrained, only counted (they trigger damping through the residual).
    """
    u = np.asarray(u0, dtype=float).ravel().copy()
    res = _residual(mesh, u, p, eps)
    norms = [_scaled_norm(mesh, u, res)]
    damping = []
    neg_events = 0
    eps2_L = (sp.diags(1.0 / mesh.vol) @ mesh.K) * eps**2
    converged = False
    for it in range(max_iter):
        if norms[-1] < tol:
            converged = True
            break
        J = eps2_L - sp.diags(mesh.V) + sp.diags(p * np.abs(u) ** (p - 1.0))
        d = spla.spsolve(J.tocsc(), -res)
        lam = 1.0
        while lam >= min_damping:
            u_try = u + lam * d
            res_try = _residual(mesh, u_try, p, eps)
            if _scaled_norm(mesh, u_try, res_try) < (1.0 - 0.25 * lam) * norms[-1]:
                break
            lam *= 0.5
        u = u + lam * d
        res = _residual(mesh, u, p, eps)
        if np.min(u) < -1e-8 * max(np.max(u), 1e-300):
            neg_events += 1
        damping.append(lam)
        norms.append(_scaled_norm(mesh, u, res))
    else:
        converged = norms[-1] < tol
    return SolveTrace(
        u=u,
        residuals=norms,
        damping=damping,
        negative_events=neg_events,
        converged=converged,
        iterations=len(damping),
        mesh=mesh,
    )


def initial_residual(mesh, p, eps, u0):
    """Scaled residual norm of a seed (for the tier-quality comparison)."""
    u = np.asarray(u0, dtype=float).ravel()
    r = _residual(mesh, u, p, eps)
    rms = float(np.sqrt(np.sum(r**2 * mesh.vol) / np.sum(mesh.vol)))
    return _scaled_norm(mesh, u, r), rms


@dataclass
class MetricsReport:
    max_offsets: np.ndarray
    amplitude_ratio: np.ndarray
    profile_sup_err: np.ndarray
    decay_rate: float
    grid_dt: float

    def to_dict(self):
        return {
            "max_offset_sup": float(np.max(np.abs(self.max_offsets))),
            "amplitude_ratio_min": float(np.min(self.amplitude_ratio)),
            "amplitude_ratio_max": float(np.max(self.amplitude_ratio)),
            "profile_sup_err": float(np.max(self.profile_sup_err)),
            "decay_rate": self.decay_rate,
            "grid_dt": self.grid_dt,
        }


def concentration_metrics(trace, potential, p, eps, w_of=None):
    """Per-section maxima, amplitude ratios, profile fit, and decay rate.

    The target amplitude at section theta is V(0,theta)^(1/(p-1)) w(0) and
    the section profile is compared with the scaled ground state; the decay
    rate is fitted on log u along the normal through the mid section.
    """
    if not trace.converged:
        raise RuntimeError("metrics refused: trace did not converge")
    from .profiles import ground_state

    mesh = trace.mesh
    U = mesh.as_grid(trace.u)
    t = mesh.t_nodes
    th = mesh.th_nodes
    inside = (th >= 0.0) & (th <= 1.0)
    w0 = ground_state(p, np.array([0.0]))[0][0]

    offsets = []
    ratios = []
    fit_err = []
    for j in np.where(inside)[0]:
        col = U[:, j]
        i = int(np.argmax(col))
        if 0 < i < t.size - 1:
            y0, y1, y2 = col[i - 1], col[i], col[i + 1]
            h1 = t[i] - t[i - 1]
            h2 = t[i + 1] - t[i]
            denom = h2 * (y0 - y1) + h1 * (y2 - y1)
            t_star = t[i] + 0.5 * (h2**2 * (y0 - y1) - h1**2 * (y2 - y1)) / denom if denom != 0 else t[i]
            u_star = col[i]
        else:
            t_star, u_star = t[i], col[i]
        V0 = float(potential.V(np.array([0.0]), np.array([th[j]]))[0])
        amp = V0 ** (1.0 / (p - 1.0)) * w0
        offsets.append(t_star)
        ratios.append(u_star / amp)
        xs = np.sqrt(V0) * (t - t_star) / eps
        core = np.abs(xs) <= 8.0
        wv = ground_state(p, xs[core])[0]
        fit_err.append(np.max(np.abs(col[core] / V0 ** (1.0 / (p - 1.0)) - wv)) / w0)

    j_mid = int(np.argmin(np.abs(th - 0.5)))
    col = U[:, j_mid]
    i0 = int(np.argmax(col))
    lo = t[i0] + 4.0 * eps
    hi = t[i0] + 12.0 * eps
    sel = (t >= lo) & (t <= hi) & (col > 0)
    decay = np.nan
    if np.sum(sel) >= 4:
        slope = np.polyfit(t[sel], np.log(col[sel]), 1)[0]
        decay = float(-slope * eps)
    dt_core = float(np.min(np.diff(t)))
    return MetricsReport(
        max_offsets=np.asarray(offsets),
        amplitude_ratio=np.asarray(ratios),
        profile_sup_err=np.asarray(fit_err),
        decay_rate=decay,
        grid_dt=dt_core,
    )
