"""Heat-kernel potential of a moving set and its Lipschitz dependence on dilation."""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special
from scipy.spatial import cKDTree
from skimage import measure

from .errors import CertificateMissing
from .grid import Grid, signed_distance
from .reports import EstimateReport


def green_kernel(y, s: float, dim: int = 2):
    """G(y, s) = (4 pi s)^{-N/2} exp(-|y|^2 / (4 s))."""
    y = np.asarray(y, dtype=float)
    r2 = np.sum(y * y, axis=-1) if y.ndim else y * y
    return np.exp(-r2 / (4 * s)) / (4 * math.pi * s) ** (dim / 2)


def i_n_integrand(u, N: int):
    u = np.asarray(u, dtype=float)
    return ((np.sqrt(np.abs(2 * (N - 1) * np.log(u))) + 1) ** N + 1) / np.sqrt(u)


def i_n_constant(N: int) -> float:
    """I(N) = int_0^1 ((|2(N-1) log u|^{1/2} + 1)^N + 1) / sqrt(u) du, via u = w^2."""
    if N not in (1, 2):
        raise ValueError("N must be 1 or 2")

    def f(w):
        if w == 0:
            return 2.0 if N == 1 else math.inf
        return 2 * ((math.sqrt(abs(4 * (N - 1) * math.log(w))) + 1) ** N + 1)

    val, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


# ---------------------------------------------------------------------------


class _Slice:
    """Sub-cell signed distance of K = {u >= 0} near its boundary, for one time."""

    def __init__(self, u: np.ndarray, grid: Grid, reach: float):
        self.inside = u >= 0
        self.grid = grid
        if not self.inside.any():
            self.d = np.full(u.shape, np.inf)
            return
        if self.inside.all():
            self.d = np.full(u.shape, -np.inf)
            return
        coarse = signed_distance(self.inside, grid).values
        near = np.abs(coarse) <= reach + 2 * grid.h
        pts = [np.asarray(grid.origin) + (c + 0.5) * grid.h for c in measure.find_contours(u, 0.0)]
        d = np.where(self.inside, -np.inf, np.inf)
        if pts and near.any():
            tree = cKDTree(_densify(pts, grid.h / 8))
            centres = np.stack([m[near] for m in grid.mesh()], axis=1)
            dist, _ = tree.query(centres)
            d[near] = np.where(self.inside[near], -dist, dist)
        self.d = d

    def occupancy(self, r: float) -> np.ndarray:
        """Cell fraction of K + rB, linear across the boundary."""
        with np.errstate(invalid="ignore"):
            occ = np.clip(0.5 + (r - self.d) / self.grid.h, 0.0, 1.0)
        return np.nan_to_num(occ, nan=0.0)


def _densify(lines, spacing):
    out = []
    for line in lines:
        a, b = line, np.roll(line, -1, axis=0)
        for p, q in zip(a, b):
            n = max(1, int(math.ceil(np.linalg.norm(q - p) / spacing)))
            out.append(p + (np.arange(n)[:, None] / n) * (q - p))
    return np.concatenate(out)


def _cell_weights(grid: Grid, x, lag: float):
    """Per-axis masses of each cell under G(x - ., lag), i.e. variance 2 lag per axis."""
    out = []
    sd = 2 * math.sqrt(lag)
    for o, n, xi in zip(grid.origin, grid.shape, x):
        edges = o + np.arange(n + 1) * grid.h
        cdf = special.erf((edges - xi) / sd)
        out.append(0.5 * np.diff(cdf))
    return out


class Potential:
    """phi(x, t, r) = int_0^t int G(x - y, t - s) 1_{K(s) + rB}(y) dy ds.

    K(s) = {u(., s) >= 0} with u linear in time between recorded slices.
    Time integration uses s = t - sigma^2 with Gauss-Legendre nodes in sigma,
    which absorbs the 1/sqrt(t - s) behaviour near s = t.
    """

    def __init__(self, traj, nodes: int = 32, r_max: float = 0.2):
        self.traj = traj
        self.grid = traj.grid
        self.nodes = nodes
        self.r_max = r_max
        self._cache = {}
        self._gl = np.polynomial.legendre.leggauss(nodes)

    def _slice(self, s: float) -> _Slice:
        key = round(s, 12)
        if key not in self._cache:
            self._cache[key] = _Slice(self.traj.at(s), self.grid, self.r_max)
        return self._cache[key]

    def __call__(self, x, t: float, r: float) -> float:
        return float(self.values(x, t, [r])[0])

    def values(self, x, t: float, rs) -> np.ndarray:
        rs = np.atleast_1d(np.asarray(rs, dtype=float))
        if t <= 0:
            return np.zeros(len(rs))
        nodes, weights = self._gl
        root = math.sqrt(t)
        sig = 0.5 * root * (nodes + 1)
        w = 0.5 * root * weights
        out = np.zeros(len(rs))
        for sg, wg in zip(sig, w):
            s = t - sg * sg
            sl = self._slice(s)
            wx = _cell_weights(self.grid, x, sg * sg)
            for j, r in enumerate(rs):
                occ = sl.occupancy(r)
                mass = _contract(occ, wx)
                out[j] += wg * 2 * sg * mass
        return out


def _contract(occ, weights):
    out = occ
    for w in weights:
        out = np.tensordot(w, out, axes=([0], [0]))
    return float(out)


def phi(x, t: float, r: float, K, nodes: int = 32) -> float:
    """Convenience wrapper around :class:`Potential` for a single evaluation."""
    return Potential(K, nodes=nodes, r_max=max(r, 0.0))(x, t, r)


def lipschitz_in_r_check(K, x_samples, t_samples, r_samples, lambda0: float,
                         certificate=None, quad_tol: float = 1e-6,
                         stability: float = 0.2, nodes: int = 32) -> EstimateReport:
    """|phi(x,t,r) - phi(x,t,0)| <= Lambda0 r; also reports the fitted Lambda0-hat and its spread in r."""
    certs = certificate if isinstance(certificate, (list, tuple)) else [certificate]
    if certificate is None or any(c is None or c.coverage_fraction < 1.0 for c in certs):
        raise CertificateMissing("fronts need a full-coverage cone certificate")
    r_samples = [float(r) for r in r_samples]
    pot = Potential(K, nodes=nodes, r_max=max(r_samples))
    rep = EstimateReport("green_lipschitz_in_r", info={"lambda0": lambda0})
    per_r = {r: 0.0 for r in r_samples}
    spreads = []
    for t in t_samples:
        for x in x_samples:
            vals = pot.values(x, t, [0.0] + r_samples)
            quot = []
            for r, v in zip(r_samples, vals[1:]):
                diff = abs(v - vals[0])
                rep.add(t, diff, lambda0 * r + quad_tol)
                if r > 0:
                    q = diff / r
                    quot.append(q)
                    per_r[r] = max(per_r[r], q)
            if quot and min(quot) > 0:
                spreads.append(max(quot) / min(quot))
    lam_hat = max(per_r.values()) if per_r else 0.0
    rep.info["lambda0_hat"] = lam_hat
    rep.info["per_r"] = per_r
    finite = [v for v in per_r.values() if v > 0]
    spread = max(finite) / min(finite) if finite else 1.0
    rep.info["spread"] = spread
    rep.info["pointwise_spread"] = max(spreads) if spreads else 1.0
    rep.add(max(t_samples), spread - 1.0, stability)
    return rep
