"""Orthonormal wavelet systems on a compact interval Xi.

Two families are provided. Haar is exact. Daubechies uses interior translates only
(every function supported inside Xi), with values from a dyadic table computed by the
cascade algorithm.

Indexing: ``(0, k)`` are the scaling functions of the coarsest level, ``(j, k)`` for
``j >= 1`` are wavelets at dyadic level ``j0 + j - 1`` with translate ``k``. For Haar
``j0 = 0``, so ``|mu| <= M`` gives exactly ``2**M`` functions.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np

from .reaction import ReactionModel


@dataclass(frozen=True, order=True)
class MultiIndex:
    j: int
    k: int


def daubechies_filter(p: int) -> np.ndarray:
    """Scaling filter h (length 2p) of the extremal-phase Daubechies wavelet with p vanishing moments.

    Normalised so that sum(h) = sqrt(2). Obtained by spectral factorisation of the
    Daubechies polynomial, keeping the roots inside the unit circle.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)
    # roots in y = sin^2(w/2) of sum_k C(p-1+k, k) y^k
    ypoly = [comb(p - 1 + k, k) for k in range(p)][::-1]
    yroots = np.roots(ypoly)
    q = np.poly1d([1.0])
    for y in yroots:
        # y = (2 - z - 1/z)/4  <=>  z^2 - (2 - 4y) z + 1 = 0
        disc = np.sqrt((2 - 4 * y) ** 2 - 4 + 0j)
        z1 = ((2 - 4 * y) + disc) / 2
        if abs(z1) > 1:
            z1 = 1 / z1
        q = q * np.poly1d([1.0, -z1])
    h = np.poly1d([1.0, 1.0]) ** p * np.real(q)
    c = np.asarray(h.c, dtype=float)  # highest power first gives the usual minimum-phase ordering
    return c / c.sum() * np.sqrt(2.0)


def cascade_table(h: np.ndarray, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Values of phi and psi on the dyadic grid i * 2**-depth over [0, len(h) - 1].

    phi at the integers is the eigenvector of the two-scale matrix for eigenvalue 1
    (normalised to sum 1); finer dyadic points follow from the refinement equation.
    """
    N = len(h)
    L = N - 1
    A = np.zeros((L + 1, L + 1))
    for i in range(L + 1):
        for j in range(L + 1):
            k = 2 * i - j
            if 0 <= k < N:
                A[i, j] = np.sqrt(2.0) * h[k]
    w, V = np.linalg.eig(A)
    v = np.real(V[:, np.argmin(np.abs(w - 1.0))])
    phi = v / v.sum()
    for d in range(1, depth + 1):
        new = np.empty(L * 2**d + 1)
        new[::2] = phi
        odd = np.arange(1, new.size, 2)
        acc = np.zeros(odd.size)
        for k in range(N):
            # 2x - k for x = i * 2**-d sits at index i - k * 2**(d-1) of the previous grid
            jj = odd - k * 2 ** (d - 1)
            ok = (jj >= 0) & (jj < phi.size)
            acc[ok] += np.sqrt(2.0) * h[k] * phi[jj[ok]]
        new[odd] = acc
        phi = new
    g = np.array([(-1) ** k * h[N - 1 - k] for k in range(N)])
    size = phi.size
    psi = np.zeros(size)
    i = np.arange(size)
    for k in range(N):
        # psi(x) = sqrt2 sum_k g_k phi(2x - k); x = i*2**-d -> 2x - k has index 2i - k*2**d
        jj = 2 * i - k * 2**depth
        ok = (jj >= 0) & (jj < size)
        psi[ok] += np.sqrt(2.0) * g[k] * phi[jj[ok]]
    return phi, psi


class WaveletBasis:
    """Finite orthonormal family {psi_mu : |mu| <= M} on ``xi``.

    Build with :func:`build_haar` or :func:`build_daubechies`. ``quad_nodes`` and
    ``quad_weights`` define the composite rule used for projections and Gram checks.
    """

    def __init__(self, xi, family: str, M: int, p: int = 1, cascade_depth: int = 0, quad_depth: int = 6):
        a, b = float(xi[0]), float(xi[1])
        if not b > a:
            raise ValueError(f"degenerate interval {xi}")
        if M < 0:
            raise ValueError("M must be >= 0")
        self.xi = (a, b)
        self.length = b - a
        self.family = family
        self.M = int(M)
        self.p = int(p)
        self.cascade_depth = int(cascade_depth)
        self.quad_depth = int(quad_depth)
        N = 2 * self.p
        self.filter_length = N
        self.j0 = int(np.ceil(np.log2(N - 1))) if N > 2 else 0
        idx, lev, trans, kind = [], [], [], []
        for k in range(2**self.j0 - N + 2):
            idx.append(MultiIndex(0, k)); lev.append(self.j0); trans.append(k); kind.append(0)
        for j in range(1, self.M + 1):
            level = self.j0 + j - 1
            count = 2**level - N + 2
            if count < 1:
                raise ValueError(f"no translate of level {level} fits in {self.xi}")
            for k in range(count):
                idx.append(MultiIndex(j, k)); lev.append(level); trans.append(k); kind.append(1)
        self.indices = idx
        self._level = np.array(lev)
        self._trans = np.array(trans)
        self._is_wavelet = np.array(kind, dtype=bool)
        self.finest_level = int(self._level.max())
        self.quadrature_step = self.length * 2.0 ** -(self.finest_level + self.quad_depth)
        if family == "daubechies":
            self.table_depth = max(self.cascade_depth, self.quad_depth + self.finest_level - self.j0)
            self.h = daubechies_filter(self.p)
            self._phi, self._psi = cascade_table(self.h, self.table_depth)

    @property
    def dim(self) -> int:
        return len(self.indices)

    @property
    def orders(self) -> np.ndarray:
        """|mu| for every basis function, in index order."""
        return np.array([m.j for m in self.indices])

    def descriptor(self) -> dict:
        d = {"family": self.family, "xi": list(self.xi), "M": self.M}
        if self.family == "daubechies":
            d.update(p=self.p, cascade_depth=self.cascade_depth)
        return d

    def __eq__(self, other):
        return isinstance(other, WaveletBasis) and self.descriptor() == other.descriptor()

    def __hash__(self):
        return hash(repr(self.descriptor()))

    def __repr__(self):
        return f"WaveletBasis({self.descriptor()})"

    # -- evaluation -----------------------------------------------------------------

    def _local(self, i: int, x: np.ndarray) -> np.ndarray:
        return 2.0 ** self._level[i] * (x - self.xi[0]) / self.length - self._trans[i]

    def evaluate_one(self, i: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = self._local(i, x)
        scale = 2.0 ** (self._level[i] / 2) / np.sqrt(self.length)
        if self.family == "haar":
            out = np.where((t >= 0) & (t < 1), 1.0, 0.0)
            if self._is_wavelet[i]:
                out = np.where(t < 0.5, out, -out)
            return scale * out
        table = self._psi if self._is_wavelet[i] else self._phi
        span = self.filter_length - 1
        pos = t * 2.0**self.table_depth
        out = np.zeros_like(t)
        inside = (t >= 0) & (t <= span)
        pi = pos[inside]
        lo = np.minimum(np.floor(pi).astype(np.int64), table.size - 2)
        w = pi - lo
        out[inside] = (1 - w) * table[lo] + w * table[lo + 1]
        return scale * out

    def design(self, x) -> np.ndarray:
        """Matrix with rows Psi(x_i)^T."""
        x = np.asarray(x, dtype=float).ravel()
        if self.family == "haar":
            cells = self.haar_cells(x)
            out = np.zeros((x.size, self.dim))
            ok = cells >= 0
            out[ok] = self.cell_matrix[cells[ok]]
            return out
        return np.stack([self.evaluate_one(i, x) for i in range(self.dim)], axis=1)

    def synthesize(self, coeffs, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        coeffs = np.asarray(coeffs, dtype=float)
        if self.family == "haar":
            vals = self.cell_matrix @ coeffs
            cells = self.haar_cells(x)
            return np.where(cells >= 0, vals[np.maximum(cells, 0)], 0.0)
        flat = x.ravel()
        out = np.zeros(flat.size)
        for i in np.flatnonzero(coeffs):
            out += coeffs[i] * self.evaluate_one(i, flat)
        return out.reshape(x.shape)

    # -- Haar piecewise-constant structure ----------------------------------------

    @property
    def n_cells(self) -> int:
        return 2 ** max(self.M, 0)

    def haar_cells(self, x) -> np.ndarray:
        """Index of the finest dyadic cell [a + c h, a + (c+1) h) containing x, or -1."""
        x = np.asarray(x, dtype=float)
        u = (x - self.xi[0]) / self.length * self.n_cells
        c = np.floor(u)
        ok = (c >= 0) & (c < self.n_cells)
        return np.where(ok, c, -1).astype(np.int64)

    @cached_property
    def cell_matrix(self) -> np.ndarray:
        """Basis values on each finest Haar cell, shape (n_cells, dim)."""
        if self.family != "haar":
            raise AttributeError("cell_matrix is only defined for the Haar family")
        h = self.length / self.n_cells
        mids = self.xi[0] + (np.arange(self.n_cells) + 0.5) * h
        return np.stack([self.evaluate_one(i, mids) for i in range(self.dim)], axis=1)

    # -- quadrature -----------------------------------------------------------------

    @cached_property
    def quad_nodes(self) -> np.ndarray:
        n = int(round(self.length / self.quadrature_step))
        if self.family == "haar":
            return self.xi[0] + (np.arange(n) + 0.5) * self.quadrature_step
        # dyadic left endpoints hit exact table values for every level
        return self.xi[0] + np.arange(n + 1) * self.quadrature_step

    @property
    def quad_weights(self) -> float:
        return self.quadrature_step

    def _support_slice(self, i: int) -> slice:
        a = self.xi[0]
        w = self.length * 2.0 ** -self._level[i]
        lo = a + self._trans[i] * w
        hi = lo + (self.filter_length - 1) * w
        nodes = self.quad_nodes
        return slice(int(np.searchsorted(nodes, lo, "left")), int(np.searchsorted(nodes, hi, "right")))

    @cached_property
    def _quad_values(self) -> list[tuple[slice, np.ndarray]]:
        nodes = self.quad_nodes
        out = []
        for i in range(self.dim):
            s = self._support_slice(i)
            out.append((s, self.evaluate_one(i, nodes[s])))
        return out

    def gram(self) -> np.ndarray:
        """Quadrature Gram matrix of the family (identity up to quadrature error)."""
        G = np.zeros((self.dim, self.dim))
        vals = self._quad_values
        for i in range(self.dim):
            si, vi = vals[i]
            for j in range(i, self.dim):
                sj, vj = vals[j]
                lo, hi = max(si.start, sj.start), min(si.stop, sj.stop)
                if hi <= lo:
                    continue
                G[i, j] = G[j, i] = self.quad_weights * np.dot(
                    vi[lo - si.start : hi - si.start], vj[lo - sj.start : hi - sj.start]
                )
        return G

    def project(self, f) -> np.ndarray:
        """Coefficients <f, psi_mu> by the composite quadrature rule."""
        fv = np.asarray(f(self.quad_nodes), dtype=float)
        return np.array([self.quad_weights * np.dot(fv[s], v) for s, v in self._quad_values])

    def l2_norm(self, f) -> float:
        fv = np.asarray(f(self.quad_nodes), dtype=float)
        return float(np.sqrt(self.quad_weights * np.dot(fv, fv)))

    def inner(self, f, g) -> float:
        return float(self.quad_weights * np.dot(f(self.quad_nodes), g(self.quad_nodes)))


def build_haar(xi=(-3.5, 3.5), M: int = 7) -> WaveletBasis:
    if M < 0:
        raise ValueError("M must be >= 0")
    return WaveletBasis(xi, "haar", M, p=1, quad_depth=6)


def build_daubechies(
    xi=(-3.5, 3.5), M: int = 3, p: int = 3, cascade_depth: int = 12, quad_depth: int | None = None
) -> WaveletBasis:
    """Interior Daubechies-p family; quadrature defaults to 2**-14 of the finest scale.

    D4 (p = 2) is only about 0.55-Hoelder, and Riemann sums at 2**-12 leave Gram errors of ~4e-6.
    """
    if p < 2:
        raise ValueError("Daubechies family needs p >= 2 (p = 1 is Haar)")
    if cascade_depth < 8:
        raise ValueError("cascade_depth must be >= 8")
    if quad_depth is None:
        quad_depth = max(cascade_depth, 14)
    return WaveletBasis(xi, "daubechies", M, p=p, cascade_depth=cascade_depth, quad_depth=quad_depth)


def basis_from_descriptor(d: dict) -> WaveletBasis:
    family = d.get("family", "haar")
    xi = tuple(d.get("xi", (-3.5, 3.5)))
    if family == "haar":
        return build_haar(xi, int(d["M"]))
    if family == "daubechies":
        return build_daubechies(xi, int(d["M"]), int(d.get("p", 3)), int(d.get("cascade_depth", 12)))
    raise ValueError(f"unknown wavelet family {family!r}")


def evaluate_basis(b: WaveletBasis, x: float) -> np.ndarray:
    return b.design(np.array([x], dtype=float))[0]


def project(b: WaveletBasis, f: ReactionModel) -> np.ndarray:
    return b.project(f)


def sobolev_norm(b: WaveletBasis, coeffs, s: float) -> float:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (b.dim,):
        raise ValueError(f"expected {b.dim} coefficients, got shape {coeffs.shape}")
    return float(np.sqrt(np.sum(2.0 ** (2 * s * b.orders) * coeffs**2)))


@dataclass(frozen=True)
class PriorSpec:
    beta0: float
    M: int
    diagonal_variances: np.ndarray

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        sd = np.sqrt(self.diagonal_variances)
        shape = (sd.size,) if size is None else (size, sd.size)
        return sd * rng.standard_normal(shape)


def prior_covariance(b: WaveletBasis, beta0: float) -> PriorSpec:
    if beta0 < 0:
        raise ValueError("beta0 must be >= 0")
    return PriorSpec(float(beta0), b.M, 2.0 ** (-2.0 * beta0 * b.orders))
