"""Reaction functions f: R -> R used as drift terms and as test functions."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np
from numpy.polynomial import polynomial as P

if TYPE_CHECKING:
    from .wavelets import WaveletBasis

DEFAULT_XI = (-3.5, 3.5)


class ReactionModel:
    """Base class: vectorised evaluation via ``__call__``; ``support`` is None when unbounded."""

    kind = "abstract"
    support = None

    def __call__(self, x):
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroReaction(ReactionModel):
    kind = "zero"
    support = None

    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def to_config(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class ConstantReaction(ReactionModel):
    c: float
    kind = "constant"
    support = None

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c)

    def to_config(self):
        return {"kind": "constant", "c": _num(self.c)}


@dataclass(frozen=True)
class SplineReaction(ReactionModel):
    """Odd/even-agnostic piecewise polynomial: a core polynomial on ``core`` and
    Hermite tails on the bands between ``core`` and ``support``; zero outside.

    Coefficients are in increasing degree. Tail polynomials are expressed in the
    local variable ``x - core[1]`` (right) and ``x - core[0]`` (left).
    """

    core_coeffs: tuple[float, ...]
    core: tuple[float, float]
    outer: tuple[float, float]
    left_tail: tuple[float, ...]
    right_tail: tuple[float, ...]
    kind = "spline"

    @property
    def support(self):
        return self.outer

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        lo, hi = self.core
        a, b = self.outer
        m = (x >= lo) & (x <= hi)
        out[m] = P.polyval(x[m], self.core_coeffs)
        m = (x > hi) & (x < b)
        out[m] = P.polyval(x[m] - hi, self.right_tail)
        m = (x < lo) & (x > a)
        out[m] = P.polyval(x[m] - lo, self.left_tail)
        return out

    def derivative(self, order: int = 1) -> "SplineReaction":
        return SplineReaction(
            tuple(P.polyder(self.core_coeffs, order)) or (0.0,),
            self.core,
            self.outer,
            tuple(P.polyder(self.left_tail, order)) or (0.0,),
            tuple(P.polyder(self.right_tail, order)) or (0.0,),
        )

    def to_config(self):
        return {
            "kind": "spline",
            "core_coeffs": [_num(c) for c in self.core_coeffs],
            "core": [_num(c) for c in self.core],
            "support": [_num(c) for c in self.outer],
            "left_tail": [_num(c) for c in self.left_tail],
            "right_tail": [_num(c) for c in self.right_tail],
        }


def hermite_tail(values_left, values_right, width: float) -> np.ndarray:
    """Degree-(2q-1) polynomial on [0, width] matching ``q`` derivatives at both ends.

    ``values_left[k]`` and ``values_right[k]`` are the k-th derivatives at 0 and at ``width``.
    """
    q = len(values_left)
    deg = 2 * q - 1
    A = np.zeros((2 * q, 2 * q))
    rhs = np.concatenate([values_left, values_right]).astype(float)
    for k in range(q):
        for p in range(k, deg + 1):
            fall = np.prod(np.arange(p - k + 1, p + 1, dtype=float))
            A[k, p] = fall if p == k else 0.0
            A[q + k, p] = fall * width ** (p - k)
    return np.linalg.solve(A, rhs)


def truncated_polynomial(core_coeffs, core=(-3.25, 3.25), support=(-3.5, 3.5), smoothness: int = 3) -> SplineReaction:
    """Polynomial on ``core`` brought smoothly to zero at the ends of ``support``.

    The tails match the core value and its first ``smoothness`` derivatives and vanish
    to the same order at the support ends, so the result is C^smoothness.
    """
    core_coeffs = np.asarray(core_coeffs, dtype=float)
    q = smoothness + 1
    lo, hi = core
    a, b = support

    def derivs(x):
        return [P.polyval(x, P.polyder(core_coeffs, k)) if k else P.polyval(x, core_coeffs) for k in range(q)]

    right = hermite_tail(derivs(hi), np.zeros(q), b - hi)
    # left tail in the variable s = x - lo on [a - lo, 0]: solve on [0, lo - a] in u = -s
    dl = np.array(derivs(lo)) * (-1.0) ** np.arange(q)
    left_u = hermite_tail(dl, np.zeros(q), lo - a)
    left = left_u * (-1.0) ** np.arange(left_u.size)
    return SplineReaction(tuple(core_coeffs), (lo, hi), (a, b), tuple(left), tuple(right))


def allen_cahn_truncated() -> SplineReaction:
    """f0(x) = -(x^3 - 9x) on [-3.25, 3.25], C^3 degree-7 tails, zero for |x| >= 3.5."""
    return truncated_polynomial((0.0, 9.0, 0.0, -1.0))


@dataclass(frozen=True)
class BumpReaction(ReactionModel):
    """Smooth compactly supported bump ``height * exp(1 - 1/(1 - u^2))``, u = (x - center)/radius."""

    center: float = 0.0
    radius: float = 1.0
    height: float = 1.0
    kind = "bump"

    @property
    def support(self):
        return (self.center - self.radius, self.center + self.radius)

    def __call__(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.radius
        out = np.zeros_like(u)
        m = np.abs(u) < 1.0
        out[m] = self.height * np.exp(1.0 - 1.0 / (1.0 - u[m] ** 2))
        return out

    def derivative(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.radius
        out = np.zeros_like(u)
        m = np.abs(u) < 1.0
        um = u[m]
        out[m] = self.height * np.exp(1.0 - 1.0 / (1.0 - um**2)) * (-2.0 * um / (1.0 - um**2) ** 2) / self.radius
        return out

    def l1_norm(self) -> float:
        x = np.linspace(*self.support, 20001)
        return float(np.trapezoid(np.abs(self(x)), x))

    def to_config(self):
        return {"kind": "bump", "center": _num(self.center), "radius": _num(self.radius), "height": _num(self.height)}


class CoefficientReaction(ReactionModel):
    """f = coeffs^T Psi for a wavelet basis; vanishes outside the basis interval."""

    kind = "coefficients"

    def __init__(self, basis: "WaveletBasis", coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (basis.dim,):
            raise ValueError(f"expected {basis.dim} coefficients, got shape {coeffs.shape}")
        self.basis = basis
        self.coeffs = coeffs

    @property
    def support(self):
        return self.basis.xi

    def __call__(self, x):
        return self.basis.synthesize(self.coeffs, x)

    def to_config(self):
        return {"kind": "coefficients", "basis": self.basis.descriptor(), "coeffs": [float(c) for c in self.coeffs]}


class CallableReaction(ReactionModel):
    """Wraps an arbitrary vectorised callable (not serialisable)."""

    kind = "callable"

    def __init__(self, fn, support=None, name="callable"):
        self.fn = fn
        self.support = support
        self.name = name

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


def eval_reaction(m: ReactionModel, x):
    return m(x)


def from_coefficients(basis: "WaveletBasis", coeffs) -> CoefficientReaction:
    return CoefficientReaction(basis, coeffs)


def lipschitz_constant(m: ReactionModel, probe_grid_step: float = 1e-4, default_range=(-10.0, 10.0)) -> float:
    """sup|f| plus the largest difference quotient on a probe grid covering the support.

    Difference quotients underestimate the true slope only by O(step); the sup term
    makes the result the full Lipschitz norm rather than the seminorm.
    """
    if not probe_grid_step > 0:
        raise ValueError("probe_grid_step must be positive")
    a, b = m.support if m.support is not None else default_range
    x = np.arange(a - probe_grid_step, b + 2 * probe_grid_step, probe_grid_step)
    v = m(x)
    slope = np.max(np.abs(np.diff(v))) / probe_grid_step if x.size > 1 else 0.0
    return float(slope + np.max(np.abs(v)))


def reaction_from_config(cfg: dict) -> ReactionModel:
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "zero":
        return ZeroReaction()
    if kind == "constant":
        return ConstantReaction(_parse_num(cfg["c"]))
    if kind == "allen_cahn":
        return allen_cahn_truncated()
    if kind == "spline":
        return SplineReaction(
            tuple(_parse_num(c) for c in cfg["core_coeffs"]),
            tuple(_parse_num(c) for c in cfg["core"]),
            tuple(_parse_num(c) for c in cfg["support"]),
            tuple(_parse_num(c) for c in cfg["left_tail"]),
            tuple(_parse_num(c) for c in cfg["right_tail"]),
        )
    if kind == "truncated_polynomial":
        return truncated_polynomial(
            [_parse_num(c) for c in cfg["core_coeffs"]],
            tuple(_parse_num(c) for c in cfg.get("core", (-3.25, 3.25))),
            tuple(_parse_num(c) for c in cfg.get("support", DEFAULT_XI)),
        )
    if kind == "bump":
        return BumpReaction(
            _parse_num(cfg.get("center", 0.0)), _parse_num(cfg.get("radius", 1.0)), _parse_num(cfg.get("height", 1.0))
        )
    if kind == "coefficients":
        from .wavelets import basis_from_descriptor

        return CoefficientReaction(basis_from_descriptor(cfg["basis"]), cfg["coeffs"])
    raise ValueError(f"unknown reaction kind {kind!r}")


def _num(x):
    """Rationals with small denominators are written as 'p/q' strings so they round-trip exactly."""
    x = float(x)
    if x.is_integer():
        return x
    fr = Fraction(x).limit_denominator(1 << 20)
    if float(fr) == x and fr.denominator < (1 << 20):
        return f"{fr.numerator}/{fr.denominator}"
    return x


def _parse_num(x) -> float:
    if isinstance(x, str):
        return float(Fraction(x))
    return float(x)
