"""Explicit monotone piecewise-linear functions and planar affine maps.

This is the plain reference form of the functions the search tree keeps
implicitly; it is used for serialization, for moving functions between
trees, and as the model in the tree's tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DET_TOL = 1e-12


@dataclass(frozen=True)
class Point2:
    x: float
    y: float


@dataclass(frozen=True)
class AffineMap2:
    """q -> M q + c with M = ((m11, m12), (m21, m22))."""

    m11: float = 1.0
    m12: float = 0.0
    m21: float = 0.0
    m22: float = 1.0
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        if abs(self.det) <= DET_TOL:
            raise ValueError(f"singular affine map (det={self.det!r})")

    @property
    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 * self.m21

    @classmethod
    def translation(cls, dx: float, dy: float = 0.0) -> "AffineMap2":
        return cls(c1=dx, c2=dy)

    @classmethod
    def shear(cls, alpha: float, beta: float = 0.0) -> "AffineMap2":
        """(x, y) -> (x, y + alpha x + beta)."""
        return cls(m21=alpha, c2=beta)

    def as_tuple(self) -> tuple:
        return (self.m11, self.m12, self.m21, self.m22, self.c1, self.c2)

    def __call__(self, x, y):
        return (self.m11 * x + self.m12 * y + self.c1,
                self.m21 * x + self.m22 * y + self.c2)

    def compose(self, other: "AffineMap2") -> "AffineMap2":
        """self o other."""
        a, b = self, other
        return AffineMap2(a.m11 * b.m11 + a.m12 * b.m21, a.m11 * b.m12 + a.m12 * b.m22,
                          a.m21 * b.m11 + a.m22 * b.m21, a.m21 * b.m12 + a.m22 * b.m22,
                          a.m11 * b.c1 + a.m12 * b.c2 + a.c1,
                          a.m21 * b.c1 + a.m22 * b.c2 + a.c2)

    def inverse(self) -> "AffineMap2":
        d = self.det
        i11, i12, i21, i22 = self.m22 / d, -self.m12 / d, -self.m21 / d, self.m11 / d
        return AffineMap2(i11, i12, i21, i22,
                          -(i11 * self.c1 + i12 * self.c2), -(i21 * self.c1 + i22 * self.c2))

    def slope_image(self, mu: float) -> float:
        """Slope of the image of a line with slope mu; the image must run rightwards."""
        dx = self.m11 + self.m12 * mu
        dy = self.m21 + self.m22 * mu
        if dx <= 0:
            raise ValueError("affine map does not keep the graph x-monotone")
        return dy / dx


@dataclass(frozen=True, eq=False)
class PwlMonotone:
    """Continuous nondecreasing piecewise-linear function.

    Determined by its vertices and the slopes of the two unbounded pieces.
    Without vertices it can only be evaluated when both slopes are zero
    (the zero function); otherwise the lines have no anchor.
    """

    xs: np.ndarray = field(default_factory=lambda: np.empty(0))
    ys: np.ndarray = field(default_factory=lambda: np.empty(0))
    mu_minus: float = 0.0
    mu_plus: float = 0.0

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float).reshape(-1)
        ys = np.asarray(self.ys, dtype=float).reshape(-1)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if xs.shape != ys.shape:
            raise ValueError("xs and ys differ in length")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("vertices must be finite")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(ys) < 0):
            raise ValueError("vertex values must be nondecreasing")
        if self.mu_minus < 0 or self.mu_plus < 0:
            raise ValueError("end slopes must be nonnegative")

    @classmethod
    def from_points(cls, points, mu_minus, mu_plus):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(pts[:, 0], pts[:, 1], mu_minus, mu_plus)

    @property
    def vertices(self):
        return [Point2(float(x), float(y)) for x, y in zip(self.xs, self.ys)]

    def __len__(self):
        return self.xs.size

    def __call__(self, a):
        return evaluate(self, a)

    def allclose(self, other: "PwlMonotone", atol=1e-9, rtol=1e-9) -> bool:
        return (self.xs.shape == other.xs.shape
                and np.allclose(self.xs, other.xs, atol=atol, rtol=rtol)
                and np.allclose(self.ys, other.ys, atol=atol, rtol=rtol)
                and np.isclose(self.mu_minus, other.mu_minus, atol=atol, rtol=rtol)
                and np.isclose(self.mu_plus, other.mu_plus, atol=atol, rtol=rtol))

    def to_dict(self) -> dict:
        return {"mu_minus": float(self.mu_minus), "mu_plus": float(self.mu_plus),
                "vertices": [[float(x), float(y)] for x, y in zip(self.xs, self.ys)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "PwlMonotone":
        pts = np.asarray(d.get("vertices", []), dtype=float).reshape(-1, 2)
        return cls(pts[:, 0], pts[:, 1], float(d["mu_minus"]), float(d["mu_plus"]))

    @classmethod
    def from_json(cls, text: str) -> "PwlMonotone":
        return cls.from_dict(json.loads(text))


ZERO = PwlMonotone()


def evaluate(f: PwlMonotone, a):
    """F(a) by interpolation, with the end slopes beyond the extreme vertices."""
    a_arr = np.asarray(a, dtype=float)
    if len(f) == 0:
        if f.mu_minus or f.mu_plus:
            raise ValueError("function has slopes but no anchoring vertex")
        out = np.zeros_like(a_arr)
    else:
        xs, ys = f.xs, f.ys
        out = np.interp(a_arr, xs, ys)
        out = np.where(a_arr < xs[0], ys[0] + f.mu_minus * (a_arr - xs[0]), out)
        out = np.where(a_arr > xs[-1], ys[-1] + f.mu_plus * (a_arr - xs[-1]), out)
    return float(out) if out.ndim == 0 else out


def evaluate_inverse(f: PwlMonotone, y: float) -> float:
    """Leftmost x with F(x) = y."""
    xs, ys = f.xs, f.ys
    if len(f) == 0:
        if y == 0:
            raise ValueError("every x is a preimage of 0 under the zero function")
        raise ValueError("value outside the range of the zero function")
    i = int(np.searchsorted(ys, y, side="left"))
    if i < len(f) and ys[i] == y:
        return float(xs[i])
    if i == 0:
        if f.mu_minus <= 0:
            raise ValueError("value below the range of the function")
        return float(xs[0] - (ys[0] - y) / f.mu_minus)
    if i == len(f):
        if f.mu_plus <= 0:
            raise ValueError("value above the range of the function")
        return float(xs[-1] + (y - ys[-1]) / f.mu_plus)
    x0, x1, y0, y1 = xs[i - 1], xs[i], ys[i - 1], ys[i]
    return float(x0 + (y - y0) * (x1 - x0) / (y1 - y0))


def integrate_prefix(f: PwlMonotone, a: float, e_base: float = 0.0) -> float:
    """e_base + signed integral of F from the first breakpoint to a."""
    if len(f) == 0:
        raise ValueError("integral needs at least one breakpoint")
    xs, ys = f.xs, f.ys
    b1 = xs[0]
    fa = evaluate(f, a)
    if a <= b1:
        return e_base + 0.5 * (a - b1) * (fa + ys[0])
    k = int(np.searchsorted(xs, a, side="right"))  # vertices with x <= a
    total = float(np.sum(0.5 * np.diff(xs[:k]) * (ys[:k - 1] + ys[1:k])))
    total += 0.5 * (a - xs[k - 1]) * (ys[k - 1] + fa)
    return e_base + total


def apply_affine(f: PwlMonotone, psi: AffineMap2) -> PwlMonotone:
    """Image of the graph of F under psi.

    A vertex-free (zero) function is anchored at the origin first.
    """
    if len(f) == 0 and (f.mu_minus or f.mu_plus):
        raise ValueError("function has slopes but no anchoring vertex")
    xs, ys = (f.xs, f.ys) if len(f) else (np.zeros(1), np.zeros(1))
    nx, ny = psi(xs, ys)
    return PwlMonotone(nx, ny, psi.slope_image(f.mu_minus), psi.slope_image(f.mu_plus))


def add(f: PwlMonotone, g: PwlMonotone) -> PwlMonotone:
    """Pointwise sum; breakpoints are the union of both breakpoint sets."""
    for h in (f, g):
        if len(h) == 0 and (h.mu_minus or h.mu_plus):
            raise ValueError("function has slopes but no anchoring vertex")
    if len(f) == 0:
        return g
    if len(g) == 0:
        return f
    xs = np.union1d(f.xs, g.xs)
    return PwlMonotone(xs, evaluate(f, xs) + evaluate(g, xs),
                       f.mu_minus + g.mu_minus, f.mu_plus + g.mu_plus)


def linear(slope: float, root: float) -> PwlMonotone:
    """slope * (x - root), anchored by a single vertex at its zero."""
    return PwlMonotone([root], [0.0], slope, slope)
