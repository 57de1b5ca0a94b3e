"""Affine composition tree.

A balanced search tree over the vertices of a monotone piecewise-linear
function F. Every node carries an affine map of the plane and a vertex is
the image of the origin under the maps on its root path, so a single map
at the root deforms the whole graph at once and a contiguous vertex range
can be deformed by touching O(log n) nodes.

Alongside F the tree keeps the quadratic c1 x^2 + c2 x + c3 that equals
the energy E (an antiderivative of F) left of the first breakpoint, which
together with the subtree integral summaries yields E anywhere.

The heavy lifting is in :mod:`lipreg._kernels`; this class owns the
storage, grows it, validates arguments and converts to and from
:class:`~lipreg.pwl.PwlMonotone`.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels as K
from .pwl import DET_TOL, AffineMap2, Point2, PwlMonotone

AXES = {"x": 0, "y": 1, 0: 0, 1: 1}
X_TOL = 1e-9


def _axis(axis) -> int:
    try:
        return AXES[axis]
    except KeyError:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}") from None


def _as_map(psi) -> tuple:
    if isinstance(psi, AffineMap2):
        return psi.as_tuple()
    m = tuple(float(v) for v in psi)
    if len(m) != 6:
        raise ValueError("affine map needs six coefficients")
    if abs(m[0] * m[3] - m[1] * m[2]) <= DET_TOL:
        raise ValueError("singular affine map")
    return m


def _slope_image(m, mu):
    dx = m[0] + m[1] * mu
    if dx <= 0:
        raise ValueError("affine map does not keep the graph x-monotone")
    return (m[2] + m[3] * mu) / dx


class Act:
    """Mutable monotone piecewise-linear function with logarithmic updates."""

    def __init__(self, mu_minus: float = 0.0, mu_plus: float = 0.0,
                 capacity: int = 16, augment: bool = True):
        if mu_minus < 0 or mu_plus < 0:
            raise ValueError("end slopes must be nonnegative")
        self._F, self._A, self._G, self._S, self._P = K.new_arrays(capacity, augment)
        self._P[K.MU_MINUS] = mu_minus
        self._P[K.MU_PLUS] = mu_plus

    # ------------------------------------------------------------ storage
    @property
    def arrays(self):
        """The raw kernel arrays (F, A, G, S, P)."""
        return self._F, self._A, self._G, self._S, self._P

    @property
    def augmented(self) -> bool:
        return bool(self._S[K.AUG])

    def reserve(self, extra: int) -> None:
        """Make room for ``extra`` more vertices."""
        used = int(self._G[0, K.POOL_NEXT])
        need = used + int(extra)
        cap = self._F.shape[0]
        if need <= cap:
            return
        cap = max(need, 2 * cap)
        F, A, G = K.new_pool(cap, self.augmented)
        F[:used] = self._F[:used]
        G[:used] = self._G[:used]
        if self.augmented:
            A[:used] = self._A[:used]
        self._F, self._A, self._G = F, A, G

    def copy(self) -> "Act":
        other = Act.__new__(Act)
        other._F, other._A, other._G = self._F.copy(), self._A.copy(), self._G.copy()
        other._S, other._P = self._S.copy(), self._P.copy()
        return other

    @classmethod
    def from_pwl(cls, f: PwlMonotone, energy_c=(0.0, 0.0, 0.0), augment=True) -> "Act":
        t = cls(f.mu_minus, f.mu_plus, capacity=len(f) + 8, augment=augment)
        for x, y in zip(f.xs, f.ys):
            K.insert(*t.arrays[:4], float(x), float(y))
        t._P[K.C1:] = energy_c
        return t

    @classmethod
    def from_vertices(cls, xs, ys, mu_minus: float, mu_plus: float,
                      energy_c=(0.0, 0.0, 0.0), augment=True) -> "Act":
        """Rebuild from raw vertex arrays, keeping their order and duplicates.

        Ranks then match those of the Act the arrays were read from, so
        rank-based undo records stay valid.
        """
        t = cls(mu_minus, mu_plus, capacity=len(xs) + 8, augment=augment)
        F, A, G, S, _ = t.arrays
        for k, (x, y) in enumerate(zip(xs, ys)):
            K.insert_rank(F, A, G, S, k, float(x), float(y))
        t._P[K.C1:] = energy_c
        return t

    # -------------------------------------------------------- attributes
    def __len__(self) -> int:
        return int(self._S[K.COUNT])

    @property
    def count(self) -> int:
        return len(self)

    @property
    def mu_minus(self) -> float:
        return float(self._P[K.MU_MINUS])

    @property
    def mu_plus(self) -> float:
        return float(self._P[K.MU_PLUS])

    @property
    def energy_c(self) -> tuple:
        return tuple(float(v) for v in self._P[K.C1:])

    @property
    def height(self) -> int:
        root = self._S[K.ROOT]
        return 0 if root == K.NIL else int(self._G[root, K.HEIGHT])

    @property
    def rotations(self) -> int:
        return int(self._S[K.ROTATIONS])

    def stats(self) -> dict:
        return {"count": len(self), "height": self.height, "rotations": self.rotations}

    # ------------------------------------------------------------ queries
    def _require_anchor(self):
        if len(self) == 0 and (self._P[K.MU_MINUS] or self._P[K.MU_PLUS]):
            raise ValueError("function has slopes but no anchoring vertex")

    def pred_succ(self, axis, b: float):
        """Rightmost vertex with coordinate <= b and leftmost with coordinate >= b."""
        ax = _axis(axis)
        F, _, G, S, _ = self.arrays
        p, px, py = K.pred(F, G, S, ax, b, False)
        s, sx, sy = K.succ(F, G, S, ax, b, False)
        return (None if p == K.NIL else Point2(px, py),
                None if s == K.NIL else Point2(sx, sy))

    def evaluate(self, a: float) -> float:
        self._require_anchor()
        F, _, G, S, P = self.arrays
        return K.evaluate(F, G, S, P, float(a))

    __call__ = evaluate

    def evaluate_inverse(self, y: float) -> float:
        """Leftmost x with F(x) = y."""
        self._require_anchor()
        F, _, G, S, P = self.arrays
        x = K.evaluate_inverse(F, G, S, P, float(y))
        if math.isnan(x):
            raise ValueError(f"{y!r} has no preimage")
        return x

    def integrate(self, a: float) -> float:
        """E(b1) + integral of F from the first breakpoint b1 to a."""
        if not self.augmented:
            raise RuntimeError("integration needs the augmented tree")
        self._require_anchor()
        return K.integrate(*self.arrays, float(a))

    def energy_at_first(self) -> float:
        if len(self) == 0:
            raise ValueError("no breakpoints")
        F, _, G, S, P = self.arrays
        return K.left_energy(P, K.extreme(F, G, S, False)[0])

    def select(self, k: int) -> Point2:
        if not 0 <= k < len(self):
            raise IndexError(k)
        F, _, G, S, _ = self.arrays
        return Point2(*K.vertex_at_rank(F, G, S, int(k)))

    def rank(self, axis, b: float, strict: bool = True) -> int:
        """Number of vertices with coordinate < b (strict) or <= b."""
        F, _, G, S, _ = self.arrays
        return int(K.rank_below(F, G, S, _axis(axis), float(b), strict))

    def vertex_arrays(self):
        """Vertex coordinates in order, exactly as stored (duplicates kept)."""
        F, _, G, S, _ = self.arrays
        return K.extract(F, G, S)

    def extract(self) -> PwlMonotone:
        """The represented function as an explicit :class:`PwlMonotone`.

        Coincident vertices are merged and roundoff-level order violations
        are flattened so the result always validates.
        """
        xs, ys = self.vertex_arrays()
        if xs.size > 1:
            keep = np.ones(xs.size, dtype=bool)
            keep[1:] = xs[1:] > np.maximum.accumulate(xs)[:-1]
            xs, ys = xs[keep], np.maximum.accumulate(ys[keep])
        return PwlMonotone(xs, ys, max(self.mu_minus, 0.0), max(self.mu_plus, 0.0))

    # ----------------------------------------------------------- updates
    def insert(self, x: float, y: float, check: bool = True) -> None:
        """Add vertex (x, y); it must lie between its neighbours' values."""
        x, y = float(x), float(y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError("vertex must be finite")
        if check and len(self):
            p, s = self.pred_succ("x", x)
            tol = 1e-9 * max(1.0, abs(y))
            if (p is not None and y < p.y - tol) or (s is not None and y > s.y + tol):
                raise ValueError(f"vertex ({x}, {y}) breaks monotonicity")
            if p is None and self.mu_minus == 0 and s is not None and abs(y - s.y) > tol:
                raise ValueError(f"vertex ({x}, {y}) is off the flat left ray")
            if s is None and self.mu_plus == 0 and p is not None and abs(y - p.y) > tol:
                raise ValueError(f"vertex ({x}, {y}) is off the flat right ray")
        self.reserve(1)
        K.insert(*self.arrays[:4], x, y)

    def delete(self, b: float, tol: float = X_TOL) -> Point2:
        """Remove the vertex at abscissa b (matched within tol)."""
        F, A, G, S, _ = self.arrays
        p, px, py = K.pred(F, G, S, 0, b, False)
        s, sx, sy = K.succ(F, G, S, 0, b, False)
        best, bx, by = p, px, py
        if p == K.NIL or (s != K.NIL and sx - b < b - px):
            best, bx, by = s, sx, sy
        if best == K.NIL or abs(bx - b) > tol * max(1.0, abs(b)):
            raise KeyError(f"no breakpoint at {b!r}")
        K.delete_node(F, A, G, S, best)
        return Point2(bx, by)

    def delete_rank(self, k: int) -> Point2:
        if not 0 <= k < len(self):
            raise IndexError(k)
        return Point2(*K.delete_rank(*self.arrays[:4], int(k)))

    def _reexpress_energy(self, m):
        # E'(x') = m11 m22 E((x' - c1) / m11); only meaningful when m12 == 0
        if m[1] != 0.0:
            return
        scale, off = m[0], m[4]
        k = m[0] * m[3]
        c1, c2, c3 = self._P[K.C1:]
        self._P[K.C1] = k * c1 / scale ** 2
        self._P[K.C2] = k * (c2 / scale - 2.0 * off * c1 / scale ** 2)
        self._P[K.C3] = k * (c1 * off ** 2 / scale ** 2 - c2 * off / scale + c3)

    def affine(self, psi) -> None:
        """Apply psi to the whole graph.

        The energy quadratic follows the abscissa substitution only; the
        additive part of a shear is booked by :meth:`energy_accumulate`.
        """
        m = _as_map(psi)
        mu_minus, mu_plus = _slope_image(m, self.mu_minus), _slope_image(m, self.mu_plus)
        if mu_minus < -1e-12 or mu_plus < -1e-12:
            raise ValueError("affine map makes the function decreasing")
        self._require_anchor()
        if len(self) == 0:
            self.insert(0.0, 0.0)  # the zero function, anchored at the origin
        K.affine_all(self._F, self._G, self._S, m)
        self._P[K.MU_MINUS], self._P[K.MU_PLUS] = max(mu_minus, 0.0), max(mu_plus, 0.0)
        self._reexpress_energy(m)

    def interval(self, axis, psi, lo: float, hi: float) -> None:
        """Apply psi to the vertices whose axis coordinate lies in [lo, hi].

        An infinite bound also carries the corresponding end ray (and, on
        the left, the energy quadratic) along.
        """
        m = _as_map(psi)
        ax = _axis(axis)
        if lo == -math.inf and hi == math.inf:
            self.affine(m)
            return
        first = self.rank(ax, lo, strict=True)
        last = self.rank(ax, hi, strict=False) - 1
        self.interval_rank(first, last, m, left_ray=lo == -math.inf, right_ray=hi == math.inf)

    def interval_rank(self, first: int, last: int, psi, left_ray=False, right_ray=False) -> None:
        """Apply psi to the vertices of rank first..last (inclusive)."""
        m = _as_map(psi)
        if left_ray:
            self._P[K.MU_MINUS] = max(_slope_image(m, self.mu_minus), 0.0)
            self._reexpress_energy(m)
        if right_ray:
            self._P[K.MU_PLUS] = max(_slope_image(m, self.mu_plus), 0.0)
        if first <= last:
            K.interval_rank(*self.arrays[:4], int(first), int(last), m)

    def energy_accumulate(self, t_v: float, lam: float) -> None:
        """Add lam (x - t_v)^2 to the energy bookkeeping."""
        if not lam > 0:
            raise ValueError("vertex weight must be positive")
        self._P[K.C1] += lam
        self._P[K.C2] -= 2.0 * lam * t_v
        self._P[K.C3] += lam * t_v * t_v

    def add_energy(self, energy_c, sign: float = 1.0) -> None:
        self._P[K.C1:] += sign * np.asarray(energy_c, dtype=float)

    def merge_add(self, g: PwlMonotone, energy_c=(0.0, 0.0, 0.0)) -> None:
        """F += g, inserting g's breakpoints."""
        self._merge(g, 1.0)
        self.add_energy(energy_c)

    def unmerge_subtract(self, g: PwlMonotone, energy_c=(0.0, 0.0, 0.0)) -> None:
        """Undo :meth:`merge_add` of the same g."""
        self._merge(g, -1.0)
        self.add_energy(energy_c, -1.0)

    def _merge(self, g: PwlMonotone, sign: float) -> None:
        if len(g) == 0:
            if g.mu_minus or g.mu_plus:
                raise ValueError("function has slopes but no anchoring vertex")
            return
        if sign > 0 and len(self) == 0 and (self.mu_minus or self.mu_plus):
            raise ValueError("function has slopes but no anchoring vertex")
        if sign < 0 and len(self) < len(g):
            raise KeyError("breakpoints of the subtracted function are missing")
        self.reserve(len(g))
        done = K.merge_add(*self.arrays, g.xs, g.ys, g.mu_minus, g.mu_plus, sign, X_TOL)
        if done != len(g):
            raise KeyError(f"breakpoint {g.xs[done]!r} of the subtracted function is missing")

    # ------------------------------------------------------------- audits
    def audit(self) -> dict:
        err, imbalance, bad = K.audit(*self.arrays[:4])
        return {"aug_error": err, "imbalance": imbalance, "bad_links": bad,
                "height": self.height, "count": len(self)}

    def check(self, aug_tol: float = 1e-9) -> None:
        """Raise AssertionError when a structural invariant is violated."""
        a = self.audit()
        n = a["count"]
        assert a["bad_links"] == 0, a
        assert a["imbalance"] <= 1, a
        assert a["height"] <= 1.4405 * math.log2(n + 2) + 1, a
        assert a["aug_error"] <= aug_tol, a

    def __repr__(self) -> str:
        return f"Act(count={len(self)}, mu=({self.mu_minus:g}, {self.mu_plus:g}))"
