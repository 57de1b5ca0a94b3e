"""Compiled kernels behind :class:`lipreg.act.Act`.

The tree lives in a handful of flat arrays so that the kernels can be
called from Python cheaply and from other compiled loops directly:

``F`` (cap, 8) float64
    stored affine map of each node as ``(m11, m12, m21, m22, c1, c2)``;
    the last two columns are padding.
``A`` (cap, 8) float64
    integral summary of each subtree in the node's local frame (below its
    own map): ``(I, first_x, first_y, last_x, last_y)``, where ``I`` is the
    line integral of ``y - first_y`` over ``dx`` along the chain.
``G`` (cap, 8) int32
    ``left, right, parent, height, size`` and padding.
``S`` int64 meta: ``root, count, used, free head, rotations, augment``.
``P`` float64 meta: ``mu_minus, mu_plus, c1, c2, c3`` (end slopes and the
    quadratic that equals the energy left of the first breakpoint).

The actual vertex of node ``z`` is ``Phi_z(0, 0)`` where ``Phi_z`` composes
the maps from the root down to and including ``z``.
"""

import math

import numpy as np
from numba import njit

NIL = -1

LEFT, RIGHT, PARENT, HEIGHT, SIZE = 0, 1, 2, 3, 4
POOL_FREE, POOL_NEXT = 0, 1
ROOT, COUNT, ROTATIONS, AUG = 0, 1, 2, 3
MU_MINUS, MU_PLUS, C1, C2, C3 = 0, 1, 2, 3, 4

N_META = 4
# slack for a flat tail that should be zero but carries summation roundoff
ZERO_TOL = 1e-9
N_PARAM = 5


@njit(cache=True)
def new_pool(capacity, augment):
    """Node storage shared by any number of trees.

    Row 0 of G is the allocator header (free-list head, next unused row).
    Rows are padded to 64 and 32 bytes so a node never straddles cache lines.
    """
    capacity = max(capacity, 4) + 1
    F = np.zeros((capacity, 8))
    A = np.zeros((capacity if augment else 1, 8))
    G = np.full((capacity, 8), NIL, dtype=np.int32)
    G[0, POOL_FREE] = NIL
    G[0, POOL_NEXT] = 1
    return F, A, G


@njit(cache=True)
def new_meta(augment):
    """Per-tree state: S (root, count, rotations, augment flag) and P."""
    S = np.zeros(N_META, dtype=np.int64)
    S[ROOT] = NIL
    S[AUG] = 1 if augment else 0
    return S, np.zeros(N_PARAM)


def new_arrays(capacity, augment=True):
    F, A, G = new_pool(int(capacity), bool(augment))
    S, P = new_meta(bool(augment))
    return F, A, G, S, P


# ---------------------------------------------------------------- affine maps

@njit(cache=True, inline="always")
def compose(a, b):
    """Return ``a o b``."""
    return (a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3],
            a[0] * b[4] + a[1] * b[5] + a[4],
            a[2] * b[4] + a[3] * b[5] + a[5])


@njit(cache=True, inline="always")
def inverse(a):
    det = a[0] * a[3] - a[1] * a[2]
    i11 = a[3] / det
    i12 = -a[1] / det
    i21 = -a[2] / det
    i22 = a[0] / det
    return (i11, i12, i21, i22,
            -(i11 * a[4] + i12 * a[5]), -(i21 * a[4] + i22 * a[5]))


@njit(cache=True, inline="always")
def apply(a, x, y):
    return a[0] * x + a[1] * y + a[4], a[2] * x + a[3] * y + a[5]


@njit(cache=True, inline="always")
def identity():
    return (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)


@njit(cache=True, inline="always")
def translation(dx, dy):
    return (1.0, 0.0, 0.0, 1.0, dx, dy)


@njit(cache=True, inline="always")
def get_map(F, z):
    return (F[z, 0], F[z, 1], F[z, 2], F[z, 3], F[z, 4], F[z, 5])


@njit(cache=True, inline="always")
def set_map(F, z, m):
    F[z, 0] = m[0]
    F[z, 1] = m[1]
    F[z, 2] = m[2]
    F[z, 3] = m[3]
    F[z, 4] = m[4]
    F[z, 5] = m[5]


# ------------------------------------------------------------ chain summaries

@njit(cache=True, inline="always")
def summary_point(x, y):
    return (0.0, x, y, x, y)


@njit(cache=True, inline="always")
def summary_transform(s, m):
    # Area enclosed by chain and chord scales with det(M); the chord-triangle
    # part is rebuilt from the transformed endpoints.
    fx, fy = apply(m, s[1], s[2])
    lx, ly = apply(m, s[3], s[4])
    det = m[0] * m[3] - m[1] * m[2]
    w = s[3] - s[1]
    h = s[4] - s[2]
    integral = det * (s[0] - 0.5 * h * w) + 0.5 * (ly - fy) * (lx - fx)
    return (integral, fx, fy, lx, ly)


@njit(cache=True, inline="always")
def summary_concat(a, b):
    integral = (a[0] + b[0]
                + (b[1] - a[3]) * (0.5 * (a[4] + b[2]) - a[2])
                + (b[2] - a[2]) * (b[3] - b[1]))
    return (integral, a[1], a[2], b[3], b[4])


@njit(cache=True, inline="always")
def get_summary(A, z):
    return (A[z, 0], A[z, 1], A[z, 2], A[z, 3], A[z, 4])


# ------------------------------------------------------------------ structure

@njit(cache=True, inline="always")
def _height(G, z):
    return 0 if z == NIL else G[z, HEIGHT]


@njit(cache=True, inline="always")
def _size(G, z):
    return 0 if z == NIL else G[z, SIZE]


@njit(cache=True)
def pull(F, A, G, S, z):
    """Recompute height, size and (optionally) the integral summary of z."""
    left = G[z, LEFT]
    right = G[z, RIGHT]
    hl = _height(G, left)
    hr = _height(G, right)
    G[z, HEIGHT] = 1 + (hl if hl > hr else hr)
    G[z, SIZE] = 1 + _size(G, left) + _size(G, right)
    if S[AUG]:
        s = summary_point(0.0, 0.0)
        if left != NIL:
            s = summary_concat(summary_transform(get_summary(A, left), get_map(F, left)), s)
        if right != NIL:
            s = summary_concat(s, summary_transform(get_summary(A, right), get_map(F, right)))
        for k in range(5):
            A[z, k] = s[k]


@njit(cache=True)
def frame(F, G, z):
    """Composition of the maps from the root down to and including z."""
    m = get_map(F, z)
    u = G[z, PARENT]
    while u != NIL:
        m = compose(get_map(F, u), m)
        u = G[u, PARENT]
    return m


@njit(cache=True)
def parent_frame(F, G, z):
    p = G[z, PARENT]
    if p == NIL:
        return identity()
    return frame(F, G, p)


@njit(cache=True)
def _replace_child(G, S, p, old, new):
    if p == NIL:
        S[ROOT] = new
    elif G[p, LEFT] == old:
        G[p, LEFT] = new
    else:
        G[p, RIGHT] = new


@njit(cache=True)
def rotate_left(F, A, G, S, x):
    y = G[x, RIGHT]
    b = G[y, LEFT]
    p = G[x, PARENT]
    mx = get_map(F, x)
    my = get_map(F, y)
    set_map(F, y, compose(mx, my))
    set_map(F, x, inverse(my))
    if b != NIL:
        set_map(F, b, compose(my, get_map(F, b)))
        G[b, PARENT] = x
    G[x, RIGHT] = b
    G[y, LEFT] = x
    G[x, PARENT] = y
    G[y, PARENT] = p
    _replace_child(G, S, p, x, y)
    pull(F, A, G, S, x)
    pull(F, A, G, S, y)
    S[ROTATIONS] += 1


@njit(cache=True)
def rotate_right(F, A, G, S, y):
    x = G[y, LEFT]
    b = G[x, RIGHT]
    p = G[y, PARENT]
    mx = get_map(F, x)
    my = get_map(F, y)
    set_map(F, x, compose(my, mx))
    set_map(F, y, inverse(mx))
    if b != NIL:
        set_map(F, b, compose(mx, get_map(F, b)))
        G[b, PARENT] = y
    G[y, LEFT] = b
    G[x, RIGHT] = y
    G[y, PARENT] = x
    G[x, PARENT] = p
    _replace_child(G, S, p, y, x)
    pull(F, A, G, S, y)
    pull(F, A, G, S, x)
    S[ROTATIONS] += 1


@njit(cache=True)
def rebalance_up(F, A, G, S, z, dsize):
    """AVL repair from z to the root after the subtree size changed by dsize.

    Without augmentation the walk stops restructuring as soon as a subtree
    keeps its height and merely adjusts sizes above that point.
    """
    aug = S[AUG] != 0
    fixing = True
    while z != NIL:
        if not (fixing or aug):
            G[z, SIZE] += dsize
            z = G[z, PARENT]
            continue
        old = G[z, HEIGHT]
        pull(F, A, G, S, z)
        left = G[z, LEFT]
        right = G[z, RIGHT]
        bal = _height(G, left) - _height(G, right)
        top = z
        if bal > 1:
            if _height(G, G[left, LEFT]) < _height(G, G[left, RIGHT]):
                rotate_left(F, A, G, S, left)
            rotate_right(F, A, G, S, z)
            top = G[z, PARENT]
        elif bal < -1:
            if _height(G, G[right, RIGHT]) < _height(G, G[right, LEFT]):
                rotate_right(F, A, G, S, right)
            rotate_left(F, A, G, S, z)
            top = G[z, PARENT]
        if G[top, HEIGHT] == old:
            fixing = False
        z = G[top, PARENT]


@njit(cache=True)
def pull_to_root(F, A, G, S, z):
    while z != NIL:
        pull(F, A, G, S, z)
        z = G[z, PARENT]


@njit(cache=True)
def alloc(F, A, G, S):
    z = G[0, POOL_FREE]
    if z != NIL:
        G[0, POOL_FREE] = G[z, LEFT]
    else:
        z = G[0, POOL_NEXT]
        G[0, POOL_NEXT] += 1
    G[z, LEFT] = NIL
    G[z, RIGHT] = NIL
    G[z, PARENT] = NIL
    G[z, HEIGHT] = 1
    G[z, SIZE] = 1
    set_map(F, z, identity())
    if S[AUG]:
        for k in range(5):
            A[z, k] = 0.0
    return z


@njit(cache=True)
def release(G, z):
    G[z, LEFT] = G[0, POOL_FREE]
    G[z, RIGHT] = NIL
    G[z, PARENT] = NIL
    G[z, SIZE] = 0
    G[0, POOL_FREE] = z


@njit(cache=True)
def clear(G, S):
    """Return every node of the tree to the pool."""
    root = S[ROOT]
    if root != NIL:
        stack = np.empty(256, dtype=np.int64)
        stack[0] = root
        top = 1
        while top > 0:
            top -= 1
            u = stack[top]
            for c in (G[u, LEFT], G[u, RIGHT]):
                if c != NIL:
                    stack[top] = c
                    top += 1
            release(G, u)
    S[ROOT] = NIL
    S[COUNT] = 0


# ------------------------------------------------------------- point updates

@njit(cache=True)
def _attach(F, A, G, S, z, u, m, x, y):
    cx, cy = apply(inverse(m), x, y)
    set_map(F, z, translation(cx, cy))
    G[z, PARENT] = u
    rebalance_up(F, A, G, S, u, 1)


@njit(cache=True)
def insert(F, A, G, S, x, y):
    """Insert vertex (x, y); equal abscissae place the new vertex first."""
    z = alloc(F, A, G, S)
    S[COUNT] += 1
    root = S[ROOT]
    if root == NIL:
        set_map(F, z, translation(x, y))
        S[ROOT] = z
        return z
    u = root
    m = get_map(F, u)
    while True:
        if x <= m[4]:
            nxt = G[u, LEFT]
            if nxt == NIL:
                G[u, LEFT] = z
                break
        else:
            nxt = G[u, RIGHT]
            if nxt == NIL:
                G[u, RIGHT] = z
                break
        u = nxt
        m = compose(m, get_map(F, u))
    _attach(F, A, G, S, z, u, m, x, y)
    return z


@njit(cache=True)
def insert_rank(F, A, G, S, k, x, y):
    """Insert vertex (x, y) so that it gets in-order rank k.

    The caller guarantees that this position respects the x order.
    """
    z = alloc(F, A, G, S)
    S[COUNT] += 1
    root = S[ROOT]
    if root == NIL:
        set_map(F, z, translation(x, y))
        S[ROOT] = z
        return z
    u = root
    m = get_map(F, u)
    while True:
        sl = _size(G, G[u, LEFT])
        if k <= sl:
            nxt = G[u, LEFT]
            if nxt == NIL:
                G[u, LEFT] = z
                break
        else:
            k -= sl + 1
            nxt = G[u, RIGHT]
            if nxt == NIL:
                G[u, RIGHT] = z
                break
        u = nxt
        m = compose(m, get_map(F, u))
    _attach(F, A, G, S, z, u, m, x, y)
    return z


@njit(cache=True)
def move_vertex(F, G, z, outer, x, y):
    """Relocate z's own vertex to (x, y) without moving its descendants.

    ``outer`` is the frame above z (composition of its ancestors' maps).
    """
    m = get_map(F, z)
    cx, cy = apply(inverse(outer), x, y)
    mi = inverse((m[0], m[1], m[2], m[3], 0.0, 0.0))
    dx, dy = apply(mi, m[4] - cx, m[5] - cy)
    F[z, 4] = cx
    F[z, 5] = cy
    for child in (G[z, LEFT], G[z, RIGHT]):
        if child != NIL:
            F[child, 4] += dx
            F[child, 5] += dy


@njit(cache=True)
def delete_node(F, A, G, S, z):
    if G[z, LEFT] != NIL and G[z, RIGHT] != NIL:
        s = G[z, RIGHT]
        while G[s, LEFT] != NIL:
            s = G[s, LEFT]
        ms = frame(F, G, s)
        move_vertex(F, G, z, parent_frame(F, G, z), ms[4], ms[5])
        z = s
    child = G[z, LEFT]
    if child == NIL:
        child = G[z, RIGHT]
    p = G[z, PARENT]
    if child != NIL:
        set_map(F, child, compose(get_map(F, z), get_map(F, child)))
        G[child, PARENT] = p
    _replace_child(G, S, p, z, child)
    release(G, z)
    S[COUNT] -= 1
    rebalance_up(F, A, G, S, p, -1)


@njit(cache=True)
def node_at_rank(G, S, k):
    u = S[ROOT]
    while u != NIL:
        sl = _size(G, G[u, LEFT])
        if k < sl:
            u = G[u, LEFT]
        elif k == sl:
            return u
        else:
            k -= sl + 1
            u = G[u, RIGHT]
    return NIL


@njit(cache=True)
def rank_of_node(G, z):
    r = _size(G, G[z, LEFT])
    u = z
    p = G[u, PARENT]
    while p != NIL:
        if G[p, RIGHT] == u:
            r += _size(G, G[p, LEFT]) + 1
        u = p
        p = G[u, PARENT]
    return r


@njit(cache=True)
def delete_rank(F, A, G, S, k):
    z = node_at_rank(G, S, k)
    m = frame(F, G, z)
    x, y = m[4], m[5]
    delete_node(F, A, G, S, z)
    return x, y


@njit(cache=True)
def vertex_at_rank(F, G, S, k):
    m = frame(F, G, node_at_rank(G, S, k))
    return m[4], m[5]


@njit(cache=True)
def rank_below(F, G, S, axis, b, strict):
    """Number of vertices whose coordinate is < b (strict) or <= b."""
    u = S[ROOT]
    m = identity()
    r = 0
    while u != NIL:
        m = compose(m, get_map(F, u))
        v = m[4 + axis]
        if v < b or (not strict and v == b):
            r += _size(G, G[u, LEFT]) + 1
            u = G[u, RIGHT]
        else:
            u = G[u, LEFT]
    return r


# ------------------------------------------------------------------- queries

@njit(cache=True)
def pred(F, G, S, axis, b, strict):
    """Rightmost vertex with coordinate <= b (or < b). Returns (node, x, y)."""
    u = S[ROOT]
    m = identity()
    best = NIL
    bx = 0.0
    by = 0.0
    while u != NIL:
        m = compose(m, get_map(F, u))
        v = m[4 + axis]
        if v < b or (not strict and v == b):
            best = u
            bx = m[4]
            by = m[5]
            u = G[u, RIGHT]
        else:
            u = G[u, LEFT]
    return best, bx, by


@njit(cache=True)
def succ(F, G, S, axis, b, strict):
    """Leftmost vertex with coordinate >= b (or > b). Returns (node, x, y)."""
    u = S[ROOT]
    m = identity()
    best = NIL
    bx = 0.0
    by = 0.0
    while u != NIL:
        m = compose(m, get_map(F, u))
        v = m[4 + axis]
        if v > b or (not strict and v == b):
            best = u
            bx = m[4]
            by = m[5]
            u = G[u, LEFT]
        else:
            u = G[u, RIGHT]
    return best, bx, by


@njit(cache=True)
def extreme(F, G, S, rightmost):
    u = S[ROOT]
    m = identity()
    while u != NIL:
        m = compose(m, get_map(F, u))
        nxt = G[u, RIGHT] if rightmost else G[u, LEFT]
        if nxt == NIL:
            break
        u = nxt
    return m[4], m[5]


@njit(cache=True)
def evaluate(F, G, S, P, a):
    if S[COUNT] == 0:
        if P[MU_MINUS] == 0.0 and P[MU_PLUS] == 0.0:
            return 0.0
        return math.nan
    p, px, py = pred(F, G, S, 0, a, False)
    if p != NIL and px == a:
        return py
    s, sx, sy = succ(F, G, S, 0, a, True)
    if p == NIL:
        return sy + P[MU_MINUS] * (a - sx)
    if s == NIL:
        return py + P[MU_PLUS] * (a - px)
    return py + (a - px) * (sy - py) / (sx - px)


@njit(cache=True)
def evaluate_inverse(F, G, S, P, y):
    """Leftmost x with F(x) = y; NaN when no preimage exists."""
    if S[COUNT] == 0:
        return math.nan
    s, sx, sy = succ(F, G, S, 1, y, False)
    if s != NIL and sy == y:
        return sx
    p, px, py = pred(F, G, S, 1, y, True)
    if p == NIL:
        if P[MU_MINUS] <= 0.0:
            return math.nan
        return sx - (sy - y) / P[MU_MINUS]
    if s == NIL:
        if P[MU_PLUS] <= 0.0:
            return math.nan
        return px + (y - py) / P[MU_PLUS]
    return px + (y - py) * (sx - px) / (sy - py)


@njit(cache=True)
def left_energy(P, x):
    return (P[C1] * x + P[C2]) * x + P[C3]


@njit(cache=True)
def integrate(F, A, G, S, P, a):
    """E(b1) + integral of F from the first breakpoint b1 to a."""
    if S[COUNT] == 0:
        return left_energy(P, a)
    b1, y1 = extreme(F, G, S, False)
    if a < b1:
        fa = y1 + P[MU_MINUS] * (a - b1)
        return left_energy(P, b1) + 0.5 * (a - b1) * (fa + y1)
    u = S[ROOT]
    outer = identity()
    acc = summary_point(0.0, 0.0)
    have = False
    has_succ = False
    sx = 0.0
    sy = 0.0
    while u != NIL:
        mu = compose(outer, get_map(F, u))
        px = mu[4]
        py = mu[5]
        if px <= a:
            left = G[u, LEFT]
            if left != NIL:
                part = summary_transform(get_summary(A, left), compose(mu, get_map(F, left)))
                acc = summary_concat(acc, part) if have else part
                have = True
            pt = summary_point(px, py)
            acc = summary_concat(acc, pt) if have else pt
            have = True
            u = G[u, RIGHT]
        else:
            has_succ = True
            sx = px
            sy = py
            u = G[u, LEFT]
        outer = mu
    lx = acc[3]
    ly = acc[4]
    if a > lx:
        if has_succ:
            fa = ly + (a - lx) * (sy - ly) / (sx - lx)
        else:
            fa = ly + P[MU_PLUS] * (a - lx)
        acc = summary_concat(acc, summary_point(a, fa))
    return left_energy(P, acc[1]) + acc[0] + acc[2] * (a - acc[1])


@njit(cache=True)
def extract(F, G, S):
    n = S[COUNT]
    xs = np.empty(n)
    ys = np.empty(n)
    if n == 0:
        return xs, ys
    nodes = np.empty(128, dtype=np.int64)
    frames = np.empty((128, 6))
    depth = 0
    k = 0
    u = S[ROOT]
    outer = identity()
    while depth > 0 or u != NIL:
        while u != NIL:
            m = compose(outer, get_map(F, u))
            nodes[depth] = u
            for j in range(6):
                frames[depth, j] = m[j]
            depth += 1
            outer = m
            u = G[u, LEFT]
        depth -= 1
        u = nodes[depth]
        m = (frames[depth, 0], frames[depth, 1], frames[depth, 2],
             frames[depth, 3], frames[depth, 4], frames[depth, 5])
        xs[k] = m[4]
        ys[k] = m[5]
        k += 1
        outer = m
        u = G[u, RIGHT]
    return xs, ys


# --------------------------------------------------------- bulk affine edits

@njit(cache=True)
def _conj_apply(F, z, outer, psi):
    """Apply psi (actual frame) to the whole subtree of z; outer = frame above z."""
    local = compose(inverse(outer), compose(psi, outer))
    set_map(F, z, compose(local, get_map(F, z)))


@njit(cache=True)
def affine_all(F, G, S, psi):
    root = S[ROOT]
    if root != NIL:
        set_map(F, root, compose(psi, get_map(F, root)))


@njit(cache=True)
def _prefix_apply(F, G, u, outer, b, r, psi, psi_inv):
    """Apply psi to ranks < r inside the subtree u whose first rank is b.

    Whenever a node and its left subtree are in range the whole subtree is
    transformed and the right child immediately transformed back, so only
    nodes on one root path are written. Returns the deepest node visited.
    """
    last = NIL
    while u != NIL and r > b:
        last = u
        ku = b + _size(G, G[u, LEFT])
        if b + G[u, SIZE] <= r:
            _conj_apply(F, u, outer, psi)
            break
        if ku < r:
            _conj_apply(F, u, outer, psi)
            mu = compose(outer, get_map(F, u))
            right = G[u, RIGHT]
            _conj_apply(F, right, mu, psi_inv)
            outer = mu
            b = ku + 1
            u = right
        else:
            outer = compose(outer, get_map(F, u))
            u = G[u, LEFT]
    return last


@njit(cache=True)
def _suffix_apply(F, G, u, outer, b, r, psi, psi_inv):
    """Apply psi to ranks >= r inside the subtree u whose first rank is b."""
    last = NIL
    while u != NIL and b + G[u, SIZE] > r:
        last = u
        if b >= r:
            _conj_apply(F, u, outer, psi)
            break
        ku = b + _size(G, G[u, LEFT])
        if ku >= r:
            _conj_apply(F, u, outer, psi)
            mu = compose(outer, get_map(F, u))
            left = G[u, LEFT]
            _conj_apply(F, left, mu, psi_inv)
            outer = mu
            u = left
        else:
            outer = compose(outer, get_map(F, u))
            b = ku + 1
            u = G[u, RIGHT]
    return last


@njit(cache=True)
def interval_rank(F, A, G, S, lo, hi, psi):
    """Apply psi to the vertices with in-order rank in [lo, hi].

    Only nodes on the two boundary paths are written and no rotation is
    performed, so the tree shape is left untouched.
    """
    n = S[COUNT]
    if lo < 0:
        lo = 0
    if hi > n - 1:
        hi = n - 1
    if lo > hi:
        return
    if lo == 0 and hi == n - 1:
        affine_all(F, G, S, psi)
        return
    psi_inv = inverse(psi)
    root = S[ROOT]
    if lo == 0:
        last = _prefix_apply(F, G, root, identity(), 0, hi + 1, psi, psi_inv)
        if S[AUG]:
            pull_to_root(F, A, G, S, last)
        return
    if hi == n - 1:
        last = _suffix_apply(F, G, root, identity(), 0, lo, psi, psi_inv)
        if S[AUG]:
            pull_to_root(F, A, G, S, last)
        return
    z = root
    outer = identity()
    base = 0
    while True:
        k = base + _size(G, G[z, LEFT])
        if hi < k:
            outer = compose(outer, get_map(F, z))
            z = G[z, LEFT]
        elif lo > k:
            outer = compose(outer, get_map(F, z))
            base = k + 1
            z = G[z, RIGHT]
        else:
            break
    _conj_apply(F, z, outer, psi)
    mz = compose(outer, get_map(F, z))
    # undo psi on the parts of z's subtree outside [lo, hi]
    last_l = _prefix_apply(F, G, G[z, LEFT], mz, base, lo, psi_inv, psi)
    last_r = _suffix_apply(F, G, G[z, RIGHT], mz, k + 1, hi + 1, psi_inv, psi)
    if S[AUG]:
        if last_l != NIL:
            pull_to_root(F, A, G, S, last_l)
        if last_r != NIL:
            pull_to_root(F, A, G, S, last_r)
        pull_to_root(F, A, G, S, z)


# ------------------------------------------------------- energy bookkeeping

@njit(cache=True)
def shift_energy(P, d):
    """Re-express the left energy quadratic Q(x) as Q(x - d)."""
    c1 = P[C1]
    c2 = P[C2]
    c3 = P[C3]
    P[C2] = c2 - 2.0 * c1 * d
    P[C3] = (c1 * d - c2) * d + c3


@njit(cache=True)
def shear(F, G, S, P, t, lam):
    """F(x) += 2 lam (x - t) and E(x) += lam (x - t)^2."""
    affine_all(F, G, S, (1.0, 0.0, 2.0 * lam, 1.0, 0.0, -2.0 * lam * t))
    P[MU_MINUS] += 2.0 * lam
    P[MU_PLUS] += 2.0 * lam
    P[C1] += lam
    P[C2] -= 2.0 * lam * t
    P[C3] += lam * t * t


@njit(cache=True)
def unshear(F, G, S, t, lam):
    affine_all(F, G, S, (1.0, 0.0, -2.0 * lam, 1.0, 0.0, 2.0 * lam * t))


@njit(cache=True)
def zero_split(F, G, S, P):
    """Leftmost zero s of F and the number r of vertices left of it.

    One descent on the y order; r counts the vertices with F < 0. Returns
    (nan, 0) when F has no zero.
    """
    u = S[ROOT]
    m = identity()
    r = 0
    has_p = False
    has_s = False
    px = py = sx = sy = 0.0
    while u != NIL:
        m = compose(m, get_map(F, u))
        if m[5] < 0.0:
            has_p = True
            px = m[4]
            py = m[5]
            r += _size(G, G[u, LEFT]) + 1
            u = G[u, RIGHT]
        else:
            has_s = True
            sx = m[4]
            sy = m[5]
            u = G[u, LEFT]
    if has_s and sy == 0.0:
        return sx, r
    if not has_p:
        if not has_s or P[MU_MINUS] <= 0.0:
            return math.nan, 0
        return min(sx - sy / P[MU_MINUS], sx), r
    if not has_s:
        if P[MU_PLUS] <= 0.0:
            # a flat right tail is exactly zero up to roundoff in the sums
            if py >= -ZERO_TOL:
                return px, r - 1
            return math.nan, 0
        return max(px - py / P[MU_PLUS], px), r
    s = px - py * (sx - px) / (sy - py)
    return min(max(s, px), sx), r


@njit(cache=True)
def plateau(F, A, G, S, P, s, v, r, gamma, delta, out_x, out_y):
    """Open the flat window [s + delta, s + gamma] at height v.

    ``r`` is the number of vertices left of s. Those move right by delta,
    the others by gamma, and two vertices at height v join the parts. With
    gamma infinite the right part is dropped instead (written to out_x,
    out_y from right to left) and the right slope becomes 0.
    Returns (rank of the left window vertex, number of dropped vertices).
    """
    ndel = 0
    if gamma == delta:
        insert_rank(F, A, G, S, r, s, v)
        affine_all(F, G, S, translation(gamma, 0.0))
    elif math.isinf(gamma):
        while S[COUNT] > r:
            x, y = delete_rank(F, A, G, S, S[COUNT] - 1)
            out_x[ndel] = x
            out_y[ndel] = y
            ndel += 1
        P[MU_PLUS] = 0.0
        insert_rank(F, A, G, S, r, s, v)
        if delta != 0.0:
            affine_all(F, G, S, translation(delta, 0.0))
    else:
        affine_all(F, G, S, translation(gamma, 0.0))
        if r > 0:
            interval_rank(F, A, G, S, 0, r - 1, translation(delta - gamma, 0.0))
        insert_rank(F, A, G, S, r, s + gamma, v)
        insert_rank(F, A, G, S, r, s + delta, v)
    if delta != 0.0:
        shift_energy(P, delta)
    return r, ndel


@njit(cache=True)
def unplateau(F, A, G, S, P, r, gamma, delta, del_x, del_y, ndel):
    """Inverse of :func:`plateau` except for P, which the caller restores."""
    if gamma == delta:
        affine_all(F, G, S, translation(-gamma, 0.0))
        delete_rank(F, A, G, S, r)
    elif math.isinf(gamma):
        if delta != 0.0:
            affine_all(F, G, S, translation(-delta, 0.0))
        delete_rank(F, A, G, S, r)
        for k in range(ndel - 1, -1, -1):
            insert_rank(F, A, G, S, S[COUNT], del_x[k], del_y[k])
    else:
        delete_rank(F, A, G, S, r)
        delete_rank(F, A, G, S, r)
        if r > 0:
            interval_rank(F, A, G, S, 0, r - 1, translation(gamma - delta, 0.0))
        affine_all(F, G, S, translation(-gamma, 0.0))


@njit(cache=True)
def update(F, A, G, S, P, t, lam, gamma, delta, out_x, out_y):
    """One path step: add the vertex term, find the zero, open the window.

    An empty tree stands for the zero function. Returns (s*, rank, ndel).
    """
    shear(F, G, S, P, t, lam)
    s = t
    r = 0
    if S[COUNT] != 0:
        s, r = zero_split(F, G, S, P)
    r, ndel = plateau(F, A, G, S, P, s, 0.0, r, gamma, delta, out_x, out_y)
    return s, r, ndel


# ------------------------------------------------------------ path sweep

@njit(cache=True)
def lir_sweep(t, lam, gamma, delta):
    """Forward sweep of the directed path problem followed by the clamp pass.

    Returns (s, stars, total rotations, most rotations in one update).
    """
    n = t.shape[0]
    F, A, G = new_pool(2 * n + 8, False)
    S, P = new_meta(False)
    out_x = np.empty(2 * n + 8)
    out_y = np.empty(2 * n + 8)
    stars = np.empty(n)
    max_rot = 0
    for i in range(n):
        g = gamma[i] if i < n - 1 else math.inf
        d = delta[i] if i < n - 1 else 0.0
        before = S[ROTATIONS]
        if i == n - 1:
            # the last vertex only needs its zero
            shear(F, G, S, P, t[i], lam[i])
            stars[i] = t[i] if S[COUNT] == 0 else evaluate_inverse(F, G, S, P, 0.0)
        else:
            s, r, nd = update(F, A, G, S, P, t[i], lam[i], g, d, out_x, out_y)
            stars[i] = s
        rot = S[ROTATIONS] - before
        if rot > max_rot:
            max_rot = rot
    s = np.empty(n)
    s[n - 1] = stars[n - 1]
    for i in range(n - 2, -1, -1):
        s[i] = min(max(stars[i], s[i + 1] - gamma[i]), s[i + 1] - delta[i])
    return s, stars, S[ROTATIONS], max_rot


# --------------------------------------------------------------- merging

@njit(cache=True)
def merge_add(F, A, G, S, P, gx, gy, gmu_minus, gmu_plus, sign, tol):
    """F += sign * G for an explicit piecewise-linear G.

    Adding inserts G's breakpoints first; subtracting removes the copies
    afterwards (matched within tol).
    """
    m = gx.shape[0]
    if m == 0:
        # G is linear without an anchor only when it is identically zero
        return m
    if sign > 0:
        if S[COUNT] == 0:
            for j in range(m):
                insert(F, A, G, S, gx[j], gy[j])
            P[MU_MINUS] += gmu_minus
            P[MU_PLUS] += gmu_plus
            return m
        for j in range(m):
            insert(F, A, G, S, gx[j], evaluate(F, G, S, P, gx[j]))
    n = S[COUNT]
    prev = 0
    for j in range(m + 1):
        if j < m:
            nxt = rank_below(F, G, S, 0, gx[j], True)
        else:
            nxt = n
        if j == 0:
            alpha = gmu_minus
            beta = gy[0] - alpha * gx[0]
        elif j == m:
            alpha = gmu_plus
            beta = gy[m - 1] - alpha * gx[m - 1]
        else:
            alpha = (gy[j] - gy[j - 1]) / (gx[j] - gx[j - 1])
            beta = gy[j - 1] - alpha * gx[j - 1]
        if nxt > prev:
            interval_rank(F, A, G, S, prev, nxt - 1,
                          (1.0, 0.0, sign * alpha, 1.0, 0.0, sign * beta))
        prev = nxt
    P[MU_MINUS] += sign * gmu_minus
    P[MU_PLUS] += sign * gmu_plus
    if sign < 0:
        for j in range(m):
            b = gx[j]
            p, px, _ = pred(F, G, S, 0, b, False)
            s, sx, _ = succ(F, G, S, 0, b, False)
            best = p
            if p == NIL or (s != NIL and sx - b < b - px):
                best = s
                px = sx
            if best == NIL or abs(px - b) > tol * max(1.0, abs(b)):
                return j
            delete_node(F, A, G, S, best)
    return m


# ------------------------------------------------------------- tree sweep

@njit(cache=True)
def dedupe(xs, ys):
    """Drop vertices whose x does not increase; flatten y roundoff dips."""
    n = xs.shape[0]
    gx = np.empty(n)
    gy = np.empty(n)
    m = 0
    for j in range(n):
        if m == 0 or xs[j] > gx[m - 1]:
            gx[m] = xs[j]
            gy[m] = ys[j] if m == 0 else max(ys[j], gy[m - 1])
            m += 1
    return gx[:m], gy[:m]


@njit(cache=True)
def tree_sweep(post, heavy, light, t, lam, gamma, delta):
    """Rooted-tree sweep with smaller-into-larger merging.

    ``post`` lists the vertices children first; the last one is the root.
    Every vertex has at most two children, ``heavy`` and ``light``. All
    trees share one node pool. Returns (s, stars, merged breakpoints,
    rotations).
    """
    n = post.shape[0]
    cap = 4 * n + 16
    F, A, G = new_pool(cap, False)
    metas = np.zeros((n, N_META), dtype=np.int64)
    params = np.zeros((n, N_PARAM))
    owner = np.full(n, -1, dtype=np.int64)  # row holding the vertex's tree
    out_x = np.empty(cap)
    out_y = np.empty(cap)
    stars = np.empty(n)
    merged = 0
    rotations = 0
    root = post[n - 1]
    for i in range(n):
        v = post[i]
        h = heavy[v]
        if h == NIL:
            row = v
            metas[row, ROOT] = NIL
            metas[row, COUNT] = 0
            metas[row, ROTATIONS] = 0
            metas[row, AUG] = 0
        else:
            row = owner[h]
        S = metas[row]
        P = params[row]
        l = light[v]
        if l != NIL:
            lrow = owner[l]
            LS = metas[lrow]
            LP = params[lrow]
            xs, ys = extract(F, G, LS)
            gx, gy = dedupe(xs, ys)
            merge_add(F, A, G, S, P, gx, gy, LP[MU_MINUS], LP[MU_PLUS], 1.0, 1e-9)
            P[C1] += LP[C1]
            P[C2] += LP[C2]
            P[C3] += LP[C3]
            merged += gx.shape[0]
            rotations += LS[ROTATIONS]
            clear(G, LS)
        if v == root:
            shear(F, G, S, P, t[v], lam[v])
            stars[v] = t[v] if S[COUNT] == 0 else evaluate_inverse(F, G, S, P, 0.0)
        else:
            s, r, nd = update(F, A, G, S, P, t[v], lam[v], gamma[v], delta[v], out_x, out_y)
            stars[v] = s
        owner[v] = row
    rotations += metas[owner[root], ROTATIONS]
    s = np.empty(n)
    s[root] = stars[root]
    for i in range(n - 1, -1, -1):
        v = post[i]
        for c in (heavy[v], light[v]):
            if c != NIL:
                s[c] = min(max(stars[c], s[v] - gamma[c]), s[v] - delta[c])
    return s, stars, merged, rotations


# ------------------------------------------------------------------ audits

@njit(cache=True)
def audit(F, A, G, S):
    """Return (max augmentation error, worst AVL imbalance, bad-link count)."""
    worst = 0.0
    imbalance = 0
    bad = 0
    n = S[COUNT]
    if S[ROOT] == NIL:
        return worst, imbalance, (0 if n == 0 else 1)
    stack = np.empty(256, dtype=np.int64)
    order = np.empty(n + 1, dtype=np.int64)
    top = 0
    k = 0
    stack[0] = S[ROOT]
    top = 1
    while top > 0:
        top -= 1
        u = stack[top]
        if k >= n:
            bad += 1
            break
        order[k] = u
        k += 1
        for c in (G[u, LEFT], G[u, RIGHT]):
            if c != NIL:
                if G[c, PARENT] != u:
                    bad += 1
                stack[top] = c
                top += 1
    if k != n:
        bad += 1
    # children before parents
    for i in range(k - 1, -1, -1):
        u = order[i]
        left = G[u, LEFT]
        right = G[u, RIGHT]
        hl = _height(G, left)
        hr = _height(G, right)
        if G[u, HEIGHT] != 1 + max(hl, hr) or G[u, SIZE] != 1 + _size(G, left) + _size(G, right):
            bad += 1
        if abs(hl - hr) > imbalance:
            imbalance = abs(hl - hr)
        if S[AUG]:
            s = summary_point(0.0, 0.0)
            if left != NIL:
                s = summary_concat(summary_transform(get_summary(A, left), get_map(F, left)), s)
            if right != NIL:
                s = summary_concat(s, summary_transform(get_summary(A, right), get_map(F, right)))
            for j in range(5):
                err = abs(s[j] - A[u, j]) / max(1.0, abs(s[j]))
                if err > worst:
                    worst = err
    return worst, imbalance, bad
