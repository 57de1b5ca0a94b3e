"""Command-line front end: file formats, generators, verification and benchmarks.

Exit codes: 0 on success, 2 for bad input, 3 when verification fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import statistics
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .instance import PathInstance, RegressionResult, TreeInstance
from .regress_path import final_derivative, lir_path, lur_path
from .regress_tree import lir_tree, lur_tree, root_derivative

EXIT_OK, EXIT_INPUT, EXIT_VERIFY = 0, 2, 3
S_TOL, E_TOL = 1e-6, 1e-8

MODES = ("lir-path", "lur-path", "lir-tree", "lur-tree", "verify", "bench", "gen")
KINDS = ("path", "balanced-tree", "random-tree", "terrain-ridge")


class InputError(ValueError):
    """Malformed input; reported with exit code 2."""


def _num(text: str, line: int, what: str) -> float:
    try:
        return float(text)  # float() already accepts "inf"
    except ValueError:
        raise InputError(f"line {line}: {what} is not a number: {text!r}") from None


def _rows(text: str):
    """(line number, fields) for every non-blank, non-comment line."""
    for k, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        fields = [f.strip() for f in row]
        if not fields or all(f == "" for f in fields) or fields[0].startswith("#"):
            continue
        yield k, fields


def _header(rows, names):
    """Split off a header line whose first field is not numeric."""
    if rows and rows[0][1][0].lower() in names:
        return [f.lower() for f in rows[0][1]], rows[1:]
    return None, rows


# ------------------------------------------------------------------ parsing

@dataclass
class Parsed:
    instance: object
    ids: list = field(default_factory=list)  # output order, as written in the file
    order: np.ndarray = None  # instance vertex of each output id


def parse_path_csv(text: str, gamma: float = math.inf, delta: float = 0.0) -> Parsed:
    """``index,t[,weight]`` with a header, or a single column of heights."""
    rows = list(_rows(text))
    header, rows = _header(rows, ("index", "t"))
    if not rows:
        raise InputError("no data rows")
    if (header is None and len(rows[0][1]) == 1) or header == ["t"]:
        t = [_num(f[0], k, "t") for k, f in rows]
        ids = [str(i) for i in range(len(t))]
        try:
            return Parsed(PathInstance(t, None, gamma, delta), ids, np.arange(len(t)))
        except ValueError as exc:
            raise InputError(str(exc)) from None
    cols = header or ["index", "t", "weight"][:len(rows[0][1])]
    if "t" not in cols or (len(cols) > 1 and "index" not in cols):
        raise InputError("path header must be index,t[,weight]")
    ci, ct = cols.index("index"), cols.index("t")
    cw = cols.index("weight") if "weight" in cols else None
    seen = {}
    t, w, ids = [], [], []
    for k, f in rows:
        if len(f) != len(cols):
            raise InputError(f"line {k}: expected {len(cols)} fields, got {len(f)}")
        idx = _num(f[ci], k, "index")
        if idx != int(idx):
            raise InputError(f"line {k}: index is not an integer: {f[ci]!r}")
        idx = int(idx)
        if idx in seen:
            raise InputError(f"line {k}: duplicate index {idx} (first on line {seen[idx]})")
        seen[idx] = k
        ids.append(f[ci])
        t.append(_num(f[ct], k, "t"))
        w.append(_num(f[cw], k, "weight") if cw is not None else 1.0)
    keys = np.array([int(float(i)) for i in ids])
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    gaps = np.flatnonzero(np.diff(sk) != 1)
    if gaps.size:
        missing = int(sk[gaps[0]]) + 1
        raise InputError(f"line {seen[int(sk[gaps[0] + 1])]}: gap in indices, {missing} is missing")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    try:
        inst = PathInstance(np.asarray(t)[order], np.asarray(w)[order], gamma, delta)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return Parsed(inst, ids, rank)


def _tree_rows(text: str, gamma: float, delta: float):
    rows = list(_rows(text))
    header, rows = _header(rows, ("id",))
    if header is None:
        raise InputError("tree files need a header id,parent,t[,weight[,gamma,delta]]")
    for need in ("id", "parent", "t"):
        if need not in header:
            raise InputError(f"tree header lacks column {need!r}")
    col = {name: j for j, name in enumerate(header)}
    ids, parents, t, w, g, d, lines = [], [], [], [], [], [], []
    where = {}
    for k, f in rows:
        if len(f) != len(header):
            raise InputError(f"line {k}: expected {len(header)} fields, got {len(f)}")
        vid = f[col["id"]]
        if vid in where:
            raise InputError(f"line {k}: duplicate id {vid!r}")
        where[vid] = len(ids)
        ids.append(vid)
        lines.append(k)
        parents.append(f[col["parent"]])
        t.append(_num(f[col["t"]], k, "t"))

        def opt(name, default):
            if name in col and f[col[name]] != "":
                return _num(f[col[name]], k, name)
            return default

        w.append(opt("weight", 1.0))
        g.append(opt("gamma", gamma))
        d.append(opt("delta", delta))
    par = np.full(len(ids), -1, dtype=np.int64)
    for j, p in enumerate(parents):
        if p in ("", "-1"):
            continue
        if p not in where:
            raise InputError(f"line {lines[j]}: vertex {ids[j]!r} has unknown parent {p!r}")
        par[j] = where[p]
    return ids, par, np.asarray(t), np.asarray(w), np.asarray(g), np.asarray(d)


def parse_tree_csv(text: str, gamma: float = math.inf, delta: float = 0.0,
                   undirected: bool = False) -> Parsed:
    """``id,parent,t[,weight[,gamma,delta]]``; empty cells take the defaults.

    An empty parent or -1 marks the root. With ``undirected`` the parent
    column only lists edges and any single vertex may lack a parent.
    """
    ids, par, t, w, g, d = _tree_rows(text, gamma, delta)
    n = len(ids)
    if undirected:
        par, g, d = _orient(ids, par, g, d)
    roots = np.flatnonzero(par < 0)
    if roots.size > 1:
        raise InputError(f"forest: vertices {ids[roots[0]]!r} and {ids[roots[1]]!r} both lack a parent")
    if roots.size == 0:
        raise InputError(f"cycle through vertex {ids[_on_cycle(par)]!r}")
    reach = np.zeros(n, dtype=bool)
    reach[roots[0]] = True
    kids = [[] for _ in range(n)]
    for v in range(n):
        if par[v] >= 0:
            kids[par[v]].append(v)
    stack = [int(roots[0])]
    while stack:
        for c in kids[stack.pop()]:
            reach[c] = True
            stack.append(c)
    if not reach.all():
        raise InputError(f"cycle through vertex {ids[_on_cycle(par, np.flatnonzero(~reach)[0])]!r}")
    try:
        inst = TreeInstance(t, par, w, g, d)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return Parsed(inst, ids, np.arange(n))


def _on_cycle(par, start=0) -> int:
    """A vertex on the cycle reached by following parents from ``start``."""
    seen = set()
    v = int(start)
    while v not in seen:
        seen.add(v)
        v = int(par[v])
        if v < 0:
            return int(start)
    return v


def _orient(ids, par, g, d):
    """Re-point parents toward one vertex, treating rows as undirected edges."""
    n = len(ids)
    adj = [[] for _ in range(n)]
    edges = 0
    for v in range(n):
        if par[v] >= 0:
            adj[v].append((int(par[v]), v))
            adj[par[v]].append((v, v))
            edges += 1
    if edges != n - 1:
        if edges > n - 1:
            raise InputError("cycle: more edges than a tree allows")
        raise InputError("forest: the edges do not connect all vertices")
    new_par = np.full(n, -1, dtype=np.int64)
    new_g, new_d = np.full(n, math.inf), np.zeros(n)
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        v = stack.pop()
        for u, e in adj[v]:
            if seen[u]:
                continue
            seen[u] = True
            new_par[u], new_g[u], new_d[u] = v, g[e], d[e]
            stack.append(u)
    if not seen.all():
        bad = int(np.flatnonzero(~seen)[0])
        raise InputError(f"cycle through vertex {ids[bad]!r}")
    return new_par, new_g, new_d


# ------------------------------------------------------------------ emitting

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def emit_result(res: RegressionResult, ids=None, fmt: str = "csv", stats: bool = False,
                pwl=None) -> str:
    """CSV ``id,s`` plus ``# key=value`` footers, or the same fields as JSON."""
    n = res.s.size
    ids = [str(i) for i in range(n)] if ids is None else list(ids)
    order = list(range(n))
    extra = {}
    if stats:
        extra = {k: v for k, v in res.stats.items() if np.isscalar(v)}
    if fmt == "json":
        out = {"id": ids, "s": [float(x) for x in res.s], "energy": float(res.energy)}
        if res.root is not None:
            out["root"] = ids[res.root]
        if stats:
            out["stats"] = {k: (int(v) if isinstance(v, (int, np.integer)) else float(v))
                            for k, v in extra.items()}
        if pwl is not None:
            out["pwl"] = pwl.to_dict()
        return json.dumps(out) + "\n"
    lines = [f"{ids[i]},{_fmt(res.s[i])}" for i in order]
    lines.append(f"# energy={_fmt(res.energy)}")
    if res.root is not None:
        lines.append(f"# root={ids[res.root]}")
    for k, v in extra.items():
        lines.append(f"# {k}={v if isinstance(v, (int, np.integer)) else _fmt(v)}")
    if pwl is not None:
        lines.append(f"# pwl={pwl.to_json()}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- generators

def generate(kind: str, n: int, seed: int = 0) -> str:
    """Instance file text; the same (kind, n, seed) always gives the same bytes."""
    if n < 1:
        raise InputError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if kind in ("path", "terrain-ridge"):
        if kind == "path":
            t = np.cumsum(rng.normal(0.0, 1.0, n))
        else:
            i = np.arange(n)
            top = int(rng.integers(n))
            t = 100.0 - 0.5 * np.abs(i - top) + rng.normal(0.0, 2.0, n)
        return "index,t\n" + "".join(f"{i},{_fmt(x)}\n" for i, x in enumerate(t))
    if kind == "balanced-tree":
        parent = [(i - 1) // 2 for i in range(n)]
    elif kind == "random-tree":
        parent = [int(rng.integers(i)) if i else -1 for i in range(n)]
    else:
        raise InputError(f"unknown kind {kind!r}")
    parent[0] = -1
    t = rng.normal(0.0, 3.0, n)
    rows = "".join(f"{i},{'' if p < 0 else p},{_fmt(x)}\n" for i, (p, x) in enumerate(zip(parent, t)))
    return "id,parent,t\n" + rows


# -------------------------------------------------------------------- solving

SOLVERS = {"lir-path": lir_path, "lur-path": lur_path, "lir-tree": lir_tree, "lur-tree": lur_tree}


def load(mode: str, text: str, gamma: float, delta: float) -> Parsed:
    if mode.endswith("path"):
        return parse_path_csv(text, gamma, delta)
    return parse_tree_csv(text, gamma, delta, undirected=(mode == "lur-tree"))


def solve(mode: str, parsed: Parsed) -> RegressionResult:
    res = SOLVERS[mode](parsed.instance)
    # back to file order
    res.s, res.stars = res.s[parsed.order], res.stars[parsed.order]
    if res.root is not None:
        res.root = int(np.flatnonzero(parsed.order == res.root)[0])
    return res


def dump_pwl(mode: str, inst, res: RegressionResult):
    """Derivative of the optimal energy at the final (or peak) vertex."""
    if mode == "lir-path":
        return final_derivative(inst)
    tree = inst.as_tree() if isinstance(inst, PathInstance) else inst
    if mode == "lir-tree":
        return root_derivative(tree)
    return root_derivative(tree.rerooted(res.root))


# --------------------------------------------------------------- verification

ORACLES = {
    "lir-path": oracle.dp_lir_path,
    "lur-path": oracle.brute_lur,
    "lir-tree": oracle.dp_lir_tree,
    "lur-tree": oracle.brute_lur,
}


def verify_instance(inst) -> list:
    """Compare every applicable fast solver with its oracle.

    Returns rows (solver, status, max |ds|, |d energy|); status is "pass",
    "fail" or "oracle skipped".
    """
    modes = ("lir-path", "lur-path") if isinstance(inst, PathInstance) else ("lir-tree", "lur-tree")
    rows = []
    for mode in modes:
        fast = SOLVERS[mode](inst)
        try:
            ref = ORACLES[mode](inst)
        except ValueError as exc:
            if "guard" not in str(exc):
                raise
            rows.append((mode, "oracle skipped", math.nan, math.nan))
            continue
        ds = float(np.max(np.abs(fast.s - ref.s)))
        de = abs(fast.energy - ref.energy)
        ok = ds <= S_TOL and de <= E_TOL * max(1.0, abs(ref.energy)) and fast.root == ref.root
        rows.append((mode, "pass" if ok else "fail", ds, de))
    if isinstance(inst, PathInstance) and np.all(np.isinf(inst.gamma)) and np.all(inst.delta == 0):
        ds = float(np.max(np.abs(SOLVERS["lir-path"](inst).s - oracle.pava(inst.t, inst.lam))))
        rows.append(("pava", "pass" if ds <= S_TOL else "fail", ds, math.nan))
    return rows


# ----------------------------------------------------------------- benchmarks

BENCH_RANGES = {
    "lir-path": (10, 20),
    "lir-tree": (10, 18),
    "lur-path": (10, 14),
    "lur-tree": (8, 12),
}


def _bench_instance(mode: str, n: int, rng):
    t = rng.normal(0.0, 1.0, n)
    if mode.endswith("path"):
        return PathInstance(np.cumsum(t), None, 0.5, -0.1)
    open_slots = [0, 0]
    parent = np.full(n, -1)
    for v in range(1, n):  # random binary tree
        j = int(rng.integers(len(open_slots)))
        parent[v] = open_slots[j]
        open_slots[j] = open_slots[-1]
        open_slots.pop()
        open_slots += [v, v]
    return TreeInstance(t, parent, None, 0.5, -0.1)


ROTATION_C = 40


def rotation_violations(rows) -> list:
    """Rows whose worst single update rotated more than ROTATION_C log2 n times."""
    return [r for r in rows if r[6] != "" and r[6] > ROTATION_C * math.log2(r[1])]


def bench(modes, max_exp=None, seed: int = 0, repeats: int = 5, out=sys.stdout) -> list:
    """Median-of-``repeats`` timings; writes CSV rows and returns them."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["mode", "n", "ms", "ratio", "rotations", "merged_breakpoints",
                "max_rotations_per_update"])
    rows = []
    for mode in modes:
        lo, hi = BENCH_RANGES[mode]
        if max_exp is not None:
            hi = max_exp
        prev = None
        solver = SOLVERS[mode]
        solver(_bench_instance(mode, 64, np.random.default_rng(seed)))  # compile
        for e in range(lo, hi + 1):
            n = 2 ** e
            inst = _bench_instance(mode, n, np.random.default_rng(seed + e))
            times = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                res = solver(inst)
                times.append(time.perf_counter() - t0)
            ms = 1000.0 * statistics.median(times)
            ratio = ms / prev if prev else math.nan
            prev = ms
            row = [mode, n, round(ms, 3), round(ratio, 3), res.stats.get("rotations", ""),
                   res.stats.get("merged_breakpoints", ""),
                   res.stats.get("max_rotations_per_update", "")]
            w.writerow(row)
            out.flush()
            rows.append(row)
    return rows


# ------------------------------------------------------------------------ main

def _gamma(text: str) -> float:
    try:
        g = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma must be a number or 'inf', got {text!r}")
    if math.isnan(g) or g == -math.inf:
        raise argparse.ArgumentTypeError("gamma must be a number or 'inf'")
    return g


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lipreg", description="Lipschitz isotonic and unimodal regression")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--gamma", type=_gamma, default=math.inf, help="upper edge bound, a number or 'inf'")
    p.add_argument("--delta", type=float, default=0.0, help="lower edge bound (default 0)")
    p.add_argument("--input", help="input CSV (default: stdin)")
    p.add_argument("--output", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stats", action="store_true", help="append solver counters")
    p.add_argument("--dump-pwl", action="store_true",
                   help="append the energy derivative at the final or peak vertex")
    p.add_argument("--n", type=int, help="size for gen; largest log2 size for bench")
    p.add_argument("--kind", choices=KINDS + tuple(SOLVERS),
                   help="generator kind for gen and verify; solver mode for bench")
    return p


def _read(path):
    if path is None or path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.mode == "gen":
            if args.kind not in KINDS or args.n is None:
                raise InputError("gen needs --kind (path, balanced-tree, random-tree, terrain-ridge) and --n")
            _write(args.output, generate(args.kind, args.n, args.seed))
            return EXIT_OK
        if args.mode == "bench":
            modes = [args.kind] if args.kind in SOLVERS else list(SOLVERS)
            if args.output:
                with open(args.output, "w", encoding="utf-8") as fh:
                    rows = bench(modes, args.n, args.seed, out=fh)
            else:
                rows = bench(modes, args.n, args.seed)
            bad = rotation_violations(rows)
            for row in bad:
                print(f"lipreg: {row[0]} n={row[1]}: {row[6]} rotations in one update exceeds "
                      f"{ROTATION_C} log2 n", file=sys.stderr)
            return EXIT_VERIFY if bad else EXIT_OK
        if args.mode == "verify":
            return _verify(args)
        text = _read(args.input)
        parsed = load(args.mode, text, args.gamma, args.delta)
        res = solve(args.mode, parsed)
        pwl = None
        if args.dump_pwl:
            inst = parsed.instance
            root = None if res.root is None else int(parsed.order[res.root])
            pwl = dump_pwl(args.mode, inst, RegressionResult(res.s, res.energy, res.stars, root))
        _write(args.output, emit_result(res, parsed.ids, args.format, args.stats, pwl))
        return EXIT_OK
    except (InputError, OSError) as exc:
        print(f"lipreg: {exc}", file=sys.stderr)
        return EXIT_INPUT


def _verify(args) -> int:
    if args.input is not None:
        text = _read(args.input)
        is_tree = text.lstrip().lower().startswith("id")
    else:
        kind = args.kind if args.kind in KINDS else "path"
        text = generate(kind, args.n or 100, args.seed)
        is_tree = kind.endswith("tree")
    parsed = (parse_tree_csv(text, args.gamma, args.delta) if is_tree
              else parse_path_csv(text, args.gamma, args.delta))
    rows = verify_instance(parsed.instance)
    lines = ["solver,status,max_ds,d_energy"]
    lines += [f"{m},{st},{_fmt(ds)},{_fmt(de)}" for m, st, ds, de in rows]
    _write(args.output, "\n".join(lines) + "\n")
    return EXIT_VERIFY if any(st == "fail" for _, st, _, _ in rows) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
