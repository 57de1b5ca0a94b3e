"""Terrain carving with slope-limited regression.

Two small scenarios:

* A noisy ridge profile is fitted by a unimodal profile that climbs toward
  its peak by at most 0.8 per sample. The solver picks the peak.
* Heights on a random drainage tree are lowered or raised as little as
  possible so that water flows downhill to the outlet (the root): every
  vertex sits at most 0.5 above its downstream neighbour and never below it.

    python3 scripts/carving_demo.py [--n 400] [--seed 1]
"""

import argparse

import numpy as np

from lipreg.instance import PathInstance, TreeInstance
from lipreg.oracle import feasible
from lipreg.regress_path import lur_path
from lipreg.regress_tree import lir_tree


def ridge(n: int, rng) -> None:
    x = np.arange(n)
    top = int(rng.integers(n // 4, 3 * n // 4))
    t = 50.0 - 0.4 * np.abs(x - top) + rng.normal(0.0, 3.0, n)
    res = lur_path(PathInstance(t, None, 0.8, 0.0))
    d = np.diff(res.s)
    print(f"ridge: n={n}, true top {top}, fitted peak {res.root}")
    print(f"  rms change {np.sqrt(res.energy / n):.3f}, slopes in [{d.min():.3f}, {d.max():.3f}]")
    print(f"  local maxima in data {_maxima(t)}, after carving {_maxima(res.s)}")


def _maxima(s) -> int:
    """Count strict local-maximum plateaus of a sequence."""
    s = np.asarray(s)
    keep = np.concatenate([[True], np.diff(s) != 0])
    s = s[keep]
    if s.size < 2:
        return 1
    up = np.concatenate([[True], s[1:] > s[:-1]])
    down = np.concatenate([s[:-1] > s[1:], [True]])
    return int(np.sum(up & down))


def drainage(n: int, rng) -> None:
    parent = np.array([-1] + [int(rng.integers(0, i)) for i in range(1, n)])
    depth = np.zeros(n)
    for v in range(1, n):
        depth[v] = depth[parent[v]] + 1
    t = 0.3 * depth + rng.normal(0.0, 1.0, n)
    # s(parent) - s(v) in [-0.5, 0]: downstream is lower, by at most 0.5 per edge
    inst = TreeInstance(t, parent, None, 0.0, -0.5)
    res = lir_tree(inst)
    kids = parent >= 0
    uphill = int(np.sum(t[parent[kids]] > t[kids]))
    print(f"drainage: n={n}, edges flowing uphill before {uphill}, after "
          f"{int(np.sum(res.s[parent[kids]] > res.s[kids] + 1e-9))}")
    print(f"  feasible {feasible(inst, res.s)}, total squared change {res.energy:.3f}, "
          f"merged breakpoints {res.stats['merged_breakpoints']}")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    ridge(args.n, rng)
    drainage(args.n, rng)


if __name__ == "__main__":
    main()
