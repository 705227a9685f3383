"""Brute-force noncontextual hidden-variable bounds for the Yu-Oh inequalities.

Two oracles:

* every +/-1 assignment of the 13 observables is scored against the
  pair-weighted inequality, in exact integer arithmetic (values are kept
  multiplied by 4);
* every 0/1 KS coloring of the 13 rays (no two orthogonal rays both 1,
  exactly one 1 per complete orthogonal triple) is enumerated, and the
  largest number of h-rays colored 1 is reported.

The coloring rules are how the assumption that compatible observables keep
their algebraic relations at the hidden-variable level is operationalized
here.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from qutritks.core import H_LABELS, CompatibilityGraph, compatibility

# 4 * value = 4 * sum(a) - QUARTER_PAIR * sum over edges of a_i a_j
QUARTER_PAIR = 2


@dataclass(frozen=True)
class Assignment:
    values: Mapping[str, int]

    def __post_init__(self):
        bad = {k: v for k, v in self.values.items() if v not in (1, -1)}
        if bad:
            raise ValueError(f"assignment values must be +1 or -1, got {bad}")

    def b(self, label: str) -> int:
        return (1 - self.values[label]) // 2


@dataclass(frozen=True)
class KsColoring:
    values: Mapping[str, int]

    def ones(self) -> tuple[str, ...]:
        return tuple(k for k, v in self.values.items() if v == 1)


def classical_value(a: Assignment, g: CompatibilityGraph | None = None) -> Fraction:
    g = compatibility() if g is None else g
    if set(a.values) != set(g.nodes):
        raise ValueError("assignment must cover exactly the graph's nodes")
    quarters = 4 * sum(a.values[k] for k in g.nodes)
    quarters -= QUARTER_PAIR * sum(a.values[i] * a.values[j] for i, j in g.edge_list)
    return Fraction(quarters, 4)


def _all_assignments(n: int, start: int, stop: int) -> np.ndarray:
    """Rows are assignments in lexicographic order over (+1, -1) per node.

    Row k corresponds to the binary expansion of k with node 0 as the most
    significant bit, a 0 bit meaning +1.
    """
    k = np.arange(start, stop, dtype=np.int64)[:, None]
    bits = (k >> np.arange(n - 1, -1, -1)) & 1
    return 1 - 2 * bits


def _score_chunk(args) -> tuple[int, list[int]]:
    n, edges, start, stop = args
    a = _all_assignments(n, start, stop)
    quarters = 4 * a.sum(axis=1)
    if edges:
        i, j = np.array(edges).T
        quarters -= QUARTER_PAIR * (a[:, i] * a[:, j]).sum(axis=1)
    best = int(quarters.max())
    return best, [start + int(r) for r in np.flatnonzero(quarters == best)]


def max_classical_value(
    g: CompatibilityGraph | None = None, workers: int = 1, chunks: int = 8
) -> tuple[Fraction, list[Assignment]]:
    """Exhaustive maximum over all 2**n assignments, with every maximizer.

    The space is cut into ``chunks`` contiguous index ranges; with
    ``workers > 1`` they are scored in separate processes.  Chunks are merged
    in index order, so the argmax list is lexicographic either way.
    """
    g = compatibility() if g is None else g
    n = len(g.nodes)
    pos = {k: i for i, k in enumerate(g.nodes)}
    edges = [(pos[i], pos[j]) for i, j in g.edge_list]
    total = 1 << n
    bounds = np.linspace(0, total, min(chunks, total) + 1).astype(int)
    jobs = [(n, edges, int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_score_chunk, jobs))
    else:
        results = [_score_chunk(job) for job in jobs]

    best = max(r[0] for r in results)
    winners = [idx for r in results if r[0] == best for idx in r[1]]
    argmax = []
    for idx in winners:
        row = _all_assignments(n, idx, idx + 1)[0]
        argmax.append(Assignment({k: int(v) for k, v in zip(g.nodes, row)}))
    return Fraction(best, 4), argmax


def is_ks_coloring(values: Mapping[str, int], g: CompatibilityGraph) -> bool:
    if set(values) != set(g.nodes) or any(v not in (0, 1) for v in values.values()):
        return False
    if any(values[i] and values[j] for i, j in g.edge_list):
        return False
    return all(sum(values[k] for k in t) == 1 for t in g.triple_list)


def enumerate_ks_colorings(g: CompatibilityGraph | None = None) -> list[KsColoring]:
    """All KS colorings, depth-first in canonical node order (0 before 1).

    A branch is cut as soon as an edge has both ends 1, a triple has two 1s,
    or a fully assigned triple has no 1.
    """
    g = compatibility() if g is None else g
    nodes = list(g.nodes)
    pos = {k: i for i, k in enumerate(nodes)}
    neighbours = [[] for _ in nodes]
    for i, j in g.edge_list:
        neighbours[pos[i]].append(pos[j])
        neighbours[pos[j]].append(pos[i])
    triples = [tuple(pos[k] for k in t) for t in g.triple_list]
    # triples become checkable once their last member is assigned
    closing = [[t for t in triples if max(t) == i] for i in range(len(nodes))]

    out: list[KsColoring] = []
    vals = [0] * len(nodes)

    def extend(i: int) -> None:
        if i == len(nodes):
            out.append(KsColoring(dict(zip(nodes, vals))))
            return
        for v in (0, 1):
            if v and any(vals[j] for j in neighbours[i] if j < i):
                continue
            vals[i] = v
            if all(sum(vals[k] for k in t) == 1 for t in closing[i]):
                extend(i + 1)
        vals[i] = 0

    extend(0)
    return out


def h_sum(c: KsColoring) -> int:
    return sum(c.values[h] for h in H_LABELS)


def max_h_sum(colorings: list[KsColoring]) -> int:
    if not colorings:
        raise ValueError("no colorings to maximize over")
    return max(h_sum(c) for c in colorings)


def oracle_summary(g: CompatibilityGraph | None = None, workers: int = 1) -> dict:
    """Everything the ``oracle`` CLI subcommand reports, JSON-ready."""
    g = compatibility() if g is None else g
    best, argmax = max_classical_value(g, workers=workers)
    colorings = enumerate_ks_colorings(g)
    hs = [h_sum(c) for c in colorings]
    return {
        "classical_max": str(best),
        "classical_max_float": float(best),
        "n_assignments": 1 << len(g.nodes),
        "n_maximizers": len(argmax),
        "maximizers": [dict(a.values) for a in argmax],
        "n_ks_colorings": len(colorings),
        "max_h_sum": max(hs),
        "min_h_sum": min(hs),
        "ks_colorings": [list(c.ones()) for c in colorings],
    }


def all_assignments_bruteforce(g: CompatibilityGraph | None = None):
    """Pure-python enumeration used as an independent cross-check in tests."""
    g = compatibility() if g is None else g
    for vals in itertools.product((1, -1), repeat=len(g.nodes)):
        yield Assignment(dict(zip(g.nodes, vals)))
