"""Exact qutrit quantum mechanics for the Yu-Oh 13-ray set.

States live in the ordered basis ``{|0>, |1>, |2>}``.  Rays carry integer
components so that orthogonality (and hence compatibility) is decided
exactly; the normalized complex vectors are derived on demand.

Ray components used throughout (unnormalized)::

    z1 = ( 1, 0, 0)   z2 = ( 0, 1, 0)   z3 = ( 0, 0, 1)
    y1- = ( 0, 1,-1)  y1+ = ( 0, 1, 1)
    y2- = (-1, 0, 1)  y2+ = ( 1, 0, 1)
    y3- = ( 1,-1, 0)  y3+ = ( 1, 1, 0)
    h0 = ( 1, 1, 1)   h1 = (-1, 1, 1)   h2 = ( 1,-1, 1)   h3 = ( 1, 1,-1)
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DIM = 3
ATOL = 1e-12
# Weight of one unordered compatible pair in the inequality: 1/4 for each of
# the two orderings.
PAIR_WEIGHT = 0.5

RAY_LABELS = (
    "z1", "z2", "z3",
    "y1-", "y1+", "y2-", "y2+", "y3-", "y3+",
    "h0", "h1", "h2", "h3",
)
H_LABELS = ("h0", "h1", "h2", "h3")

_YU_OH_COMPONENTS = {
    "z1": (1, 0, 0),
    "z2": (0, 1, 0),
    "z3": (0, 0, 1),
    "y1-": (0, 1, -1),
    "y1+": (0, 1, 1),
    "y2-": (-1, 0, 1),
    "y2+": (1, 0, 1),
    "y3-": (1, -1, 0),
    "y3+": (1, 1, 0),
    "h0": (1, 1, 1),
    "h1": (-1, 1, 1),
    "h2": (1, -1, 1),
    "h3": (1, 1, -1),
}

# Completion vectors for the h-basis measurement settings; orthogonal to
# h_alpha and to one y3 ray.  Not part of the 13-ray graph.
H_COMPLEMENTS = {
    "h0c": (1, 1, -2),
    "h1c": (-1, 1, -2),
    "h2c": (1, -1, -2),
    "h3c": (1, 1, 2),
}


class InvalidRayError(ValueError):
    pass


class InvalidStateError(ValueError):
    pass


@dataclass(frozen=True)
class Ray:
    """A qutrit direction with integer (unnormalized) components."""

    label: str
    components: tuple[int, int, int]

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        if len(comps) != DIM:
            raise InvalidRayError(f"ray {self.label!r} needs {DIM} components, got {len(comps)}")
        object.__setattr__(self, "components", comps)

    @property
    def norm_squared(self) -> int:
        return sum(c * c for c in self.components)

    @property
    def vector(self) -> np.ndarray:
        n2 = self.norm_squared
        if n2 == 0:
            raise InvalidRayError(f"ray {self.label!r} has zero direction")
        return np.asarray(self.components, dtype=complex) / np.sqrt(n2)

    def dot(self, other: "Ray") -> int:
        return sum(a * b for a, b in zip(self.components, other.components))

    def is_parallel(self, other: "Ray") -> bool:
        a, b = self.components, other.components
        cross = (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])
        return cross == (0, 0, 0) and self.norm_squared > 0 and other.norm_squared > 0


@dataclass(frozen=True, eq=False)
class Ket:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (DIM,):
            raise InvalidStateError(f"ket needs {DIM} amplitudes, got shape {amps.shape}")
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise InvalidStateError("ket has zero norm")
        amps = amps / norm
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A validated 3x3 density matrix (Hermitian, unit trace, positive)."""

    matrix: np.ndarray

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        if rho.shape != (DIM, DIM):
            raise InvalidStateError(f"density matrix must be {DIM}x{DIM}, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > ATOL:
            raise InvalidStateError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > ATOL:
            raise InvalidStateError(f"density matrix trace is {np.trace(rho).real:.3g}, expected 1")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise InvalidStateError("density matrix has a negative eigenvalue")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def from_ket(cls, amplitudes: Sequence[complex]) -> "DensityMatrix":
        return Ket(np.asarray(amplitudes)).density_matrix()

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(np.eye(DIM) / DIM)

    def permuted(self, perm: Sequence[int]) -> "DensityMatrix":
        """Relabel basis vectors: new |k> carries the old |perm[k]>."""
        p = np.eye(DIM)[list(perm)]
        return DensityMatrix(p @ self.matrix @ p.T)


@dataclass(frozen=True, eq=False)
class Projector:
    matrix: np.ndarray
    source: Ray


@dataclass(frozen=True, eq=False)
class Observable:
    matrix: np.ndarray
    source: Ray


@dataclass(frozen=True)
class CompatibilityGraph:
    nodes: tuple[str, ...]
    edges: frozenset[frozenset[str]]
    triples: frozenset[frozenset[str]]
    edge_list: tuple[tuple[str, str], ...] = field(compare=False)
    triple_list: tuple[tuple[str, str, str], ...] = field(compare=False)

    def __contains__(self, pair) -> bool:
        return frozenset(pair) in self.edges


def yu_oh_rays() -> list[Ray]:
    return [Ray(label, _YU_OH_COMPONENTS[label]) for label in RAY_LABELS]


def rays_by_label(rays: Iterable[Ray] | None = None) -> dict[str, Ray]:
    return {r.label: r for r in (yu_oh_rays() if rays is None else rays)}


def projector(r: Ray) -> Projector:
    v = r.vector
    return Projector(np.outer(v, v.conj()), r)


def observable(r: Ray) -> Observable:
    return Observable(np.eye(DIM) - 2 * projector(r).matrix, r)


def compatibility(rays: Sequence[Ray] | None = None) -> CompatibilityGraph:
    """Orthogonality graph of ``rays`` and its complete orthogonal triples.

    Edges are decided on the integer components, so there is no tolerance.
    Pairs and triples come out in canonical (input) order.
    """
    rays = list(yu_oh_rays() if rays is None else rays)
    for r in rays:
        if r.norm_squared == 0:
            raise InvalidRayError(f"ray {r.label!r} has zero direction")
    edges = [(a.label, b.label) for a, b in itertools.combinations(rays, 2) if a.dot(b) == 0]
    edge_set = frozenset(frozenset(e) for e in edges)
    triples = [
        (a.label, b.label, c.label)
        for a, b, c in itertools.combinations(rays, 3)
        if {frozenset((a.label, b.label)), frozenset((a.label, c.label)), frozenset((b.label, c.label))} <= edge_set
    ]
    return CompatibilityGraph(
        nodes=tuple(r.label for r in rays),
        edges=edge_set,
        triples=frozenset(frozenset(t) for t in triples),
        edge_list=tuple(edges),
        triple_list=tuple(triples),
    )


def s_operator(rays: Sequence[Ray] | None = None, graph: CompatibilityGraph | None = None) -> np.ndarray:
    """Sum of A_i minus a quarter of the sum of A_i A_j over compatible pairs.

    The pair sum runs over ordered pairs, so each of the 24 edges contributes
    the symmetrized product ``A_i A_j + A_j A_i``.  Equals 25/3 times the
    identity for the Yu-Oh rays.
    """
    rays = list(yu_oh_rays() if rays is None else rays)
    graph = compatibility(rays) if graph is None else graph
    obs = {r.label: observable(r).matrix for r in rays}
    s = sum(obs.values())
    for i, j in graph.edge_list:
        s = s - PAIR_WEIGHT * (obs[i] @ obs[j] + obs[j] @ obs[i]) / 2
    return s


def h_projector_sum(rays: Sequence[Ray] | None = None) -> np.ndarray:
    by_label = rays_by_label(rays)
    return sum(projector(by_label[h]).matrix for h in H_LABELS)


def _as_matrix(state) -> np.ndarray:
    if isinstance(state, DensityMatrix):
        return state.matrix
    if isinstance(state, Ket):
        return state.density_matrix().matrix
    return DensityMatrix(state).matrix


def expectation(state, op) -> float:
    """Born-rule expectation ``Tr(rho op)`` for a Hermitian ``op``."""
    op = getattr(op, "matrix", op)
    val = np.trace(_as_matrix(state) @ np.asarray(op))
    if abs(val.imag) > 1e-10:
        raise ValueError(f"expectation has imaginary part {val.imag:.3g}; operator not Hermitian?")
    return float(val.real)


def evaluate_ineq2(state, rays: Sequence[Ray] | None = None) -> float:
    return expectation(state, s_operator(rays))


def evaluate_ineq3(state, rays: Sequence[Ray] | None = None) -> float:
    return expectation(state, h_projector_sum(rays))


def ideal_observables(state, rays: Sequence[Ray] | None = None) -> tuple[dict[str, float], dict[tuple[str, str], float]]:
    """Exact <A_i> for every ray and <A_i A_j> for every compatible pair."""
    rays = list(yu_oh_rays() if rays is None else rays)
    graph = compatibility(rays)
    obs = {r.label: observable(r).matrix for r in rays}
    singles = {k: expectation(state, a) for k, a in obs.items()}
    pairs = {(i, j): expectation(state, obs[i] @ obs[j]) for i, j in graph.edge_list}
    return singles, pairs


def random_density_matrix(rng: np.random.Generator, rank: int = DIM) -> DensityMatrix:
    """Random state with random eigenvalues (summing to 1) in a Haar-random basis."""
    z = rng.normal(size=(DIM, DIM)) + 1j * rng.normal(size=(DIM, DIM))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    w = rng.random(rank)
    w = np.concatenate([w / w.sum(), np.zeros(DIM - rank)])
    rho = (q * w) @ q.conj().T
    return DensityMatrix((rho + rho.conj().T) / 2)


def graph_to_json(rays: Sequence[Ray] | None = None) -> str:
    rays = list(yu_oh_rays() if rays is None else rays)
    graph = compatibility(rays)
    doc = {
        "rays": [{"label": r.label, "components": list(r.components)} for r in rays],
        "edges": [list(e) for e in graph.edge_list],
        "triples": [list(t) for t in graph.triple_list],
    }
    return json.dumps(doc, indent=2)


def graph_from_json(text: str) -> tuple[list[Ray], CompatibilityGraph]:
    doc = json.loads(text)
    rays = [Ray(d["label"], tuple(d["components"])) for d in doc["rays"]]
    graph = compatibility(rays)
    edges = frozenset(frozenset(e) for e in doc["edges"])
    if edges != graph.edges:
        raise ValueError("edge list in document does not match ray orthogonality")
    return rays, graph
