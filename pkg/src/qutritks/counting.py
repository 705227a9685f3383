"""Monte Carlo photon counting and the correlation estimators.

Every herald is routed to D1, D2, D3 or lost, with Born-rule probabilities
scaled by the detection efficiency.  Three-fold coincidences <D0,Di,Dj>
are drawn separately at a small fraction of the two-fold rate.

Estimates are ratios of counts.  Their errors come from treating each
count as an independent Poisson variable and propagating to first order
(delta method).  Each estimate carries its gradient with respect to its
setting's count vector ``(n1, n2, n3, t12, t13, t23)``, so sums of
estimates sharing a setting get the right covariance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from qutritks.core import PAIR_WEIGHT, CompatibilityGraph, DensityMatrix, H_LABELS, compatibility
from qutritks.optics import MeasurementSetting, detection_probabilities

DETECTOR_PAIRS = ((0, 1), (0, 2), (1, 2))
TRIPLE_SUPPRESSION = 1e-4
CLASSICAL_BOUND2 = Fraction(8)
QUANTUM_PREDICTION2 = Fraction(25, 3)
CLASSICAL_BOUND3 = Fraction(1)
QUANTUM_PREDICTION3 = Fraction(4, 3)


class EmptySampleError(ValueError):
    pass


class InvalidSettingError(ValueError):
    pass


@dataclass(frozen=True)
class CountRecord:
    setting_name: str
    n_heralds: int
    n_d1: int
    n_d2: int
    n_d3: int
    # three-fold counts for detector pairs (D1,D2), (D1,D3), (D2,D3)
    n_triple: tuple[int, int, int]
    n_noclick: int
    rng_seed: int
    detector_labels: tuple[str | None, str | None, str | None] = (None, None, None)

    def __post_init__(self):
        counts = (self.n_heralds, self.n_d1, self.n_d2, self.n_d3, self.n_noclick, *self.n_triple)
        if min(counts) < 0:
            raise ValueError(f"{self.setting_name}: negative count in {counts}")
        if self.n_d1 + self.n_d2 + self.n_d3 + self.n_noclick > self.n_heralds:
            raise ValueError(f"{self.setting_name}: more outcomes than heralds")
        object.__setattr__(self, "n_triple", tuple(int(t) for t in self.n_triple))
        object.__setattr__(self, "detector_labels", tuple(self.detector_labels))

    @property
    def singles(self) -> np.ndarray:
        return np.array([self.n_d1, self.n_d2, self.n_d3], dtype=float)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.n_d1, self.n_d2, self.n_d3, *self.n_triple], dtype=float)

    @property
    def total(self) -> int:
        return self.n_d1 + self.n_d2 + self.n_d3

    def detector(self, label: str) -> int:
        try:
            return self.detector_labels.index(label)
        except ValueError:
            raise KeyError(f"{label!r} is not measured in setting {self.setting_name}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_triple"] = list(self.n_triple)
        d["detector_labels"] = list(self.detector_labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CountRecord":
        d = dict(d)
        d["n_triple"] = tuple(d["n_triple"])
        d["detector_labels"] = tuple(d["detector_labels"])
        return cls(**d)


@dataclass(frozen=True)
class CorrelationEstimate:
    """An estimated <A_i> (one label) or <A_i A_j> (two labels)."""

    value: float
    sigma: float
    labels: tuple[str, ...]
    source_counts: CountRecord | None = None
    gradient: tuple[float, ...] | None = field(default=None, repr=False)

    def compact(self) -> str:
        return format_compact(self.value, self.sigma)


@dataclass(frozen=True)
class JointProbabilities:
    """P(A_i = +-1, A_j = +-1); ``pm`` means A_i = +1 and A_j = -1."""

    p_pp: float
    p_pm: float
    p_mp: float
    p_mm: float
    sigma: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    labels: tuple[str, str] = ("", "")
    source_counts: CountRecord | None = None
    gradients: tuple[tuple[float, ...], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        total = self.p_pp + self.p_pm + self.p_mp + self.p_mm
        if abs(total - 1) > 1e-9:
            raise ValueError(f"joint probabilities sum to {total}, expected 1")


@dataclass(frozen=True)
class SettingResult:
    """Estimates obtained from one measurement setting."""

    record: CountRecord
    singles: dict[str, CorrelationEstimate]
    pairs: dict[tuple[str, str], CorrelationEstimate]


@dataclass(frozen=True)
class InequalityReport:
    lhs2: float
    sigma2: float
    lhs3: float
    sigma3: float
    singles: dict[str, CorrelationEstimate] = field(repr=False)
    pairs: dict[tuple[str, str], CorrelationEstimate] = field(repr=False)
    classical_bound2: float = float(CLASSICAL_BOUND2)
    quantum_prediction2: float = float(QUANTUM_PREDICTION2)
    classical_bound3: float = float(CLASSICAL_BOUND3)
    quantum_prediction3: float = float(QUANTUM_PREDICTION3)

    @property
    def violation_sigmas2(self) -> float:
        return _significance(self.lhs2 - self.classical_bound2, self.sigma2)

    @property
    def violation_sigmas3(self) -> float:
        return _significance(self.lhs3 - self.classical_bound3, self.sigma3)

    def summary(self) -> dict:
        return {
            "lhs2": self.lhs2,
            "sigma2": self.sigma2,
            "lhs3": self.lhs3,
            "sigma3": self.sigma3,
            "classical_bound2": self.classical_bound2,
            "quantum_prediction2": self.quantum_prediction2,
            "classical_bound3": self.classical_bound3,
            "quantum_prediction3": self.quantum_prediction3,
            "violation_sigmas2": self.violation_sigmas2,
            "violation_sigmas3": self.violation_sigmas3,
        }


def _significance(excess: float, sigma: float) -> float:
    if sigma > 0:
        return excess / sigma
    return math.copysign(math.inf, excess) if excess else 0.0


def format_compact(value: float, sigma: float, digits: int = 2) -> str:
    """``0.328(18)`` style: the error's leading ``digits`` digits in brackets."""
    if not math.isfinite(sigma):
        return f"{value:.3f}(inf)"
    if sigma <= 0:
        return f"{value:.3f}(0)"
    decimals = max(0, digits - 1 - math.floor(math.log10(sigma)))
    err = round(sigma * 10**decimals)
    if err >= 10**digits:  # rounding bumped a digit, e.g. 0.0996 -> 100
        decimals = max(0, decimals - 1)
        err = round(sigma * 10**decimals)
    return f"{value:.{decimals}f}({err})"


def simulate_counts(
    state: DensityMatrix,
    setting: MeasurementSetting,
    mean_heralds: float,
    efficiency: float = 1.0,
    seed: int = 0,
    triple_suppression: float = TRIPLE_SUPPRESSION,
) -> CountRecord:
    """Draw one setting's heralded counts.

    The herald total is Poisson; heralds split multinomially over D1-D3 and
    no-click.  Three-fold counts for detectors i, j are Poisson with mean
    ``triple_suppression * sqrt(n_i n_j)``.
    """
    if mean_heralds <= 0:
        raise ValueError(f"mean_heralds must be positive, got {mean_heralds}")
    if not 0 < efficiency <= 1:
        raise ValueError(f"efficiency must be in (0, 1], got {efficiency}")
    total = sum(p.matrix for p in setting.detector_projectors)
    if np.max(np.abs(total - np.eye(3))) > 1e-12:
        raise InvalidSettingError(f"setting {setting.name} is not a resolution of the identity")

    rng = np.random.default_rng(seed)
    probs = detection_probabilities(state, setting, efficiency)
    n_heralds = int(rng.poisson(mean_heralds))
    n1, n2, n3, lost = (int(k) for k in rng.multinomial(n_heralds, probs))
    singles = (n1, n2, n3)
    triples = tuple(
        int(rng.poisson(triple_suppression * math.sqrt(singles[i] * singles[j]))) for i, j in DETECTOR_PAIRS
    )
    return CountRecord(
        setting_name=setting.name,
        n_heralds=n_heralds,
        n_d1=n1,
        n_d2=n2,
        n_d3=n3,
        n_triple=triples,
        n_noclick=lost,
        rng_seed=int(seed),
        detector_labels=setting.effective_labels if setting.relabeling else setting.labels,
    )


def post_select(record: CountRecord) -> np.ndarray:
    """Click distribution over D1-D3 with no-click heralds discarded.

    Valid as an estimate of the full distribution only under fair sampling:
    detected photons must be representative of all heralded ones.
    """
    if record.total == 0:
        raise EmptySampleError(f"{record.setting_name}: no detector fired")
    return record.singles / record.total


def _ratio(num: np.ndarray, den: np.ndarray, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient of ``(num . x) / (den . x)``."""
    a, b = float(num @ x), float(den @ x)
    if b <= 0:
        raise EmptySampleError("no post-selected events")
    return a / b, (num * b - den * a) / b**2


def _sigma(grad: np.ndarray, x: np.ndarray) -> float:
    return float(math.sqrt(np.sum(grad**2 * x)))


_SINGLES = np.array([1.0, 1, 1, 0, 0, 0])


def single_expectation(record: CountRecord, label: str) -> CorrelationEstimate:
    """<A_i> = 1 - 2 P(detector i fires)."""
    k = record.detector(label)
    x = record.vector
    num = _SINGLES.copy()
    num[k] -= 2
    value, grad = _ratio(num, _SINGLES, x)
    return CorrelationEstimate(value, _sigma(grad, x), (label,), record, tuple(grad))


def joint_probabilities(
    record: CountRecord, pair: Sequence[str], zero_triple_counts: bool = False
) -> JointProbabilities:
    """Joint outcome probabilities for two observables read in one setting.

    A click at detector i alone means A_i = -1, A_j = +1; a click at the
    third detector means both +1; a three-fold coincidence means both -1.
    Normalized by all post-selected events.
    """
    i, j = (record.detector(lab) for lab in pair)
    (k,) = {0, 1, 2} - {i, j}
    t = 3 + DETECTOR_PAIRS.index(tuple(sorted((i, j))))
    x = record.vector
    den = _SINGLES.copy()
    if not zero_triple_counts:
        den[t] = 1.0

    def unit(idx):
        e = np.zeros(6)
        if idx is not None:
            e[idx] = 1.0
        return e

    parts = [_ratio(unit(k), den, x), _ratio(unit(j), den, x), _ratio(unit(i), den, x),
             _ratio(unit(None if zero_triple_counts else t), den, x)]
    values = [p[0] for p in parts]
    return JointProbabilities(
        *values,
        sigma=tuple(_sigma(g, x) for _, g in parts),
        labels=tuple(pair),
        source_counts=record,
        gradients=tuple(tuple(g) for _, g in parts),
    )


def correlation(jp: JointProbabilities) -> CorrelationEstimate:
    value = jp.p_pp + jp.p_mm - jp.p_pm - jp.p_mp
    if jp.gradients is None or jp.source_counts is None:
        return CorrelationEstimate(value, 0.0, jp.labels)
    g = np.array(jp.gradients)
    grad = g[0] + g[3] - g[1] - g[2]
    return CorrelationEstimate(value, _sigma(grad, jp.source_counts.vector), jp.labels, jp.source_counts, tuple(grad))


def estimate_setting(
    record: CountRecord, graph: CompatibilityGraph | None = None, zero_triple_counts: bool = False
) -> SettingResult:
    """All <A_i> and compatible <A_i A_j> a setting's counts can give."""
    graph = compatibility() if graph is None else graph
    labels = [lab for lab in record.detector_labels if lab in graph.nodes]
    singles = {lab: single_expectation(record, lab) for lab in labels}
    pairs = {}
    for a_idx, a in enumerate(labels):
        for b in labels[a_idx + 1:]:
            if (a, b) in graph:
                key = _edge_key(graph, a, b)
                pairs[key] = correlation(joint_probabilities(record, key, zero_triple_counts))
    return SettingResult(record, singles, pairs)


def _edge_key(graph: CompatibilityGraph, a: str, b: str) -> tuple[str, str]:
    return (a, b) if (a, b) in graph.edge_list else (b, a)


def build_report(
    results: Iterable[SettingResult], graph: CompatibilityGraph | None = None
) -> InequalityReport:
    """Left-hand sides of both inequalities with propagated errors.

    Each <A_i> and each edge correlation is taken from the first setting
    (in the given order) that provides it.  Variances add across settings;
    within a setting the contributions are combined through their shared
    count gradient before squaring.
    """
    graph = compatibility() if graph is None else graph
    results = list(results)
    singles: dict[str, CorrelationEstimate] = {}
    pairs: dict[tuple[str, str], CorrelationEstimate] = {}
    for res in results:
        for lab, est in res.singles.items():
            singles.setdefault(lab, est)
        for key, est in res.pairs.items():
            pairs.setdefault(key, est)
    missing = [n for n in graph.nodes if n not in singles] + [e for e in graph.edge_list if e not in pairs]
    if missing:
        raise ValueError(f"estimates missing for {missing}")

    lhs2 = sum(singles[n].value for n in graph.nodes) - PAIR_WEIGHT * sum(pairs[e].value for e in graph.edge_list)
    lhs3 = sum((1 - singles[h].value) / 2 for h in H_LABELS)

    terms2 = [(singles[n], 1.0) for n in graph.nodes] + [(pairs[e], -PAIR_WEIGHT) for e in graph.edge_list]
    terms3 = [(singles[h], -0.5) for h in H_LABELS]
    return InequalityReport(
        lhs2=float(lhs2),
        sigma2=_combined_sigma(terms2),
        lhs3=float(lhs3),
        sigma3=_combined_sigma(terms3),
        singles={n: singles[n] for n in graph.nodes},
        pairs={e: pairs[e] for e in graph.edge_list},
    )


def _combined_sigma(terms: list[tuple[CorrelationEstimate, float]]) -> float:
    grads: dict[int, tuple[CountRecord, np.ndarray]] = {}
    for est, coef in terms:
        if est.source_counts is None or est.gradient is None:
            continue
        key = id(est.source_counts)
        rec, g = grads.get(key, (est.source_counts, np.zeros(6)))
        grads[key] = (rec, g + coef * np.asarray(est.gradient))
    return float(math.sqrt(sum(np.sum(g**2 * rec.vector) for rec, g in grads.values())))


def resample_record(record: CountRecord, rng: np.random.Generator) -> CountRecord:
    """Nonparametric resample: heralds redrawn from the observed outcome mix."""
    n = record.n_heralds
    probs = np.array([record.n_d1, record.n_d2, record.n_d3, record.n_noclick], dtype=float)
    rest = n - probs.sum()
    probs = np.append(probs, rest) / n
    n1, n2, n3, lost, _ = rng.multinomial(n, probs)
    triples = tuple(int(rng.poisson(t)) for t in record.n_triple)
    return CountRecord(record.setting_name, n, int(n1), int(n2), int(n3), triples, int(lost),
                       record.rng_seed, record.detector_labels)


def bootstrap_sigma(
    record: CountRecord,
    estimator: Callable[[CountRecord], float],
    n_resamples: int = 1000,
    rng: np.random.Generator | None = None,
) -> float:
    rng = np.random.default_rng() if rng is None else rng
    vals = np.array([estimator(resample_record(record, rng)) for _ in range(n_resamples)])
    return float(vals.std(ddof=1))
