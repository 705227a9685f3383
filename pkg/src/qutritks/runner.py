"""Campaign orchestration: prepare each state, measure every setting, report."""

from __future__ import annotations

import csv
import io
import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from qutritks import __version__
from qutritks.core import (
    DensityMatrix,
    Ray,
    compatibility,
    evaluate_ineq2,
    evaluate_ineq3,
    h_projector_sum,
    ideal_observables,
    s_operator,
    yu_oh_rays,
)
from qutritks.counting import (
    TRIPLE_SUPPRESSION,
    CountRecord,
    InequalityReport,
    build_report,
    estimate_setting,
    format_compact,
    simulate_counts,
)
from qutritks.optics import (
    PRESET_STATES,
    UnsupportedStateError,
    apparatus_forward,
    measurement_settings,
    measurement_table_csv,
    preset_config,
    preparation_table_csv,
    pure_config,
)
from qutritks.oracle import enumerate_ks_colorings, max_classical_value, max_h_sum

DEFAULT_SEED = 2012
DEFAULT_HERALDS = 100_000
ALIASES = {"0": "psi1", "1": "psi2", "2": "psi3", "01": "psi4", "02": "psi5",
           "12": "psi6", "s": "psi7", "rho8": "rho8", "rho9": "rho9"}


class ConfigError(ValueError):
    pass


class PreparationError(ValueError):
    pass


@dataclass(frozen=True)
class StateSpec:
    """A named input state: a preset, an amplitude triple or a density matrix."""

    name: str
    preset: str | None = None
    amplitudes: tuple[complex, ...] | None = None
    density_matrix: tuple[tuple[complex, ...], ...] | None = None

    def prepare(self) -> DensityMatrix:
        """State delivered by the apparatus.  Literal density matrices bypass the optics."""
        try:
            if self.preset is not None:
                return apparatus_forward(preset_config(self.preset))
            if self.amplitudes is not None:
                return apparatus_forward(pure_config(self.amplitudes))
            if self.density_matrix is not None:
                return DensityMatrix(np.array(self.density_matrix, dtype=complex))
        except (UnsupportedStateError, ValueError) as exc:
            raise PreparationError(f"state {self.name!r}: {exc}") from exc
        raise ConfigError(f"state {self.name!r} has no definition")

    @property
    def description(self) -> str:
        if self.preset is not None:
            return PRESET_STATES[self.preset][0]
        if self.amplitudes is not None:
            return "amplitudes " + json.dumps([_complex_str(a) for a in self.amplitudes])
        return "density matrix"

    def to_dict(self) -> dict:
        d: dict = {"name": self.name}
        if self.preset is not None:
            d["preset"] = self.preset
        if self.amplitudes is not None:
            d["amplitudes"] = [_complex_str(a) for a in self.amplitudes]
        if self.density_matrix is not None:
            d["density_matrix"] = [[_complex_str(a) for a in row] for row in self.density_matrix]
        return d


def _complex_str(z) -> str | float:
    z = complex(z)
    return z.real if z.imag == 0 else str(z)


def _parse_complex(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    try:
        return complex(str(v).replace(" ", "")) if isinstance(v, str) else complex(v)
    except ValueError as exc:
        raise ConfigError(f"cannot read {v!r} as a complex number") from exc


def parse_state(item) -> StateSpec:
    """Preset name/alias string, or a dict with ``amplitudes`` or ``density_matrix``."""
    if isinstance(item, str):
        key = ALIASES.get(item, item)
        if key not in PRESET_STATES:
            raise ConfigError(f"unknown state {item!r}; presets are {', '.join(PRESET_STATES)}")
        return StateSpec(name=key, preset=key)
    if isinstance(item, dict):
        name = item.get("name")
        if not name:
            raise ConfigError(f"state entry needs a name: {item}")
        if "preset" in item:
            return StateSpec(name=name, preset=parse_state(item["preset"]).preset)
        if "amplitudes" in item:
            amps = tuple(_parse_complex(a) for a in item["amplitudes"])
            if len(amps) != 3:
                raise ConfigError(f"state {name!r} needs 3 amplitudes")
            return StateSpec(name=name, amplitudes=amps)
        if "density_matrix" in item:
            rows = tuple(tuple(_parse_complex(a) for a in row) for row in item["density_matrix"])
            if len(rows) != 3 or any(len(r) != 3 for r in rows):
                raise ConfigError(f"state {name!r} needs a 3x3 density matrix")
            return StateSpec(name=name, density_matrix=rows)
    raise ConfigError(f"cannot parse state entry {item!r}")


@dataclass(frozen=True)
class Campaign:
    states: tuple[StateSpec, ...] = tuple(StateSpec(k, preset=k) for k in PRESET_STATES)
    mean_heralds: float = DEFAULT_HERALDS
    efficiency: float = 1.0
    seed: int = DEFAULT_SEED
    zero_triple_counts: bool = False
    relabel: bool = True
    triple_suppression: float = TRIPLE_SUPPRESSION
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if not self.states:
            raise ConfigError("campaign needs at least one state")
        names = [s.name for s in self.states]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate state names in {names}")
        if self.mean_heralds < 1:
            raise ConfigError(f"mean_heralds must be >= 1, got {self.mean_heralds}")
        if not 0 < self.efficiency <= 1:
            raise ConfigError(f"efficiency must be in (0, 1], got {self.efficiency}")

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "mean_heralds": self.mean_heralds,
            "efficiency": self.efficiency,
            "zero_triple_counts": self.zero_triple_counts,
            "relabel": self.relabel,
            "triple_suppression": self.triple_suppression,
            "states": [s.to_dict() for s in self.states],
            "versions": {"qutritks": __version__, "numpy": np.__version__},
        }


@dataclass(frozen=True)
class StateResult:
    spec: StateSpec
    exact_singles: dict[str, float]
    exact_pairs: dict[tuple[str, str], float]
    exact_lhs2: float
    exact_lhs3: float
    records: tuple[CountRecord, ...]
    report: InequalityReport


@dataclass(frozen=True)
class ResultBundle:
    metadata: dict
    states: tuple[StateResult, ...] = field(default_factory=tuple)

    def state(self, name: str) -> StateResult:
        for s in self.states:
            if s.spec.name == name:
                return s
        raise KeyError(name)


def setting_seed(master: int, state_name: str, setting_name: str) -> int:
    """Per-setting RNG seed from (master seed, state name, setting name).

    Names rather than positions feed the seed sequence, so reordering
    states or settings leaves every stream unchanged.
    """
    key = [int(master), zlib.crc32(state_name.encode()), zlib.crc32(setting_name.encode())]
    return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint64)[0])


def _analyse(spec: StateSpec, rho: DensityMatrix, records: Sequence[CountRecord], zero_triples: bool) -> StateResult:
    graph = compatibility()
    results = [estimate_setting(r, graph, zero_triples) for r in records]
    singles, pairs = ideal_observables(rho)
    return StateResult(
        spec=spec,
        exact_singles=singles,
        exact_pairs=pairs,
        exact_lhs2=evaluate_ineq2(rho),
        exact_lhs3=evaluate_ineq3(rho),
        records=tuple(records),
        report=build_report(results, graph),
    )


def _run_state(c: Campaign, spec: StateSpec) -> StateResult:
    rho = spec.prepare()
    records = [
        simulate_counts(rho, s, c.mean_heralds, c.efficiency, setting_seed(c.seed, spec.name, s.name),
                        c.triple_suppression)
        for s in measurement_settings(c.relabel)
    ]
    return _analyse(spec, rho, records, c.zero_triple_counts)


def run_campaign(c: Campaign) -> ResultBundle:
    if c.workers > 1:
        with ThreadPoolExecutor(max_workers=c.workers) as pool:
            states = list(pool.map(lambda s: _run_state(c, s), c.states))
    else:
        states = [_run_state(c, s) for s in c.states]
    return ResultBundle(metadata=c.metadata(), states=tuple(states))


# ---- serialization --------------------------------------------------------

def _observable_rows(sr: StateResult):
    rep = sr.report
    for lab, est in rep.singles.items():
        yield f"A[{lab}]", sr.exact_singles[lab], est
    for (a, b), est in rep.pairs.items():
        yield f"A[{a}]A[{b}]", sr.exact_pairs[(a, b)], est


def bundle_to_dict(bundle: ResultBundle) -> dict:
    states = []
    for sr in bundle.states:
        states.append({
            "state": sr.spec.to_dict(),
            "description": sr.spec.description,
            "exact": {"lhs2": sr.exact_lhs2, "lhs3": sr.exact_lhs3},
            "report": sr.report.summary(),
            "observables": [
                {"observable": name, "exact": exact, "estimate": est.value, "sigma": est.sigma,
                 "setting": est.source_counts.setting_name if est.source_counts else None}
                for name, exact, est in _observable_rows(sr)
            ],
            "counts": [r.to_dict() for r in sr.records],
        })
    return {"metadata": bundle.metadata, "states": states}


def bundle_to_json(bundle: ResultBundle) -> str:
    return json.dumps(bundle_to_dict(bundle), indent=2, sort_keys=True)


def bundle_from_json(text: str) -> ResultBundle:
    """Rebuild a bundle from its JSON form by re-analysing the stored counts."""
    doc = json.loads(text)
    meta = doc["metadata"]
    out = []
    for entry in doc["states"]:
        spec = parse_state(entry["state"])
        records = [CountRecord.from_dict(r) for r in entry["counts"]]
        out.append(_analyse(spec, spec.prepare(), records, meta["zero_triple_counts"]))
    return ResultBundle(metadata=meta, states=tuple(out))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def observables_csv(sr: StateResult) -> str:
    rows = [(name, repr(exact), repr(est.value), repr(est.sigma)) for name, exact, est in _observable_rows(sr)]
    return _csv(rows, ["observable", "exact", "estimate", "sigma"])


def counts_csv(sr: StateResult) -> str:
    rows = [(r.setting_name, *r.detector_labels, r.n_heralds, r.n_d1, r.n_d2, r.n_d3, *r.n_triple,
             r.n_noclick, r.rng_seed) for r in sr.records]
    rows = [["" if v is None else v for v in row] for row in rows]
    header = ["setting", "label_d1", "label_d2", "label_d3", "n_heralds", "n_d1", "n_d2", "n_d3",
              "n_d1d2", "n_d1d3", "n_d2d3", "n_noclick", "rng_seed"]
    return _csv(rows, header)


def summary_csv(bundle: ResultBundle) -> str:
    rows = []
    for sr in bundle.states:
        rep = sr.report
        rows.append((sr.spec.name, repr(rep.lhs2), repr(rep.sigma2), repr(rep.lhs3), repr(rep.sigma3),
                     rep.classical_bound2, repr(rep.quantum_prediction2), rep.classical_bound3,
                     repr(rep.quantum_prediction3), repr(rep.violation_sigmas2), repr(rep.violation_sigmas3)))
    header = ["state", "lhs2", "sigma2", "lhs3", "sigma3", "classical_bound2", "quantum_prediction2",
              "classical_bound3", "quantum_prediction3", "violation_sigmas2", "violation_sigmas3"]
    return _csv(rows, header)


def observables_text(sr: StateResult) -> str:
    lines = [f"# {sr.spec.name}: {sr.spec.description}", f"{'observable':<16}{'exact':>10}  measured"]
    for name, exact, est in _observable_rows(sr):
        lines.append(f"{name:<16}{exact:>10.4f}  {est.compact()}")
    return "\n".join(lines) + "\n"


def summary_text(bundle: ResultBundle) -> str:
    lines = [
        "reference lines: lhs2 noncontextual bound 8, quantum 25/3 = 8.3333; "
        "lhs3 noncontextual bound 1, quantum 4/3 = 1.3333",
        f"{'state':<8}{'lhs2':>16}{'sigmas':>9}{'lhs3':>16}{'sigmas':>9}",
    ]
    for sr in bundle.states:
        rep = sr.report
        lines.append(
            f"{sr.spec.name:<8}{format_compact(rep.lhs2, rep.sigma2):>16}{rep.violation_sigmas2:>9.1f}"
            f"{format_compact(rep.lhs3, rep.sigma3):>16}{rep.violation_sigmas3:>9.1f}"
        )
    return "\n".join(lines) + "\n"


def emit_tables(bundle: ResultBundle, out_dir, formats: Sequence[str] = ("csv", "json", "txt")) -> list[Path]:
    """Write per-state and summary tables; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    if "json" in formats:
        files["bundle.json"] = bundle_to_json(bundle)
    for sr in bundle.states:
        if "csv" in formats:
            files[f"{sr.spec.name}_observables.csv"] = observables_csv(sr)
            files[f"{sr.spec.name}_counts.csv"] = counts_csv(sr)
        if "txt" in formats:
            files[f"{sr.spec.name}_observables.txt"] = observables_text(sr)
    if "csv" in formats:
        files["summary.csv"] = summary_csv(bundle)
    if "txt" in formats:
        files["summary.txt"] = summary_text(bundle)
    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        written.append(path)
    return written


def emit_angle_tables(out_dir, relabel: bool = True) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prep = out / "preparation_angles.csv"
    meas = out / "measurement_angles.csv"
    prep.write_text(preparation_table_csv())
    meas.write_text(measurement_table_csv(relabel))
    return [prep, meas]


# ---- self-test ------------------------------------------------------------

def verify_identities(rays: Sequence[Ray] | None = None) -> tuple[bool, list[dict]]:
    """Check the five defining constants; ``rays`` overrides the ray set."""
    rays = list(yu_oh_rays() if rays is None else rays)
    graph = compatibility(rays)
    s_dev = float(np.max(np.abs(s_operator(rays, graph) - 25 / 3 * np.eye(3))))
    h_dev = float(np.max(np.abs(h_projector_sum(rays) - 4 / 3 * np.eye(3))))
    best, _ = max_classical_value(graph)
    colorings = enumerate_ks_colorings(graph)
    h_max = max_h_sum(colorings) if colorings else None
    checks = [
        {"name": "S = 25/3 I", "value": s_dev, "expected": "max deviation < 1e-12", "passed": s_dev < 1e-12},
        {"name": "sum B_h = 4/3 I", "value": h_dev, "expected": "max deviation < 1e-12", "passed": h_dev < 1e-12},
        {"name": "compatible pairs", "value": len(graph.edges), "expected": 24, "passed": len(graph.edges) == 24},
        {"name": "classical maximum", "value": str(best), "expected": "8", "passed": best == 8},
        {"name": "KS max h-sum", "value": h_max, "expected": 1, "passed": h_max == 1},
    ]
    return all(c["passed"] for c in checks), checks
