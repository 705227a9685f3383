"""Jones-calculus model of the heralded path-qutrit apparatus.

Conventions
-----------
Half-wave plates follow the rotation form ``|H> -> cos2t|H> + sin2t|V>``,
``|V> -> cos2t|V> - sin2t|H>`` (determinant +1), with angles in degrees.

Source: the laser leaves the cavity V-polarized and HWP0 rotates it.  A V
pump photon down-converts to |HH>, an H pump photon to |VV>.  D0 does not
resolve polarization, so heralding traces the idler out.

Preparation: HWP1 acts on the signal photon, PBS1 transmits H into path
|0> and reflects V towards HWP2, PBS2 then reflects V into path |1> and
transmits H into path |2>.  Arm |2> carries a fixed pi reference phase so
that the balanced interferometer maps non-negative targets to
non-negative amplitudes.  The tilt of HWP3 (HWP4) adds a phase to path |2>
(|1>).

Measurement: two cascaded stages, each recombining two paths on a PBS,
rotating with a HWP and splitting again, i.e. a real rotation by 2*theta
on a pair of modes.  HWP5 acts first, HWP6 second; output mode k feeds
detector D(k+1).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from qutritks.core import (
    DIM,
    H_COMPLEMENTS,
    H_LABELS,
    DensityMatrix,
    Projector,
    Ray,
    projector,
    rays_by_label,
)

ARM2_REFERENCE_PHASE = np.pi
# Fully mixing HWP0 angle: cos^2(2t) = 1/3, quoted as 27.37 degrees.
RHO9_PUMP_ANGLE = math.degrees(0.5 * math.acos(1 / math.sqrt(3)))
DEFAULT_TOPOLOGY = ((0, 1), (1, 2))
SWAPS = {"02": (2, 1, 0), "12": (0, 2, 1)}

# name -> (description, amplitudes or None for the mixed presets)
PRESET_STATES = {
    "psi1": ("|0>", (1, 0, 0)),
    "psi2": ("|1>", (0, 1, 0)),
    "psi3": ("|2>", (0, 0, 1)),
    "psi4": ("(|0>+|1>)/sqrt2", (1, 1, 0)),
    "psi5": ("(|0>+|2>)/sqrt2", (1, 0, 1)),
    "psi6": ("(|1>+|2>)/sqrt2", (0, 1, 1)),
    "psi7": ("|s>=(|0>+|1>+|2>)/sqrt3", (1, 1, 1)),
    "rho8": ("(|0><0|+|2><2|)/2", None),
    "rho9": ("I/3", None),
}


class UnsupportedStateError(ValueError):
    pass


class UnrealizableSettingError(ValueError):
    pass


@dataclass(frozen=True)
class PolarizationAmplitudes:
    h: complex
    v: complex

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.h, self.v], dtype=complex)


@dataclass(frozen=True)
class WavePlate:
    theta: float = 0.0
    role: str = ""
    tilt_phase: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.tilt_phase)):
            raise ValueError(f"{self.role or 'wave plate'} has a non-finite angle")


@dataclass(frozen=True)
class ApparatusConfig:
    hwp0: WavePlate = field(default_factory=lambda: WavePlate(0.0, "HWP0"))
    hwp1: WavePlate = field(default_factory=lambda: WavePlate(0.0, "HWP1"))
    hwp2: WavePlate = field(default_factory=lambda: WavePlate(0.0, "HWP2"))
    hwp3: WavePlate = field(default_factory=lambda: WavePlate(0.0, "HWP3"))
    hwp4: WavePlate = field(default_factory=lambda: WavePlate(0.0, "HWP4"))
    hwp5: WavePlate = field(default_factory=lambda: WavePlate(0.0, "HWP5"))
    hwp6: WavePlate = field(default_factory=lambda: WavePlate(0.0, "HWP6"))
    pump_entangled_phase: float = 0.0
    phase_randomization: bool = False
    # 0 averages the HWP3 phase analytically, K > 0 over K uniform samples
    phase_samples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ApparatusConfig":
        kwargs = {}
        for k, v in d.items():
            if k.startswith("hwp"):
                v = WavePlate(**v) if isinstance(v, dict) else WavePlate(float(v), k.upper())
            kwargs[k] = v
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class MeasurementSetting:
    """Three mutually orthogonal projectors read out by D1, D2, D3.

    ``relabeling`` names a basis exchange applied to the input state before
    measuring ("02" for |2><->|0>, "12" for |2><->|1>).  ``effective_labels``
    gives, per detector, which of the 13 rays of the *original* state it
    measures (None for completion vectors).
    """

    name: str
    labels: tuple[str, str, str]
    detector_projectors: tuple[Projector, Projector, Projector]
    relabeling: str | None = None
    topology: tuple[tuple[int, int], tuple[int, int]] = DEFAULT_TOPOLOGY
    effective_labels: tuple[str | None, str | None, str | None] = (None, None, None)

    def __post_init__(self):
        total = sum(p.matrix for p in self.detector_projectors)
        if np.max(np.abs(total - np.eye(DIM))) > 1e-12:
            raise UnrealizableSettingError(f"setting {self.name}: projectors do not resolve the identity")
        if self.relabeling is not None and self.relabeling not in SWAPS:
            raise ValueError(f"unknown relabeling {self.relabeling!r}")

    @property
    def permutation(self) -> tuple[int, int, int] | None:
        return SWAPS[self.relabeling] if self.relabeling else None

    def effective_projectors(self) -> list[np.ndarray]:
        if self.relabeling is None:
            return [p.matrix for p in self.detector_projectors]
        p = np.eye(DIM)[list(self.permutation)]
        return [p.T @ b.matrix @ p for b in self.detector_projectors]


def hwp_transform(theta: float) -> np.ndarray:
    t = math.radians(2 * theta)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def _givens(pair: tuple[int, int], theta: float) -> np.ndarray:
    g = np.eye(DIM)
    a, b = pair
    g[np.ix_([a, b], [a, b])] = hwp_transform(theta)
    return g


def signal_polarization_state(config: ApparatusConfig) -> np.ndarray:
    """Heralded signal-photon polarization density matrix in (H, V)."""
    pump = hwp_transform(config.hwp0.theta) @ np.array([0.0, 1.0])
    p_h, p_v = pump
    # two-photon state over (signal, idler) polarizations
    psi = np.zeros((2, 2), dtype=complex)
    psi[0, 0] = p_v
    psi[1, 1] = p_h * np.exp(1j * config.pump_entangled_phase)
    return psi @ psi.conj().T


def preparation_map(theta1: float, theta2: float) -> np.ndarray:
    """3x2 isometry from signal polarization (H, V) onto the three paths."""
    h1 = hwp_transform(theta1)
    h2 = hwp_transform(theta2)
    m = np.zeros((DIM, 2), dtype=complex)
    m[0] = h1[0]
    after_arm = h2 @ np.array([0.0, 1.0])
    m[1] = after_arm[1] * h1[1]
    m[2] = after_arm[0] * h1[1] * np.exp(1j * ARM2_REFERENCE_PHASE)
    return m


def _path_phases(config: ApparatusConfig, phi3: float | None = None) -> np.ndarray:
    phi3 = config.hwp3.tilt_phase if phi3 is None else phi3
    return np.diag([1.0, np.exp(1j * config.hwp4.tilt_phase), np.exp(1j * phi3)])


def apparatus_forward(config: ApparatusConfig, rng: np.random.Generator | None = None) -> DensityMatrix:
    """Qutrit state on paths |0>, |1>, |2> after heralding at D0.

    With ``phase_randomization`` the HWP3 phase is averaged over a uniform
    distribution, analytically or over ``phase_samples`` draws from ``rng``.
    """
    m = preparation_map(config.hwp1.theta, config.hwp2.theta)
    rho = m @ signal_polarization_state(config) @ m.conj().T
    if not config.phase_randomization:
        d = _path_phases(config)
        rho = d @ rho @ d.conj().T
    elif config.phase_samples <= 0:
        d = _path_phases(config, 0.0)
        rho = d @ rho @ d.conj().T
        rho[:2, 2] = 0
        rho[2, :2] = 0
    else:
        rng = np.random.default_rng() if rng is None else rng
        acc = np.zeros_like(rho)
        for phi in rng.uniform(0, 2 * np.pi, config.phase_samples):
            d = _path_phases(config, config.hwp3.tilt_phase + phi)
            acc += d @ rho @ d.conj().T
        rho = acc / config.phase_samples
    return DensityMatrix((rho + rho.conj().T) / 2)


def prepare_pure(c0: complex, c1: complex, c2: complex) -> tuple[float, float]:
    """HWP1 and HWP2 angles (degrees, in [0, 45]) preparing c0|0>+c1|1>+c2|2>.

    Only non-negative real amplitudes are supported; relative phases belong
    to the HWP3/HWP4 tilts.
    """
    c = np.array([c0, c1, c2], dtype=complex)
    if np.max(np.abs(c.imag)) > 1e-12 or np.min(c.real) < -1e-12:
        raise UnsupportedStateError(
            f"only non-negative real amplitudes can be prepared, got {np.round(c, 6).tolist()}"
        )
    c = np.clip(c.real, 0.0, None)
    norm = np.linalg.norm(c)
    if norm == 0:
        raise UnsupportedStateError("zero amplitude vector")
    c0, c1, c2 = c / norm
    theta1 = 0.5 * math.degrees(math.atan2(math.hypot(c1, c2), c0))
    theta2 = 0.5 * math.degrees(math.atan2(c2, c1)) if (c1 or c2) else 0.0
    return theta1, theta2


def pure_config(amplitudes: Sequence[complex]) -> ApparatusConfig:
    t1, t2 = prepare_pure(*amplitudes)
    return ApparatusConfig(hwp1=WavePlate(t1, "HWP1"), hwp2=WavePlate(t2, "HWP2"))


def prepare_mixed(which: str) -> ApparatusConfig:
    if which == "rho8":
        return ApparatusConfig(
            hwp0=WavePlate(22.5, "HWP0"), hwp1=WavePlate(0.0, "HWP1"), hwp2=WavePlate(45.0, "HWP2")
        )
    if which == "rho9":
        return ApparatusConfig(
            hwp0=WavePlate(RHO9_PUMP_ANGLE, "HWP0"),
            hwp1=WavePlate(0.0, "HWP1"),
            hwp2=WavePlate(22.5, "HWP2"),
            phase_randomization=True,
        )
    raise UnsupportedStateError(f"unknown mixed preset {which!r}; expected 'rho8' or 'rho9'")


def preset_config(name: str) -> ApparatusConfig:
    if name not in PRESET_STATES:
        raise UnsupportedStateError(f"unknown preset {name!r}")
    amps = PRESET_STATES[name][1]
    return prepare_mixed(name) if amps is None else pure_config(amps)


def relabeled_config(config: ApparatusConfig, swap: str) -> ApparatusConfig:
    """Preparation angles for the same state with two basis vectors exchanged.

    Works for the mixed presets and for pure configurations prepared with a
    V pump; the target is recomputed from the forward state.
    """
    perm = SWAPS[swap]
    if config.phase_randomization or config.hwp0.theta != 0:
        rho = apparatus_forward(config).matrix
        target = DensityMatrix(rho).permuted(perm).matrix
        if np.allclose(rho, target, atol=1e-12):
            return config
        # rho8 with |2> <-> |1>: send the V half into path |1> instead
        candidate = replace(config, hwp2=replace(config.hwp2, theta=0.0))
        if np.allclose(apparatus_forward(candidate).matrix, target, atol=1e-12):
            return candidate
        raise UnsupportedStateError("cannot relabel this mixed configuration")
    m = preparation_map(config.hwp1.theta, config.hwp2.theta)
    amps = np.real_if_close(m[:, 0])[list(perm)]
    return pure_config(amps)


# ---- measurement settings ------------------------------------------------

def _cross(a, b) -> tuple[int, int, int]:
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _match_label(components, rays: dict[str, Ray]) -> str | None:
    probe = Ray("probe", components)
    for label, r in rays.items():
        if probe.is_parallel(r):
            return label
    return None


def make_setting(name: str, rays3: Sequence[Ray], relabeling: str | None = None) -> MeasurementSetting:
    """Order three orthogonal rays onto D1..D3 so the cascade can realize them.

    One ray must lie in a coordinate plane (zero component at index k).  It
    goes to the first mode of the HWP5 pair, the other two to the HWP6 pair.
    A zero at index 2 is preferred, giving the standard cascade where HWP5
    mixes paths (0, 1) and HWP6 mixes mode 1 with path 2.
    """
    candidates = [(k, i) for k in (2, 0, 1) for i, r in enumerate(rays3) if r.components[k] == 0]
    if not candidates:
        raise UnrealizableSettingError(f"setting {name}: no ray lies in a coordinate plane")
    k, i = candidates[0]
    pair5 = tuple(sorted(set(range(DIM)) - {k}))
    r_mode = pair5[0]
    pair6 = tuple(sorted((k, pair5[1])))
    order: list[Ray | None] = [None] * DIM
    order[r_mode] = rays3[i]
    rest = [r for j, r in enumerate(rays3) if j != i]
    for mode, r in zip(pair6, rest):
        order[mode] = r

    by_label = rays_by_label()
    if relabeling is None:
        effective = tuple(r.label if r.label in by_label else None for r in order)
    else:
        inv = np.argsort(SWAPS[relabeling])
        effective = tuple(_match_label(tuple(r.components[j] for j in inv), by_label) for r in order)
    return MeasurementSetting(
        name=name,
        labels=tuple(r.label for r in order),
        detector_projectors=tuple(projector(r) for r in order),
        relabeling=relabeling,
        topology=(pair5, pair6),
        effective_labels=effective,
    )


def _h_setting_rays(h: str, y_family: str) -> list[Ray]:
    rays = rays_by_label()
    hr = rays[h]
    y = next(rays[y_family + s] for s in "-+" if rays[y_family + s].dot(hr) == 0)
    if y_family == "y3":
        comp = Ray(h + "c", H_COMPLEMENTS[h + "c"])
    else:
        comp = Ray(f"{h}c_{y.label}", _cross(hr.components, y.components))
    return [y, comp, hr]


def measurement_settings(relabel: bool = True) -> list[MeasurementSetting]:
    """The measurement campaign: 8 direct settings plus 8 for y1/y2-h pairs.

    With ``relabel`` the y1/y2-h correlations reuse the four h-settings on a
    basis-exchanged input; otherwise they are measured directly with a
    re-routed cascade.
    """
    rays = rays_by_label()
    settings = [make_setting("Z", [rays["z1"], rays["z2"], rays["z3"]])]
    for mu in "123":
        settings.append(make_setting(f"Y{mu}", [rays["z" + mu], rays[f"y{mu}-"], rays[f"y{mu}+"]]))
    for h in H_LABELS:
        settings.append(make_setting(f"H{h[1]}", _h_setting_rays(h, "y3")))
    for swap in ("02", "12"):
        for h in H_LABELS:
            if relabel:
                settings.append(make_setting(f"H{h[1]}~{swap}", _h_setting_rays(h, "y3"), relabeling=swap))
            else:
                mu = "1" if swap == "02" else "2"
                # same effective observable pair the relabeled route yields
                target_h = _match_label(
                    tuple(rays[h].components[j] for j in np.argsort(SWAPS[swap])), rays
                )
                settings.append(make_setting(f"H{target_h[1]}-y{mu}", _h_setting_rays(target_h, "y" + mu)))
    return settings


def _unit_vector(p: Projector) -> np.ndarray:
    m = np.real_if_close(p.matrix)
    k = int(np.argmax(np.real(np.diag(m))))
    return np.real(m[:, k]) / math.sqrt(np.real(m[k, k]))


def measurement_unitary(theta5: float, theta6: float, topology=DEFAULT_TOPOLOGY) -> np.ndarray:
    pair5, pair6 = topology
    return _givens(pair6, theta6) @ _givens(pair5, theta5)


def _fold(theta: float) -> float:
    t = theta % 90.0
    return 0.0 if abs(t) < 1e-9 or abs(t - 90.0) < 1e-9 else t


def solve_measurement_angles(setting: MeasurementSetting) -> tuple[float, float]:
    """HWP5/HWP6 angles (degrees, in [0, 90)) realizing ``setting``.

    Closed form: the output mode untouched by HWP6 fixes HWP5, then the first
    HWP6 mode fixes HWP6.  Every detector is checked afterwards.
    """
    pair5, pair6 = setting.topology
    targets = [_unit_vector(p) for p in setting.detector_projectors]
    (r,) = set(range(DIM)) - set(pair6)
    if r in pair5:
        a, b = pair5
        u = targets[r]
        c, s = (u[a], -u[b]) if r == a else (u[b], u[a])
        theta5 = _fold(0.5 * math.degrees(math.atan2(s, c)))
    else:
        theta5 = 0.0
    g5 = _givens(pair5, theta5)
    p, q = pair6
    u = targets[p]
    theta6 = _fold(0.5 * math.degrees(math.atan2(-(u @ g5[q]), u @ g5[p])))

    unitary = measurement_unitary(theta5, theta6, setting.topology)
    for k, (label, t) in enumerate(zip(setting.labels, targets)):
        fid = float(abs(unitary[k] @ t) ** 2)
        if fid < 1 - 1e-10:
            raise UnrealizableSettingError(
                f"setting {setting.name}: detector D{k + 1} ({label}) reaches fidelity {fid:.6f}"
            )
    return theta5, theta6


def detection_probabilities(
    state: DensityMatrix,
    setting: MeasurementSetting,
    efficiency: float = 1.0,
    angles: tuple[float, float] | None = None,
) -> np.ndarray:
    """Probabilities of (D1, D2, D3, no click) for one heralded photon.

    The basis exchange of a relabeled setting is applied to the input.  With
    ``angles`` the cascade is propagated explicitly instead of using the
    setting's projectors.
    """
    if not 0 < efficiency <= 1:
        raise ValueError(f"efficiency must be in (0, 1], got {efficiency}")
    rho = state.permuted(setting.permutation).matrix if setting.relabeling else state.matrix
    if angles is None:
        born = np.array([np.real(np.trace(rho @ p.matrix)) for p in setting.detector_projectors])
    else:
        u = measurement_unitary(*angles, setting.topology)
        born = np.real(np.diag(u @ rho @ u.T))
    born = np.clip(born, 0.0, None)
    born = born / born.sum()
    return np.append(efficiency * born, 1 - efficiency)


# ---- file interfaces ------------------------------------------------------

def load_apparatus_config(path) -> ApparatusConfig:
    with open(path) as f:
        return ApparatusConfig.from_dict(json.load(f))


def save_apparatus_config(config: ApparatusConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(config.to_dict(), f, indent=2)


def preparation_table_csv() -> str:
    """HWP0-HWP2 angles for the nine preset states."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["state", "description", "theta_hwp0", "theta_hwp1", "theta_hwp2", "phase_randomization"])
    for name, (desc, _) in PRESET_STATES.items():
        cfg = preset_config(name)
        w.writerow([name, desc, f"{cfg.hwp0.theta:.2f}", f"{cfg.hwp1.theta:.2f}",
                    f"{cfg.hwp2.theta:.2f}", int(cfg.phase_randomization)])
    return out.getvalue()


def measurement_table_csv(relabel: bool = True) -> str:
    """HWP5/HWP6 angles and the projector read by each detector."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["setting", "theta_hwp5", "theta_hwp6", "D1", "D2", "D3", "relabeling", "hwp5_pair", "hwp6_pair"])
    for s in measurement_settings(relabel):
        t5, t6 = solve_measurement_angles(s)
        pair5, pair6 = s.topology
        w.writerow([s.name, f"{t5:.2f}", f"{t6:.2f}", *s.labels, s.relabeling or "",
                    "".join(map(str, pair5)), "".join(map(str, pair6))])
    return out.getvalue()
