"""2x2 MZI transfer matrices, ideal and under fabrication variations.

Signal order is ``P_phi -> DC1 -> P_theta -> DC2``; the matrix is
``B_DC2 @ P_theta @ B_DC1 @ P_phi``.  Arm 1 / Arm 3 are the upper arms
carrying the phi / theta heaters, Arm 2 / Arm 4 the lower arms.

Layout (local um, origin at the lower-left of a 340 x 30 um body)::

    x: [10,145] phi arms | [150,160] DC1 | [165,300] theta arms | [305,315] DC2
    y: upper arms at 22.5, lower arms at 7.5, couplers centred on 15

Variations are sampled over these rectangles; arm lengths used in the phase
terms are the configured (possibly tapered) lengths.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import photonics as ph
from .photonics import DcSpec, WaveguideSpec

logger = logging.getLogger(__name__)

NOMINAL_ARM_LENGTH = 135.0
MZI_LENGTH = 340.0
MZI_HEIGHT = 30.0


@dataclass(frozen=True)
class MziLayout:
    length: float = MZI_LENGTH
    height: float = MZI_HEIGHT
    phi_arm_x: tuple[float, float] = (10.0, 145.0)
    dc1_x: tuple[float, float] = (150.0, 160.0)
    theta_arm_x: tuple[float, float] = (165.0, 300.0)
    dc2_x: tuple[float, float] = (305.0, 315.0)
    upper_y: float = 22.5
    lower_y: float = 7.5

    def arm_rects(self, widths):
        """Local ``(x, y, w, h)`` rectangles of Arms 1-4; ``widths`` in nm, shape (..., 4)."""
        widths = np.asarray(widths, float) * 1e-3
        xs = np.array([self.phi_arm_x, self.phi_arm_x, self.theta_arm_x, self.theta_arm_x])
        ys = np.array([self.upper_y, self.lower_y, self.upper_y, self.lower_y])
        out = np.empty(widths.shape + (4,))
        out[..., 0] = xs[:, 0]
        out[..., 1] = ys - widths / 2
        out[..., 2] = xs[:, 1] - xs[:, 0]
        out[..., 3] = widths
        return out

    def dc_rects(self, dc1: DcSpec, dc2: DcSpec, width: float = ph.NOMINAL_WIDTH):
        """Footprints of both couplers: the two guides plus the gap between them."""
        yc = (self.upper_y + self.lower_y) / 2
        rects = []
        for (x0, x1), dc in ((self.dc1_x, dc1), (self.dc2_x, dc2)):
            half = (dc.gap / 2 + width) * 1e-3
            rects.append((x0, yc - half, x1 - x0, 2 * half))
        return np.array(rects)


DEFAULT_LAYOUT = MziLayout()


@dataclass(frozen=True)
class MziConfig:
    theta: float
    phi: float
    arm_widths: tuple = (ph.NOMINAL_WIDTH,) * 4
    arm_lengths: tuple = (NOMINAL_ARM_LENGTH,) * 4
    dc1: DcSpec = DcSpec()
    dc2: DcSpec = DcSpec()
    geometry: str = "strip"
    thickness: float = ph.NOMINAL_THICKNESS
    wavelength: float = ph.WAVELENGTH

    def __post_init__(self):
        if not (np.isfinite(self.theta) and np.isfinite(self.phi)):
            raise ValueError("phases must be finite")
        object.__setattr__(self, "arm_widths", tuple(float(w) for w in self.arm_widths))
        object.__setattr__(self, "arm_lengths", tuple(float(x) for x in self.arm_lengths))
        if len(self.arm_widths) != 4 or len(self.arm_lengths) != 4:
            raise ValueError("an MZI has four arms")
        lo, hi = ph.WIDTH_RANGE
        if any(not lo <= w <= hi for w in self.arm_widths):
            raise ValueError(f"arm widths must lie in [{lo}, {hi}] nm")

    def arm_spec(self, i: int) -> WaveguideSpec:
        return WaveguideSpec(self.geometry, self.arm_widths[i], self.thickness, wavelength=self.wavelength)

    def coupler_spec(self) -> WaveguideSpec:
        return WaveguideSpec(self.geometry, ph.NOMINAL_WIDTH, self.thickness, wavelength=self.wavelength)


@dataclass(frozen=True, eq=False)
class ArmVariations:
    """Mean ``(rho_w, rho_t)`` in nm per arm and per coupler.

    ``arms`` has shape ``(..., 4, 2)`` and ``dcs`` ``(..., 2, 2)`` so a single
    object can also hold the variations of a whole mesh.
    """

    arms: np.ndarray
    dcs: np.ndarray = None

    def __post_init__(self):
        arms = np.asarray(self.arms, float)
        dcs = np.zeros(arms.shape[:-2] + (2, 2)) if self.dcs is None else np.asarray(self.dcs, float)
        if arms.shape[-2:] != (4, 2) or dcs.shape[-2:] != (2, 2) or arms.shape[:-2] != dcs.shape[:-2]:
            raise ValueError("expected arms (..., 4, 2) and dcs (..., 2, 2)")
        if not (np.isfinite(arms).all() and np.isfinite(dcs).all()):
            raise ValueError("variations must be finite")
        object.__setattr__(self, "arms", arms)
        object.__setattr__(self, "dcs", dcs)

    @classmethod
    def zeros(cls, n: int | None = None) -> "ArmVariations":
        lead = () if n is None else (n,)
        return cls(np.zeros(lead + (4, 2)), np.zeros(lead + (2, 2)))

    @classmethod
    def stack(cls, items) -> "ArmVariations":
        items = list(items)
        return cls(np.stack([v.arms for v in items]), np.stack([v.dcs for v in items]))

    @classmethod
    def stack_all(cls, groups) -> "ArmVariations":
        """Concatenate batched variations along the MZI axis."""
        groups = list(groups)
        return cls(np.concatenate([g.arms for g in groups]), np.concatenate([g.dcs for g in groups]))

    def __len__(self):
        return self.arms.shape[0]

    def __getitem__(self, idx) -> "ArmVariations":
        return ArmVariations(self.arms[idx], self.dcs[idx])

    def without_thickness(self) -> "ArmVariations":
        arms, dcs = self.arms.copy(), self.dcs.copy()
        arms[..., 1] = 0.0
        dcs[..., 1] = 0.0
        return ArmVariations(arms, dcs)

    def scaled(self, factor: float) -> "ArmVariations":
        return ArmVariations(self.arms * factor, self.dcs * factor)


PHASE_REFERENCES = ("absolute", "differential")


@dataclass(frozen=True)
class PerturbationOptions:
    """How variations enter the device model.

    ``phase_reference="absolute"`` keeps every arm phase as written in the
    perturbed matrix; ``"differential"`` drops the common phase of each MZI
    (the lower-arm phases), leaving only the excess phase differences seen
    by the couplers.  ``include_dc=False`` keeps both couplers ideal.
    """

    dc_index: str = "supermode"
    include_dc: bool = True
    phase_reference: str = "absolute"

    def __post_init__(self):
        if self.dc_index not in ph.DC_INDEX_METHODS:
            raise ValueError(f"dc_index must be one of {ph.DC_INDEX_METHODS}")
        if self.phase_reference not in PHASE_REFERENCES:
            raise ValueError(f"phase_reference must be one of {PHASE_REFERENCES}")


DEFAULT_OPTIONS = PerturbationOptions()


# --------------------------------------------------------------------------
# matrices


def coupler_matrix(kappa):
    """Lossless coupler ``[[sqrt(1-k), i sqrt(k)], [i sqrt(k), sqrt(1-k)]]``; broadcasts over ``kappa``."""
    kappa = np.asarray(kappa, float)
    t = np.sqrt(1 - kappa)
    c = 1j * np.sqrt(kappa)
    return np.stack([np.stack([t, c], -1), np.stack([c, t], -1)], -2)


def ideal_transfer(theta, phi):
    """Ideal MZI matrix with 50:50 couplers; broadcasts over the phases."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    et, ep = np.exp(1j * theta), np.exp(1j * phi)
    out = np.empty(theta.shape + (2, 2), complex)
    out[..., 0, 0] = ep * (et - 1) / 2
    out[..., 0, 1] = 1j * (et + 1) / 2
    out[..., 1, 0] = 1j * ep * (et + 1) / 2
    out[..., 1, 1] = -(et - 1) / 2
    return out


def transfer_from_terms(theta, phi, arm_phase, kappa, phase_reference="absolute"):
    """Perturbed MZI matrix from its ingredients (vectorised).

    ``arm_phase[..., i]`` is ``delta_beta_i * L_i`` for Arms 1-4 and
    ``kappa[..., j]`` the actual cross-coupling of DC1 / DC2.
    """
    theta = np.asarray(theta, float)
    phi = np.asarray(phi, float)
    a = np.asarray(arm_phase, float)
    if phase_reference == "differential":
        a = a - a[..., [1, 1, 3, 3]]
    b1 = coupler_matrix(np.asarray(kappa)[..., 0])
    b2 = coupler_matrix(np.asarray(kappa)[..., 1])
    p_phi = np.exp(1j * np.stack([phi + a[..., 0], a[..., 1]], -1))
    p_theta = np.exp(1j * np.stack([theta + a[..., 2], a[..., 3]], -1))
    # B2 @ diag(p_theta) @ B1 @ diag(p_phi)
    m = b1 * p_phi[..., None, :]
    m = p_theta[..., :, None] * m
    return b2 @ m


# --------------------------------------------------------------------------
# variation terms


def arm_phases(config: MziConfig, variations: ArmVariations, model) -> np.ndarray:
    """``delta_beta_i * L_i`` (rad) for Arms 1-4."""
    out = np.empty(4)
    for i in range(4):
        rho_w, rho_t = variations.arms[i]
        out[i] = ph.delta_beta(model, config.arm_spec(i), rho_w, rho_t) * config.arm_lengths[i]
    return out


def arm_phase_noise(config: MziConfig, variations: ArmVariations, model) -> tuple[float, float]:
    """Excess phase differences at the inputs of DC1 and DC2 (rad)."""
    a = arm_phases(config, variations, model)
    return abs(a[0] - a[1]), abs(a[2] - a[3])


def _clamp_kappa(kappa):
    clamped = np.clip(kappa, 0.0, 1.0)
    n_bad = int(np.count_nonzero(clamped != kappa))
    if n_bad:
        logger.warning("clamped %d coupling coefficient(s) into [0, 1]", n_bad)
    return clamped


def coupler_kappas(config: MziConfig, variations: ArmVariations, model, options=DEFAULT_OPTIONS):
    """Actual cross-couplings ``(kappa1', kappa2')`` of the two couplers."""
    nominal = np.array([config.dc1.kappa, config.dc2.kappa])
    if not options.include_dc:
        return nominal
    spec = config.coupler_spec()
    dk = []
    for j, dc in enumerate((config.dc1, config.dc2)):
        rho_w, rho_t = variations.dcs[j]
        dn = ph.delta_n_dc(model, dc, spec, rho_w, rho_t, options.dc_index)
        dk.append(ph.delta_kappa(dc, dn, config.wavelength))
    return _clamp_kappa(nominal + np.array(dk))


def perturbed_transfer(config: MziConfig, variations: ArmVariations, model, options=DEFAULT_OPTIONS):
    """MZI matrix with phase errors on all four arms and deviated couplers."""
    a = arm_phases(config, variations, model)
    k = coupler_kappas(config, variations, model, options)
    return transfer_from_terms(config.theta, config.phi, a, k, options.phase_reference)


# --------------------------------------------------------------------------
# vectorised form for meshes


@dataclass(frozen=True, eq=False)
class ConfigArray:
    """Geometry and phases of ``n`` MZIs stored column-wise.

    Iterating yields :class:`MziConfig` objects.
    """

    theta: np.ndarray
    phi: np.ndarray
    widths: np.ndarray
    lengths: np.ndarray
    geometry: np.ndarray
    dc1: DcSpec = DcSpec()
    dc2: DcSpec = DcSpec()
    thickness: float = ph.NOMINAL_THICKNESS
    wavelength: float = ph.WAVELENGTH
    region: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.theta)
        object.__setattr__(self, "theta", np.asarray(self.theta, float))
        object.__setattr__(self, "phi", np.asarray(self.phi, float))
        object.__setattr__(self, "widths", np.broadcast_to(np.asarray(self.widths, float), (n, 4)).copy())
        object.__setattr__(self, "lengths", np.broadcast_to(np.asarray(self.lengths, float), (n, 4)).copy())
        object.__setattr__(self, "geometry", np.broadcast_to(np.asarray(self.geometry, dtype=object), (n,)).copy())
        if self.region is None:
            object.__setattr__(self, "region", np.full(n, -1))

    @classmethod
    def nominal(cls, theta, phi, **kw) -> "ConfigArray":
        n = len(theta)
        return cls(theta, phi, np.full((n, 4), ph.NOMINAL_WIDTH), np.full((n, 4), NOMINAL_ARM_LENGTH),
                   np.full(n, "strip", dtype=object), **kw)

    @classmethod
    def from_configs(cls, configs) -> "ConfigArray":
        configs = list(configs)
        if not configs:
            raise ValueError("no configurations")
        c0 = configs[0]
        return cls(
            [c.theta for c in configs], [c.phi for c in configs],
            [c.arm_widths for c in configs], [c.arm_lengths for c in configs],
            [c.geometry for c in configs], c0.dc1, c0.dc2, c0.thickness, c0.wavelength,
        )

    def __len__(self):
        return len(self.theta)

    def __getitem__(self, i) -> MziConfig:
        return MziConfig(
            float(self.theta[i]), float(self.phi[i]), tuple(self.widths[i]), tuple(self.lengths[i]),
            self.dc1, self.dc2, str(self.geometry[i]), self.thickness, self.wavelength,
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def with_phases(self, theta, phi) -> "ConfigArray":
        return ConfigArray(theta, phi, self.widths, self.lengths, self.geometry, self.dc1, self.dc2,
                           self.thickness, self.wavelength, self.region)


def _arm_sensitivities(model, geometry, widths, thickness, wavelength):
    """Per-arm ``(dn/dw, dn/dt)`` arrays, shape ``widths.shape``."""
    d_w = np.empty(widths.shape)
    d_t = np.empty(widths.shape)
    geometry = np.broadcast_to(geometry[:, None], widths.shape)
    keys = {}
    for idx in np.ndindex(widths.shape):
        key = (geometry[idx], float(widths[idx]))
        if key not in keys:
            spec = WaveguideSpec(key[0], key[1], thickness, wavelength=wavelength)
            keys[key] = ph.sensitivities(model, spec)
        d_w[idx], d_t[idx] = keys[key]
    return d_w, d_t


def batch_terms(configs: ConfigArray, variations: ArmVariations, model, options=DEFAULT_OPTIONS):
    """Arm phases ``(n, 4)`` and coupler kappas ``(n, 2)`` for a set of MZIs."""
    n = len(configs)
    if variations.arms.shape != (n, 4, 2):
        raise ValueError(f"expected variations for {n} MZIs, got {variations.arms.shape[:-2]}")
    d_w, d_t = _arm_sensitivities(model, configs.geometry, configs.widths, configs.thickness, configs.wavelength)
    k0 = 2 * np.pi / (configs.wavelength * 1e-3)
    phases = k0 * (d_w * variations.arms[..., 0] + d_t * variations.arms[..., 1]) * configs.lengths
    kappa = np.tile([configs.dc1.kappa, configs.dc2.kappa], (n, 1)).astype(float)
    if options.include_dc:
        for geometry in np.unique(configs.geometry):
            sel = configs.geometry == geometry
            spec = WaveguideSpec(geometry, ph.NOMINAL_WIDTH, configs.thickness, wavelength=configs.wavelength)
            for j, dc in enumerate((configs.dc1, configs.dc2)):
                s_w, s_t = ph.dc_index_sensitivities(model, dc, spec, options.dc_index)
                dn = s_w * variations.dcs[sel, j, 0] + s_t * variations.dcs[sel, j, 1]
                kappa[sel, j] += ph.delta_kappa(dc, dn, configs.wavelength)
        kappa = _clamp_kappa(kappa)
    return phases, kappa


def batch_transfer(configs: ConfigArray, variations: ArmVariations | None, model=None, options=DEFAULT_OPTIONS):
    """Transfer matrices ``(n, 2, 2)`` of a set of MZIs; ideal when ``variations`` is None."""
    if variations is None:
        return ideal_transfer(configs.theta, configs.phi)
    phases, kappa = batch_terms(configs, variations, model, options)
    return transfer_from_terms(configs.theta, configs.phi, phases, kappa, options.phase_reference)
