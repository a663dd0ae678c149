"""Variation-tolerant MZI waveguide widths.

Region-based designs know the variations of each group of adjacent MZIs
and pick per-arm widths that equalise the excess phase of opposite arms.
Two objectives are offered.  ``"mean"`` cancels the excess phase at the
region-mean deviations.  ``"mse"`` (the default) minimises the mean squared
excess phase over the MZIs of the region; it equals ``"mean"`` for
single-MZI regions but does not reward width pairs that only cancel the
average while amplifying every individual MZI's common-mode deviation.

Worst-case designs know nothing about the map and simply widen every arm as
far as an area budget allows, since wider strip waveguides are less
sensitive to width errors.

Arms that change width are joined to the 470 nm routing by tapers of
1 um per 100 nm of width change, which lengthen the arm.  Couplers are
treated as ideal while optimising.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import photonics as ph
from .mesh import LayerConfigs, LayerVariations, Placement, sample_mzi_vars
from .mzi import NOMINAL_ARM_LENGTH, ArmVariations, ConfigArray
from .varmap import MapSampler, VariationMap

logger = logging.getLogger(__name__)

REGION_SIZES = {"R1": 1, "R3": 3, "R6": 6, "R12": 12}
OBJECTIVES = ("mse", "mean")
SEARCH_WIDTHS = np.arange(ph.WIDTH_RANGE[0], ph.WIDTH_RANGE[1] + 1, 1.0)
# excess phases closer than this (rad) count as ties; far below any physical
# effect but above the rounding left by map sampling
TIE_TOL = 1e-9


# --------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class RegionPolicy:
    region_size: str = "R1"

    def __post_init__(self):
        if self.region_size not in REGION_SIZES:
            raise ValueError(f"region size must be one of {sorted(REGION_SIZES)}")

    @property
    def size(self) -> int:
        return REGION_SIZES[self.region_size]


def snake_order(placement: Placement) -> np.ndarray:
    """Indices of ``placement`` along a row-band boustrophedon path.

    A band is one 60 um tall strip of the mesh (the two port rows that a
    column of MZIs spans); bands are walked bottom to top, alternating
    left-to-right and right-to-left, so consecutive MZIs are neighbours.
    """
    b = placement.boxes
    band = np.floor((b[:, 1] - b[:, 1].min()) / 60.0 + 1e-9).astype(int)
    direction = np.where(band % 2 == 0, 1.0, -1.0)
    return np.lexsort((b[:, 1], direction * b[:, 0], band))


def group_regions(placements, policy: RegionPolicy) -> np.ndarray:
    """Region id of every MZI of the concatenated ``placements``.

    Regions never straddle two meshes; each mesh is cut into consecutive
    chunks of ``policy.size`` MZIs along :func:`snake_order`.
    """
    ids = []
    next_id = 0
    for p in placements:
        order = snake_order(p)
        rid = np.empty(len(p), int)
        rid[order] = next_id + np.arange(len(p)) // policy.size
        next_id = rid.max() + 1
        ids.append(rid)
    return np.concatenate(ids)


def region_means(variations: ArmVariations, region: np.ndarray):
    """Per-region, per-arm mean variations, shape ``(n_regions, 4, 2)``."""
    n_reg = region.max() + 1
    counts = np.bincount(region, minlength=n_reg)
    if np.any(counts == 0):
        raise ValueError("empty region")
    out = np.zeros((n_reg, 4, 2))
    np.add.at(out, region, variations.arms)
    return out / counts[:, None, None]


# --------------------------------------------------------------------------
# designs


@dataclass(frozen=True, eq=False)
class TolerantDesign:
    """Per-MZI arm widths (nm) and the resulting tapers and arm lengths (um)."""

    widths: np.ndarray
    geometry: str = "strip"
    region: np.ndarray | None = None

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.widths, float))
        lo, hi = ph.WIDTH_RANGE
        if w.shape[-1] != 4 or np.any(w < lo) or np.any(w > hi):
            raise ValueError(f"widths must be (n, 4) within [{lo}, {hi}] nm")
        if self.geometry not in ph.GEOMETRIES:
            raise ValueError(f"geometry must be one of {ph.GEOMETRIES}")
        object.__setattr__(self, "widths", w)
        reg = np.arange(len(w)) if self.region is None else np.asarray(self.region, int)
        object.__setattr__(self, "region", reg)

    def __len__(self):
        return len(self.widths)

    @property
    def taper_lengths(self):
        return ph.taper_length(ph.NOMINAL_WIDTH, self.widths)

    @property
    def arm_lengths(self):
        return NOMINAL_ARM_LENGTH + self.taper_lengths

    @property
    def area_overhead(self) -> float:
        return float(np.mean(area_overhead(self.widths)))

    def fan_out(self, n: int) -> "TolerantDesign":
        """Repeat a single-MZI design for ``n`` MZIs."""
        if len(self) != 1:
            raise ValueError("only single designs can be fanned out")
        return TolerantDesign(np.repeat(self.widths, n, axis=0), self.geometry, np.zeros(n, int))

    def to_dict(self) -> dict:
        rows = [
            {"mzi": i, "region": int(r), "widths": list(map(float, w)),
             "taper_lengths": list(map(float, t)), "arm_lengths": list(map(float, a))}
            for i, (r, w, t, a) in enumerate(zip(self.region, self.widths, self.taper_lengths, self.arm_lengths))
        ]
        return {"format": "spnn-fpv/tolerant-design", "geometry": self.geometry,
                "area_overhead": self.area_overhead, "mzis": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "TolerantDesign":
        rows = data["mzis"]
        return cls([r["widths"] for r in rows], data["geometry"], [r["region"] for r in rows])

    @classmethod
    def from_json(cls, text: str) -> "TolerantDesign":
        return cls.from_dict(json.loads(text))


def nominal_design(n: int, geometry: str = "strip") -> TolerantDesign:
    return TolerantDesign(np.full((n, 4), ph.NOMINAL_WIDTH), geometry)


def area_overhead(widths):
    """Extra waveguide area of widened arms relative to four 470 nm x 135 um arms.

    Each arm counts ``w * 135`` for its straight section plus its taper at
    the mean of the two end widths.
    """
    w = np.asarray(widths, float)
    taper = ph.taper_length(ph.NOMINAL_WIDTH, w)
    area = w * NOMINAL_ARM_LENGTH + 0.5 * (w + ph.NOMINAL_WIDTH) * taper
    nominal = ph.NOMINAL_WIDTH * NOMINAL_ARM_LENGTH
    return (area.sum(axis=-1) - 4 * nominal) / (4 * nominal)


# --------------------------------------------------------------------------
# region search


def _phase_tables(model, geometry, widths, thickness, wavelength):
    """``k0 * dn/dw * L`` and ``k0 * dn/dt * L`` on the search grid."""
    d_w, d_t = ph.width_sensitivity_table(model, geometry, widths, thickness, wavelength)
    k0 = 2 * np.pi / (wavelength * 1e-3)
    length = ph.arm_length(widths)
    return k0 * np.asarray(d_w) * length, k0 * np.asarray(d_t) * length


def _nominal_index(widths):
    hit = np.flatnonzero(widths == ph.NOMINAL_WIDTH)
    return int(hit[0]) if len(hit) else None


def _best_pair(f1, f2, widths):
    """Index pair minimising ``|f1[i] - f2[j]|``; ties go to least taper, then narrowest."""
    order = np.argsort(f2, kind="stable")
    s2 = f2[order]
    pos = np.searchsorted(s2, f1)
    lo = np.clip(pos - 1, 0, len(s2) - 1)
    hi = np.clip(pos, 0, len(s2) - 1)
    best = np.minimum(np.abs(f1 - s2[lo]), np.abs(f1 - s2[hi])).min()
    cut = best + TIE_TOL
    n0 = _nominal_index(widths)
    if n0 is not None and abs(f1[n0] - f2[n0]) <= cut:
        return n0, n0  # nothing beats zero taper
    a = np.searchsorted(s2, f1 - cut, side="left")
    b = np.searchsorted(s2, f1 + cut, side="right")
    counts = b - a
    i = np.repeat(np.arange(len(f1)), counts)
    j = order[np.concatenate([np.arange(x, y) for x, y in zip(a, b) if y > x])]
    keep = np.abs(f1[i] - f2[j]) <= cut
    i, j = i[keep], j[keep]
    dev = np.abs(widths - ph.NOMINAL_WIDTH)
    k = np.lexsort((widths[i] + widths[j], dev[i] + dev[j]))[0]
    return i[k], j[k]


def optimize_stage(rho_a, rho_b, tables, widths=SEARCH_WIDTHS):
    """Widths of one opposite-arm pair given the mean ``(rho_w, rho_t)`` of each arm."""
    g_w, g_t = tables
    f1 = g_w * rho_a[0] + g_t * rho_a[1]
    f2 = g_w * rho_b[0] + g_t * rho_b[1]
    i, j = _best_pair(f1, f2, widths)
    return widths[i], widths[j], abs(f1[i] - f2[j])


def stage_objective(widths4, rho4, model, geometry="strip",
                    thickness=ph.NOMINAL_THICKNESS, wavelength=ph.WAVELENGTH) -> float:
    """``|a1 - a2| + |a3 - a4|`` with ``a_i = delta_beta_i * L_i`` for one MZI."""
    a = []
    for w, (rw, rt) in zip(widths4, rho4):
        spec = ph.WaveguideSpec(geometry, w, thickness, wavelength=wavelength)
        a.append(ph.delta_beta(model, spec, rw, rt) * ph.arm_length(w))
    return abs(a[0] - a[1]) + abs(a[2] - a[3])


def _pick(cost, widths, scale):
    """Argmin of a ``(len(widths), len(widths))`` mean-square cost; ties go to least taper, then narrowest.

    ``scale`` bounds the magnitude of the terms that were summed into ``cost``.
    """
    best = max(cost.min(), 0.0)
    tol = 2 * TIE_TOL * np.sqrt(best) + TIE_TOL**2 + 64 * np.finfo(float).eps * scale
    n0 = _nominal_index(widths)
    if n0 is not None and cost[n0, n0] <= best + tol:
        return n0, n0
    i, j = np.nonzero(cost <= best + tol)
    dev = np.abs(widths - ph.NOMINAL_WIDTH)
    k = np.lexsort((widths[i] + widths[j], dev[i] + dev[j]))[0]
    return i[k], j[k]


def optimize_stage_mse(rho_a, rho_b, tables, widths=SEARCH_WIDTHS):
    """Widths of one arm pair minimising the mean squared excess phase over a region.

    ``rho_a`` and ``rho_b`` are ``(n, 2)`` per-MZI ``(rho_w, rho_t)`` of the two
    arms.  The cost only needs the 2x2 second moments of the deviations, so
    the full grid costs one outer product.  Returns ``(w1, w2, rms residual)``.
    """
    a = np.atleast_2d(np.asarray(rho_a, float))
    b = np.atleast_2d(np.asarray(rho_b, float))
    if len(a) == 1:
        w1, w2, res = optimize_stage(a[0], b[0], tables, widths)
        return w1, w2, res
    G = np.stack(tables, axis=1)
    n = len(a)
    qa = np.einsum("ik,kl,il->i", G, a.T @ a / n, G)
    qb = np.einsum("ik,kl,il->i", G, b.T @ b / n, G)
    cost = qa[:, None] + qb[None, :] - 2 * (G @ (a.T @ b / n)) @ G.T
    i, j = _pick(cost, widths, qa.max() + qb.max())
    return widths[i], widths[j], float(np.sqrt(max(cost[i, j], 0.0)))


def optimize_regions(means, model, geometry="strip", thickness=ph.NOMINAL_THICKNESS,
                     wavelength=ph.WAVELENGTH, widths=SEARCH_WIDTHS) -> np.ndarray:
    """Exhaustive per-region width search at the region means; ``means`` is ``(n_regions, 4, 2)``."""
    tables = _phase_tables(model, geometry, widths, thickness, wavelength)
    out = np.empty((len(means), 4))
    for r, m in enumerate(means):
        out[r, 0], out[r, 1], _ = optimize_stage(m[0], m[1], tables, widths)
        out[r, 2], out[r, 3], _ = optimize_stage(m[2], m[3], tables, widths)
    return out


def optimize_regions_mse(variations: ArmVariations, region, model, geometry="strip",
                         thickness=ph.NOMINAL_THICKNESS, wavelength=ph.WAVELENGTH,
                         widths=SEARCH_WIDTHS) -> np.ndarray:
    """Exhaustive per-region search of the mean squared excess phase."""
    tables = _phase_tables(model, geometry, widths, thickness, wavelength)
    region = np.asarray(region)
    n_reg = region.max() + 1
    if np.any(np.bincount(region, minlength=n_reg) == 0):
        raise ValueError("empty region")
    out = np.empty((n_reg, 4))
    for r in range(n_reg):
        arms = variations.arms[region == r]
        out[r, 0], out[r, 1], _ = optimize_stage_mse(arms[:, 0], arms[:, 1], tables, widths)
        out[r, 2], out[r, 3], _ = optimize_stage_mse(arms[:, 2], arms[:, 3], tables, widths)
    return out


def region_optimize(placements, vmap: VariationMap, policy: RegionPolicy, geometry: str, model,
                    variations: ArmVariations | None = None, thickness=ph.NOMINAL_THICKNESS,
                    wavelength=ph.WAVELENGTH, objective: str = "mse") -> TolerantDesign:
    """Region-based-tolerant design for every MZI of ``placements``.

    ``placements`` is a sequence of meshes (e.g. the Vh, Sigma and U arrays of
    each layer).  Pass ``variations`` to reuse already-sampled arm values in
    the same order as the concatenated placements.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    placements = list(placements)
    if variations is None:
        sampler = MapSampler(vmap)
        variations = ArmVariations.stack_all(
            [sample_mzi_vars(p, vmap, sampler=sampler) for p in placements]
        )
    region = group_regions(placements, policy)
    if objective == "mean":
        reg_w = optimize_regions(region_means(variations, region), model, geometry, thickness, wavelength)
    else:
        reg_w = optimize_regions_mse(variations, region, model, geometry, thickness, wavelength)
    return TolerantDesign(reg_w[region], geometry, region)


# --------------------------------------------------------------------------
# worst case


def worst_case_optimize(area_budget: float, geometry: str = "strip", model=None,
                        widths=SEARCH_WIDTHS) -> TolerantDesign:
    """Widest equal-arm design whose :func:`area_overhead` stays within ``area_budget``.

    ``model`` is accepted for interface symmetry; the choice depends only on
    the area accounting.
    """
    if not area_budget >= 0:
        raise ValueError("area budget must be non-negative")
    widths = np.asarray(widths, float)
    over = area_overhead(np.repeat(widths[:, None], 4, axis=1))
    ok = widths[(over <= area_budget + 1e-12) & (widths >= ph.NOMINAL_WIDTH)]
    if ok.size == 0:
        logger.warning("no width fits an area budget of %g; keeping %g nm", area_budget, ph.NOMINAL_WIDTH)
        w = ph.NOMINAL_WIDTH
    else:
        w = ok.max()
    return TolerantDesign(np.full((1, 4), w), geometry, np.zeros(1, int))


# --------------------------------------------------------------------------
# applying designs


def network_placements(layer_placements) -> list[Placement]:
    """Flatten layer placements into the canonical MZI order: per layer Vh, Sigma, U."""
    out = []
    for lp in layer_placements:
        out.extend([lp.Vh, lp.sigma, lp.U])
    return out


def network_mzi_count(decs) -> int:
    return sum(d.mzi_count for d in decs)


def apply_design(decs, design: TolerantDesign, thickness=ph.NOMINAL_THICKNESS,
                 wavelength=ph.WAVELENGTH) -> list[LayerConfigs]:
    """Per-layer MZI configurations with the design's widths and arm lengths.

    Phases come from the decompositions and are left untouched.
    """
    decs = list(decs)
    n = network_mzi_count(decs)
    if len(design) == 1 and n != 1:
        design = design.fan_out(n)
    if len(design) != n:
        raise ValueError(f"design covers {len(design)} MZIs, network has {n}")
    widths, lengths = design.widths, design.arm_lengths
    out = []
    k = 0

    def take(theta, phi):
        nonlocal k
        m = len(theta)
        ca = ConfigArray(theta, phi, widths[k:k + m], lengths[k:k + m], design.geometry,
                         thickness=thickness, wavelength=wavelength, region=design.region[k:k + m])
        k += m
        return ca

    for d in decs:
        vh = take(d.Vh_program.theta, d.Vh_program.phi)
        sg = take(d.sigma_theta, d.sigma_phi)
        u = take(d.U_program.theta, d.U_program.phi)
        out.append(LayerConfigs(U=u, Vh=vh, sigma=sg))
    return out


def split_variations(decs, variations: ArmVariations):
    """Cut network-ordered variations back into per-layer ``LayerVariations``."""
    out = []
    k = 0
    for d in decs:
        sizes = (len(d.Vh_program), len(d.sigma), len(d.U_program))
        parts = []
        for m in sizes:
            parts.append(variations[k:k + m])
            k += m
        out.append(LayerVariations(U=parts[2], Vh=parts[0], sigma=parts[1]))
    if k != len(variations):
        raise ValueError("variation count does not match the network")
    return out
