"""Monte Carlo pipelines: maps -> per-MZI variations -> designs -> deviated weights -> metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import unitary_group

from . import mesh, metrics
from . import photonics as ph
from .mzi import ArmVariations, ConfigArray, PerturbationOptions
from .optimizer import (
    OBJECTIVES, REGION_SIZES, RegionPolicy, TolerantDesign, apply_design, area_overhead, nominal_design, region_optimize,
    split_variations, worst_case_optimize,
)
from .spnn import SpnnModel, accuracy_of, decompose_model, phase_shifter_count
from .varmap import MapSampler, VariationMap, VariationParams, generate_map

logger = logging.getLogger(__name__)

VARIATION_MODES = ("W", "W+T")

# Network pipelines compare excess phases only: the common phase of an MZI's
# two arms is absorbed when the mesh is calibrated (see README).
NETWORK_OPTIONS = PerturbationOptions(phase_reference="differential")


@dataclass(frozen=True)
class Policy:
    """A design choice evaluated on every trial: no optimisation, a region design or a worst-case width."""

    name: str
    kind: str = "none"  # "none", "region" or "worst-case"
    region_size: str | None = None
    geometry: str = "strip"
    area_budget: float | None = None
    objective: str = "mse"

    @classmethod
    def parse(cls, text: str) -> "Policy":
        """``none``, ``R3-strip``, ``R6-ridge``, ``R3-strip:mean`` or ``wc-0.04`` (worst case, 4 % budget)."""
        if text == "none":
            return cls("none")
        if text.startswith("wc-"):
            try:
                budget = float(text[3:])
            except ValueError:
                raise ValueError(f"bad worst-case policy {text!r}") from None
            return cls(text, "worst-case", area_budget=budget)
        body, _, objective = text.partition(":")
        size, _, geom = body.partition("-")
        geom = geom or "strip"
        objective = objective or "mse"
        if size not in REGION_SIZES or geom not in ph.GEOMETRIES or objective not in OBJECTIVES:
            raise ValueError(f"bad policy {text!r}")
        return cls(text, "region", size, geom, objective=objective)


FIG6_POLICIES = tuple(Policy.parse(p) for p in (
    "none", "R1-strip", "R3-strip", "R6-strip", "R12-strip", "R3-ridge", "R6-ridge", "R12-ridge",
))
FIG5_POLICIES = tuple(Policy.parse(p) for p in ("none", "R12-ridge", "R6-ridge", "R3-ridge", "R1-ridge"))


@dataclass(eq=False)
class PhotonicNetwork:
    """A set of layer decompositions placed on a die."""

    decs: list
    placements: list
    extent: tuple

    @classmethod
    def build(cls, decs, origin=(0.0, 0.0)) -> "PhotonicNetwork":
        placements = mesh.place_network(decs, origin)
        return cls(list(decs), placements, mesh.network_extent(placements))

    @property
    def flat_placements(self):
        out = []
        for lp in self.placements:
            out.extend([lp.Vh, lp.sigma, lp.U])
        return out

    @property
    def mzi_count(self) -> int:
        return sum(d.mzi_count for d in self.decs)

    @property
    def phase_shifters(self) -> int:
        return phase_shifter_count(self.decs)

    def die_map(self, params: VariationParams) -> VariationMap:
        """Map over the network's bounding box plus one cell on every side."""
        d = params.mesh_size
        x0, y0, x1, y1 = self.extent
        return generate_map(params, x1 - x0 + 2 * d, y1 - y0 + 2 * d, (x0 - d, y0 - d))

    def sample(self, vmap: VariationMap, thickness: str = "shared") -> ArmVariations:
        sampler = MapSampler(vmap)
        return ArmVariations.stack_all(
            [mesh.sample_mzi_vars(p, vmap, sampler=sampler, thickness=thickness) for p in self.flat_placements]
        )

    def nominal_weights(self):
        return [d.nominal() for d in self.decs]

    def design(self, policy: Policy, variations: ArmVariations, model) -> TolerantDesign:
        if policy.kind == "none":
            return nominal_design(self.mzi_count, policy.geometry)
        if policy.kind == "worst-case":
            return worst_case_optimize(policy.area_budget, policy.geometry, model).fan_out(self.mzi_count)
        return region_optimize(self.flat_placements, None, RegionPolicy(policy.region_size),
                               policy.geometry, model, variations=variations, objective=policy.objective)

    def deviated_weights(self, variations: ArmVariations, model, design: TolerantDesign | None = None,
                         options: PerturbationOptions = NETWORK_OPTIONS):
        design = design or nominal_design(self.mzi_count)
        configs = apply_design(self.decs, design)
        per_layer = split_variations(self.decs, variations)
        return [
            mesh.deviated_weight(d, lv.U, lv.Vh, lv.sigma, model, cfg, options)
            for d, lv, cfg in zip(self.decs, per_layer, configs)
        ]


def apply_mode(variations: ArmVariations, mode: str) -> ArmVariations:
    if mode not in VARIATION_MODES:
        raise ValueError(f"variation mode must be one of {VARIATION_MODES}")
    return variations if mode == "W+T" else variations.without_thickness()


@dataclass
class TrialResult:
    policy: str
    mode: str
    sigma_scale: float
    corr_length: float
    trial: int
    seed: int
    accuracy: float
    layer_rvd: list
    phase_shifters: int

    @property
    def mean_rvd(self) -> float:
        return float(np.mean(self.layer_rvd))

    @property
    def normalized_rvd(self) -> float:
        return self.mean_rvd / self.phase_shifters

    def row(self) -> dict:
        d = {k: getattr(self, k) for k in ("policy", "mode", "sigma_scale", "corr_length", "trial", "seed",
                                            "accuracy", "mean_rvd", "normalized_rvd")}
        for i, r in enumerate(self.layer_rvd):
            d[f"rvd_layer{i + 1}"] = r
        return d


def trial_seed(base: int, sigma_scale: float, corr_length: float, trial: int) -> int:
    """Deterministic per-trial seed; policies share it so they see the same die."""
    ss = np.random.SeedSequence([base, int(round(sigma_scale * 1000)), int(round(corr_length)), trial])
    return int(ss.generate_state(1)[0])


def run_network_trials(model: SpnnModel, X, y, policies, model_neff, sigma_scales=(1.0,),
                       corr_lengths=(100.0, 1000.0), modes=VARIATION_MODES, trials: int = 10, seed: int = 0,
                       base_params: VariationParams = VariationParams(),
                       options: PerturbationOptions = NETWORK_OPTIONS,
                       network: PhotonicNetwork | None = None, progress=None) -> list[TrialResult]:
    """Accuracy and RVD for every (sigma scale, correlation length, trial, mode, policy)."""
    net = network or PhotonicNetwork.build(decompose_model(model))
    nominal = net.nominal_weights()
    out = []
    for s in sigma_scales:
        for l in corr_lengths:
            for t in range(trials):
                sd = trial_seed(seed, s, l, t)
                params = replace(base_params.scaled(s), corr_length=l, seed=sd)
                raw = net.sample(net.die_map(params))
                for mode in modes:
                    v = apply_mode(raw, mode)
                    for pol in policies:
                        design = net.design(pol, v, model_neff)
                        W = net.deviated_weights(v, model_neff, design, options)
                        rv = [metrics.rvd(a, b) for a, b in zip(nominal, W)]
                        acc = accuracy_of(W, X, y)
                        out.append(TrialResult(pol.name, mode, s, l, t, sd, acc, rv, net.phase_shifters))
                if progress:
                    progress(f"sigma x{s} l={l:g} trial {t + 1}/{trials} done")
    return out


def monte_carlo_accuracy(model: SpnnModel, X, y, map_params: VariationParams, policy: Policy, model_neff,
                         trials: int = 10, mode: str = "W+T", seed: int = 0,
                         options: PerturbationOptions = NETWORK_OPTIONS, network=None):
    """``(mean, std)`` accuracy over ``trials`` fresh die maps."""
    res = run_network_trials(model, X, y, [policy], model_neff, (1.0,), (map_params.corr_length,), (mode,),
                             trials, seed, map_params, options, network)
    acc = np.array([r.accuracy for r in res])
    return float(acc.mean()), float(acc.std())


def summarize(results, keys=("sigma_scale", "corr_length", "mode", "policy")) -> list[dict]:
    """Mean / std of accuracy and RVD per group, in first-seen order."""
    groups: dict = {}
    for r in results:
        groups.setdefault(tuple(getattr(r, k) for k in keys), []).append(r)
    rows = []
    for key, items in groups.items():
        acc = np.array([r.accuracy for r in items])
        rv = np.array([r.normalized_rvd for r in items])
        row = dict(zip(keys, key))
        row.update(trials=len(items), accuracy_mean=float(acc.mean()), accuracy_std=float(acc.std()),
                   normalized_rvd_mean=float(rv.mean()), mean_rvd=float(np.mean([r.mean_rvd for r in items])))
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# unitary statistics


def haar_unitaries(n: int, count: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [unitary_group.rvs(n, random_state=rng) for _ in range(count)]


def unitary_rvds(unitaries, policy: Policy, model_neff, map_params: VariationParams, trials: int = 1,
                 mode: str = "W+T", seed: int = 0, options: PerturbationOptions = NETWORK_OPTIONS):
    """RVD of each unitary's mesh under ``trials`` maps, shape ``(len(unitaries), trials)``."""
    out = np.zeros((len(unitaries), trials))
    for i, U in enumerate(unitaries):
        prog = mesh.clements_decompose(U)
        pl = mesh.place_oiu(prog.size)
        x0, y0, x1, y1 = pl.extent
        d = map_params.mesh_size
        ref = mesh.reconstruct(prog)
        for t in range(trials):
            params = replace(map_params, seed=trial_seed(seed, i, map_params.corr_length, t))
            if params.sigma_w == 0 and params.sigma_t == 0:
                continue
            vmap = generate_map(params, x1 - x0 + 2 * d, y1 - y0 + 2 * d, (x0 - d, y0 - d))
            v = apply_mode(mesh.sample_mzi_vars(pl, vmap), mode)
            if policy.kind == "region":
                des = region_optimize([pl], None, RegionPolicy(policy.region_size), policy.geometry,
                                      model_neff, variations=v, objective=policy.objective)
            elif policy.kind == "worst-case":
                des = worst_case_optimize(policy.area_budget, policy.geometry).fan_out(len(prog))
            else:
                des = nominal_design(len(prog), policy.geometry)
            cfg = ConfigArray(prog.theta, prog.phi, des.widths, des.arm_lengths, des.geometry)
            out[i, t] = metrics.rvd(ref, mesh.reconstruct(prog, v, model_neff, cfg, options))
    return out


def rvd_distribution(unitaries, map_params: VariationParams, policy: Policy, model_neff, trials: int = 1,
                     mode: str = "W+T", seed: int = 0, options: PerturbationOptions = NETWORK_OPTIONS):
    """Box-plot statistics of RVD over ``unitaries x trials``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    vals = unitary_rvds(unitaries, policy, model_neff, map_params, trials, mode, seed, options)
    return metrics.box_stats(vals), vals


# --------------------------------------------------------------------------
# worst-case table


def worst_case_table(model: SpnnModel, X, y, model_neff, budgets=(0.01, 0.02, 0.04, 0.08, 0.16, 0.32),
                     corr_lengths=(100.0, 1000.0), trials: int = 5, seed: int = 0,
                     base_params: VariationParams = VariationParams(),
                     options: PerturbationOptions = NETWORK_OPTIONS, network=None) -> list[dict]:
    """Width, arm length and width-only accuracy before / after widening for each budget."""
    net = network or PhotonicNetwork.build(decompose_model(model))
    policies = [Policy("none")] + [Policy(f"wc-{b:g}", "worst-case", area_budget=b) for b in budgets]
    res = run_network_trials(model, X, y, policies, model_neff, (1.0,), corr_lengths, ("W",), trials, seed,
                             base_params, options, net)
    rows = []
    for b, pol in zip(budgets, policies[1:]):
        w = float(worst_case_optimize(b).widths[0, 0])
        row = {"area_budget": b, "width": w, "arm_length": float(ph.arm_length(w)),
               "area_overhead": float(area_of(w))}
        for l in corr_lengths:
            pre = [r.accuracy for r in res if r.policy == "none" and r.corr_length == l]
            post = [r.accuracy for r in res if r.policy == pol.name and r.corr_length == l]
            row[f"pre_accuracy_l{l:g}"] = float(np.mean(pre))
            row[f"post_accuracy_l{l:g}"] = float(np.mean(post))
        rows.append(row)
    return rows


def area_of(width: float) -> float:
    return float(area_overhead(np.full(4, width)))
