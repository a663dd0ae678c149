"""Waveguide physics surrogates.

Everything downstream talks to an effective-index model through
:func:`n_eff` / :func:`dn_eff`; two models are shipped:

* :class:`EimModel` -- an analytic effective-index-method evaluator for strip
  and shallow-etched ridge waveguides (vertical TE slab, then lateral TM slab).
* :class:`TableModel` -- bilinear interpolation in externally computed
  ``n_eff(w, t)`` grids loaded from JSON or CSV.

Units: widths, thicknesses, gaps and wavelengths in nm; lengths in um;
propagation constants in rad/um.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq

from .errors import DomainError

logger = logging.getLogger(__name__)

N_SI = 3.476
N_SIO2 = 1.444
N_AIR = 1.0

NOMINAL_WIDTH = 470.0
NOMINAL_THICKNESS = 220.0
RIDGE_SLAB_HEIGHT = 150.0
WAVELENGTH = 1550.0
WIDTH_RANGE = (350.0, 1200.0)

# 1 um of taper per 100 nm of width change
TAPER_UM_PER_NM = 0.01

GEOMETRIES = ("strip", "ridge")


@dataclass(frozen=True)
class WaveguideSpec:
    """Cross-section of a silicon waveguide (all dimensions in nm)."""

    geometry: str = "strip"
    width: float = NOMINAL_WIDTH
    thickness: float = NOMINAL_THICKNESS
    slab_height: float | None = None
    wavelength: float = WAVELENGTH

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.slab_height is None:
            h = 0.0 if self.geometry == "strip" else RIDGE_SLAB_HEIGHT
            object.__setattr__(self, "slab_height", h)
        if self.geometry == "strip" and self.slab_height != 0:
            raise ValueError("strip waveguides have no slab")
        lo, hi = WIDTH_RANGE
        if not lo <= self.width <= hi:
            raise ValueError(f"width {self.width} nm outside [{lo}, {hi}] nm")
        if not self.thickness > self.slab_height >= 0:
            raise ValueError("need thickness > slab_height >= 0")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")


@dataclass(frozen=True)
class DcSpec:
    """Directional coupler: length in um, gap in nm, nominal cross-coupling."""

    length: float = 10.0
    gap: float = 200.0
    kappa: float = 0.5
    input_field: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")
        if self.length <= 0:
            raise ValueError("coupler length must be positive")


class EffIndexModel(Protocol):
    provenance: str

    def evaluate(
        self, geometry: str, width: float, thickness: float, slab_height: float, wavelength: float
    ) -> float: ...


# --------------------------------------------------------------------------
# slab solvers


def _slab_index(n_core, n_sub, n_clad, d, lam, pol):
    """Fundamental-mode index of an asymmetric three-layer slab of thickness d."""
    k0 = 2 * np.pi / lam
    lo = max(n_sub, n_clad)
    if pol == "TE":
        r_sub = r_clad = 1.0
    else:
        r_sub, r_clad = (n_core / n_sub) ** 2, (n_core / n_clad) ** 2

    def f(n):
        kap = k0 * math.sqrt(n_core**2 - n**2)
        g_sub = k0 * math.sqrt(n**2 - n_sub**2)
        g_clad = k0 * math.sqrt(n**2 - n_clad**2)
        return kap * d - math.atan(r_sub * g_sub / kap) - math.atan(r_clad * g_clad / kap)

    eps = 1e-12
    return brentq(f, lo + eps, n_core - eps, xtol=1e-14, rtol=1e-15)


def _coupled_slab_index(n_core, n_side, width, gap, lam, parity):
    """Even or odd TM supermode index of two identical slabs separated by ``gap``.

    Transverse resonance on the half structure: the field in the gap is a
    cosh (even) or sinh (odd), is carried across the core with the TM
    boundary conditions and must match a decaying tail outside.
    """
    k0 = 2 * np.pi / lam
    nc2, n12 = n_side**2, n_core**2

    def f(n):
        gam = k0 * math.sqrt(n * n - nc2)
        kap = k0 * math.sqrt(n12 - n * n)
        x = gam * gap / 2
        if parity == "even":
            psi, dpsi = math.cosh(x), gam * math.sinh(x)
        else:
            psi, dpsi = math.sinh(x), gam * math.cosh(x)
        c, s = psi, n12 * dpsi / nc2 / kap
        cw, sw = math.cos(kap * width), math.sin(kap * width)
        psi_w = c * cw + s * sw
        p_w = (-c * kap * sw + s * kap * cw) / n12
        return (p_w + gam * psi_w / nc2) / math.hypot(c, s)

    single = _slab_index(n_core, n_side, n_side, width, lam, "TM")
    eps = 1e-10
    if parity == "even":
        grid = np.linspace(single, n_core - eps, 400)
    else:
        grid = np.linspace(n_side + eps, single, 400)
    vals = np.array([f(n) for n in grid])
    change = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if change.size == 0:
        raise DomainError(f"no guided {parity} supermode")
    i = change[-1]
    return brentq(f, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-15)


@dataclass(frozen=True)
class EimModel:
    """Effective-index-method surrogate for strip and ridge SOI waveguides.

    The vertical cross-section is solved as a TE slab on a buried oxide with
    the configured top cladding; the lateral problem is a TM slab whose side
    index is the top cladding (strip) or the slab-region index (ridge).
    """

    n_core: float = N_SI
    n_box: float = N_SIO2
    n_top: float = N_AIR
    width_box: tuple[float, float] = (300.0, 1300.0)
    thickness_box: tuple[float, float] = (150.0, 300.0)
    wavelength_box: tuple[float, float] = (1200.0, 1700.0)
    provenance: str = "analytic-surrogate"

    def _check(self, width, thickness, slab_height, wavelength):
        boxes = (
            ("width", width, self.width_box),
            ("thickness", thickness, self.thickness_box),
            ("wavelength", wavelength, self.wavelength_box),
        )
        for name, value, (lo, hi) in boxes:
            if not lo <= value <= hi:
                raise DomainError(f"{name} {value} outside model validity [{lo}, {hi}]")
        if not 0 <= slab_height < thickness:
            raise DomainError("slab height must satisfy 0 <= h < t")

    def _vertical(self, thickness, wavelength):
        return _slab_index(self.n_core, self.n_box, self.n_top, thickness, wavelength, "TE")

    def _side_index(self, slab_height, wavelength):
        if slab_height == 0:
            return self.n_top
        return self._vertical(slab_height, wavelength)

    @functools.lru_cache(maxsize=200_000)
    def evaluate(self, geometry, width, thickness, slab_height, wavelength):
        self._check(width, thickness, slab_height, wavelength)
        if geometry == "strip" and slab_height != 0:
            raise DomainError("strip waveguide with nonzero slab")
        n_ridge = self._vertical(thickness, wavelength)
        n_side = self._side_index(slab_height, wavelength)
        return _slab_index(n_ridge, n_side, n_side, width, wavelength, "TM")

    @functools.lru_cache(maxsize=20_000)
    def supermode_split(self, geometry, width, thickness, slab_height, gap, wavelength):
        """Even minus odd supermode index of a symmetric coupler."""
        self._check(width, thickness, slab_height, wavelength)
        if gap <= 0:
            raise DomainError("coupler gap must be positive")
        n_ridge = self._vertical(thickness, wavelength)
        n_side = self._side_index(slab_height, wavelength)
        even = _coupled_slab_index(n_ridge, n_side, width, gap, wavelength, "even")
        odd = _coupled_slab_index(n_ridge, n_side, width, gap, wavelength, "odd")
        return even - odd


@dataclass(eq=False)
class TableModel:
    """Bilinear interpolation in tabulated ``n_eff(width, thickness)`` grids.

    ``tables`` maps ``(geometry, slab_height)`` to ``(widths, thicknesses,
    n_eff)`` with ``n_eff[i, j]`` at ``widths[i], thicknesses[j]``; all
    grids share one wavelength.
    """

    tables: dict
    wavelength: float = WAVELENGTH
    provenance: str = "table"
    source: str = ""
    _interp: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for key, (w, t, n) in self.tables.items():
            n = np.asarray(n, dtype=float)
            if n.shape != (len(w), len(t)):
                raise ValueError(f"table {key}: n_eff shape {n.shape} does not match axes")
            self._interp[key] = RegularGridInterpolator(
                (np.asarray(w, float), np.asarray(t, float)), n, method="linear"
            )

    def evaluate(self, geometry, width, thickness, slab_height, wavelength):
        key = (geometry, float(slab_height))
        if key not in self._interp:
            raise DomainError(f"no table for geometry={geometry} h={slab_height}")
        if not math.isclose(wavelength, self.wavelength):
            raise DomainError(f"table is for {self.wavelength} nm, got {wavelength} nm")
        w_axis, t_axis = self._interp[key].grid
        if not (w_axis[0] <= width <= w_axis[-1] and t_axis[0] <= thickness <= t_axis[-1]):
            raise DomainError(f"(w={width}, t={thickness}) outside tabulated range")
        return float(self._interp[key]([[width, thickness]])[0])

    # -- serialization --------------------------------------------------

    def to_json(self) -> str:
        tables = []
        for (geometry, h), (w, t, n) in self.tables.items():
            tables.append(
                {
                    "geometry": geometry,
                    "slab_height_nm": h,
                    "width_nm": list(map(float, w)),
                    "thickness_nm": list(map(float, t)),
                    "n_eff": np.asarray(n, float).tolist(),
                }
            )
        doc = {
            "format": "spnn-fpv/neff-table",
            "version": 1,
            "provenance": self.source or self.provenance,
            "wavelength_nm": self.wavelength,
            "tables": tables,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "TableModel":
        doc = json.loads(text)
        tables = {
            (tb["geometry"], float(tb["slab_height_nm"])): (
                np.asarray(tb["width_nm"], float),
                np.asarray(tb["thickness_nm"], float),
                np.asarray(tb["n_eff"], float),
            )
            for tb in doc["tables"]
        }
        return cls(tables, wavelength=float(doc["wavelength_nm"]), source=doc.get("provenance", ""))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# provenance={self.source or self.provenance}\n")
        buf.write(f"# wavelength_nm={self.wavelength}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["geometry", "slab_height_nm", "width_nm", "thickness_nm", "n_eff"])
        for (geometry, h), (w, t, n) in self.tables.items():
            n = np.asarray(n, float)
            for i, wi in enumerate(w):
                for j, tj in enumerate(t):
                    writer.writerow([geometry, h, repr(float(wi)), repr(float(tj)), repr(float(n[i, j]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TableModel":
        meta, body = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
        rows = list(csv.DictReader(body))
        groups: dict = {}
        for r in rows:
            key = (r["geometry"], float(r["slab_height_nm"]))
            groups.setdefault(key, []).append(
                (float(r["width_nm"]), float(r["thickness_nm"]), float(r["n_eff"]))
            )
        tables = {}
        for key, pts in groups.items():
            w = np.unique([p[0] for p in pts])
            t = np.unique([p[1] for p in pts])
            n = np.full((len(w), len(t)), np.nan)
            for wi, ti, ni in pts:
                n[np.searchsorted(w, wi), np.searchsorted(t, ti)] = ni
            if np.isnan(n).any():
                raise ValueError(f"table {key} is not a full grid")
            tables[key] = (w, t, n)
        return cls(tables, wavelength=float(meta.get("wavelength_nm", WAVELENGTH)), source=meta.get("provenance", ""))

    @classmethod
    def load(cls, path) -> "TableModel":
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            return cls.from_json(text)
        return cls.from_csv(text)


def tabulate(model, widths, thicknesses, geometries=GEOMETRIES, wavelength=WAVELENGTH) -> TableModel:
    """Sample ``model`` on a grid and wrap the result as a :class:`TableModel`."""
    tables = {}
    for geometry in geometries:
        h = 0.0 if geometry == "strip" else RIDGE_SLAB_HEIGHT
        n = np.array(
            [[model.evaluate(geometry, float(w), float(t), h, wavelength) for t in thicknesses] for w in widths]
        )
        tables[(geometry, h)] = (np.asarray(widths, float), np.asarray(thicknesses, float), n)
    return TableModel(tables, wavelength=wavelength, source=f"tabulated from {model.provenance}")


# --------------------------------------------------------------------------
# public operations


def n_eff(model: EffIndexModel, spec: WaveguideSpec) -> float:
    value = model.evaluate(spec.geometry, spec.width, spec.thickness, spec.slab_height, spec.wavelength)
    if not N_AIR < value < N_SI:
        raise DomainError(f"n_eff={value} is not a guided-mode index")
    return value


@functools.lru_cache(maxsize=100_000)
def _partials(model, geometry, width, thickness, slab_height, wavelength, step):
    ev = model.evaluate
    d_w = (ev(geometry, width + step, thickness, slab_height, wavelength)
           - ev(geometry, width - step, thickness, slab_height, wavelength)) / (2 * step)
    d_t = (ev(geometry, width, thickness + step, slab_height, wavelength)
           - ev(geometry, width, thickness - step, slab_height, wavelength)) / (2 * step)
    return d_w, d_t


def dn_eff(model: EffIndexModel, spec: WaveguideSpec, which: str, step: float = 1.0) -> float:
    """Central-difference sensitivity of ``n_eff`` to width (``"w"``) or thickness (``"t"``), per nm."""
    if which not in ("w", "t"):
        raise ValueError("which must be 'w' or 't'")
    d_w, d_t = _partials(
        model, spec.geometry, float(spec.width), float(spec.thickness),
        float(spec.slab_height), float(spec.wavelength), float(step),
    )
    return d_w if which == "w" else d_t


def sensitivities(model: EffIndexModel, spec: WaveguideSpec, step: float = 1.0) -> tuple[float, float]:
    """``(dn/dw, dn/dt)`` at ``spec``, per nm."""
    return _partials(
        model, spec.geometry, float(spec.width), float(spec.thickness),
        float(spec.slab_height), float(spec.wavelength), float(step),
    )


def width_sensitivity_table(model, geometry, widths, thickness=NOMINAL_THICKNESS, wavelength=WAVELENGTH):
    """Arrays ``(dn/dw, dn/dt)`` evaluated at each width in ``widths``."""
    h = 0.0 if geometry == "strip" else RIDGE_SLAB_HEIGHT
    out = np.array(
        [_partials(model, geometry, float(w), float(thickness), h, float(wavelength), 1.0) for w in widths]
    )
    return out[:, 0], out[:, 1]


def delta_beta(model: EffIndexModel, spec: WaveguideSpec, rho_w, rho_t):
    """Propagation-constant change (rad/um) for width/thickness deviations in nm.

    Linear in the deviations, with the partials taken at ``spec``.
    """
    d_w, d_t = sensitivities(model, spec)
    k0 = 2 * np.pi / (spec.wavelength * 1e-3)
    return k0 * (d_w * np.asarray(rho_w, float) + d_t * np.asarray(rho_t, float))


def delta_kappa(dc: DcSpec, dn_dc, wavelength: float = WAVELENGTH):
    """Cross-coupling change of a coupler whose effective index changed by ``dn_dc``."""
    arg = np.pi * (dc.length * 1e3) * np.asarray(dn_dc, float) / wavelength
    return dc.input_field * np.sin(arg) ** 2


DC_INDEX_METHODS = ("supermode", "mean-index")


def dc_index_sensitivities(model, dc: DcSpec, spec: WaveguideSpec, method: str = "supermode"):
    """Per-nm sensitivities ``(d/dw, d/dt)`` of the coupler index used by :func:`delta_n_dc`.

    ``"supermode"`` differentiates the even/odd supermode splitting of the
    coupled pair: a width bias widens both guides and narrows the gap by the
    same amount.  ``"mean-index"`` uses the single-waveguide partials.
    """
    if method == "mean-index":
        return sensitivities(model, spec)
    if method != "supermode":
        raise ValueError(f"unknown coupler index method {method!r}")
    if not hasattr(model, "supermode_split"):
        raise DomainError(f"{type(model).__name__} cannot evaluate coupler supermodes")
    return _split_partials(
        model, spec.geometry, float(spec.width), float(spec.thickness),
        float(spec.slab_height), float(dc.gap), float(spec.wavelength),
    )


@functools.lru_cache(maxsize=10_000)
def _split_partials(model, geometry, width, thickness, slab_height, gap, wavelength, step=1.0):
    s = model.supermode_split
    d_w = (s(geometry, width + step, thickness, slab_height, gap - step, wavelength)
           - s(geometry, width - step, thickness, slab_height, gap + step, wavelength)) / (2 * step)
    d_t = (s(geometry, width, thickness + step, slab_height, gap, wavelength)
           - s(geometry, width, thickness - step, slab_height, gap, wavelength)) / (2 * step)
    return d_w, d_t


def delta_n_dc(model, dc: DcSpec, spec: WaveguideSpec, rho_w, rho_t, method: str = "supermode"):
    """Change of the coupler index under mean deviations over its footprint."""
    d_w, d_t = dc_index_sensitivities(model, dc, spec, method)
    return d_w * np.asarray(rho_w, float) + d_t * np.asarray(rho_t, float)


def taper_length(w_from, w_to):
    """Minimum taper length in um between two widths in nm."""
    for w in (w_from, w_to):
        if np.min(w) < WIDTH_RANGE[0] or np.max(w) > WIDTH_RANGE[1]:
            raise ValueError(f"width outside {WIDTH_RANGE} nm")
    return np.abs(np.asarray(w_to, float) - np.asarray(w_from, float)) * TAPER_UM_PER_NM


def arm_length(width, base_length: float = 135.0):
    """Arm length (um) after adding the taper from the nominal width."""
    return base_length + taper_length(NOMINAL_WIDTH, width)


def with_width(spec: WaveguideSpec, width: float) -> WaveguideSpec:
    return dataclasses.replace(spec, width=float(width))
