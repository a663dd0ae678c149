"""Spatially correlated width / thickness variation maps.

A map is a pair of grids of deviations (nm) on square cells of edge
``mesh_size`` (um).  Cell ``[r, c]`` covers
``x in [x0 + c*d, x0 + (c+1)*d)`` and ``y in [y0 + r*d, y0 + (r+1)*d)``
where ``(x0, y0)`` is the map origin in wafer coordinates (wafer center at
``(0, 0)``).

The stochastic part is a stationary Gaussian random field with covariance
``sigma**2 * exp(-(r / corr_length)**2)``: white noise filtered by the
kernel ``exp(-(r / s)**2)`` with ``s = corr_length / sqrt(2)``, done with
FFTs on a grid padded by three correlation lengths and then cropped.  An
optional rotationally symmetric bowl ``radial_amplitude * (r / R)**2`` is
added on top.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .errors import OutOfRangeError


@dataclass(frozen=True)
class VariationParams:
    sigma_w: float = 5.0
    sigma_t: float = 2.0
    corr_length: float = 1000.0
    mesh_size: float = 10.0
    radial_amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_w < 0 or self.sigma_t < 0:
            raise ValueError("standard deviations must be non-negative")
        if self.corr_length <= 0:
            raise ValueError("correlation length must be positive")
        if self.mesh_size <= 0:
            raise ValueError("mesh size must be positive")

    def scaled(self, factor: float) -> "VariationParams":
        """Same map parameters with both standard deviations multiplied by ``factor``."""
        return VariationParams(
            self.sigma_w * factor, self.sigma_t * factor, self.corr_length,
            self.mesh_size, self.radial_amplitude, self.seed,
        )

    def with_seed(self, seed: int) -> "VariationParams":
        return VariationParams(
            self.sigma_w, self.sigma_t, self.corr_length, self.mesh_size, self.radial_amplitude, int(seed)
        )


@dataclass(frozen=True, eq=False)
class VariationMap:
    width_dev: np.ndarray
    thick_dev: np.ndarray
    origin: tuple[float, float]
    mesh_size: float
    params: VariationParams

    def __post_init__(self):
        w = np.array(self.width_dev, dtype=float)
        t = np.array(self.thick_dev, dtype=float)
        if w.ndim != 2 or w.shape != t.shape:
            raise ValueError("width and thickness grids must be 2-D with equal shapes")
        if not (np.isfinite(w).all() and np.isfinite(t).all()):
            raise ValueError("variation grids must be finite")
        w.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "width_dev", w)
        object.__setattr__(self, "thick_dev", t)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self):
        return self.width_dev.shape

    @property
    def extent(self):
        """``(x0, y0, x1, y1)`` in um."""
        ny, nx = self.shape
        x0, y0 = self.origin
        return x0, y0, x0 + nx * self.mesh_size, y0 + ny * self.mesh_size

    def cell_centers(self):
        ny, nx = self.shape
        d = self.mesh_size
        return self.origin[0] + (np.arange(nx) + 0.5) * d, self.origin[1] + (np.arange(ny) + 0.5) * d

    def __eq__(self, other):
        if not isinstance(other, VariationMap):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.mesh_size == other.mesh_size
            and self.params == other.params
            and np.array_equal(self.width_dev, other.width_dev)
            and np.array_equal(self.thick_dev, other.thick_dev)
        )


# --------------------------------------------------------------------------
# generation


def _filtered_noise(rng, shape, corr_cells):
    """Unit-variance stationary field with correlation ``exp(-(r/corr_cells)**2)`` on ``shape``."""
    ny, nx = shape
    pad = int(math.ceil(3 * corr_cells))
    my = sfft.next_fast_len(ny + pad, real=True)
    mx = sfft.next_fast_len(nx + pad, real=True)
    dy = np.minimum(np.arange(my), my - np.arange(my))
    dx = np.minimum(np.arange(mx), mx - np.arange(mx))
    s2 = corr_cells**2 / 2
    kernel = np.exp(-(dy[:, None] ** 2 + dx[None, :] ** 2) / s2)
    kernel /= np.sqrt(np.sum(kernel**2))
    noise = rng.standard_normal((my, mx))
    field = sfft.irfft2(sfft.rfft2(noise) * sfft.rfft2(kernel), s=(my, mx), workers=-1)
    return field[:ny, :nx]


def radial_trend(x, y, amplitude, wafer_diameter):
    """Quadratic bowl: 0 at the wafer center, ``amplitude`` at the edge."""
    if amplitude == 0:
        return np.zeros(np.broadcast(x, y).shape)
    radius = wafer_diameter / 2
    return amplitude * (np.asarray(x) ** 2 + np.asarray(y) ** 2) / radius**2


def generate_map(
    params: VariationParams,
    width: float,
    height: float,
    origin=(0.0, 0.0),
    wafer_diameter: float | None = None,
) -> VariationMap:
    """Generate a rectangular map covering ``[x0, x0+width) x [y0, y0+height)``.

    Both dimensions are rounded up to whole cells.  ``wafer_diameter`` is
    only needed when the radial trend is non-zero.
    """
    d = params.mesh_size
    nx, ny = int(math.ceil(width / d - 1e-9)), int(math.ceil(height / d - 1e-9))
    if nx < 1 or ny < 1:
        raise ValueError("map must contain at least one cell")
    if params.radial_amplitude != 0 and wafer_diameter is None:
        raise ValueError("a radial trend needs the wafer diameter")
    rng = np.random.default_rng(params.seed)
    corr_cells = params.corr_length / d
    w = params.sigma_w * _filtered_noise(rng, (ny, nx), corr_cells)
    t = params.sigma_t * _filtered_noise(rng, (ny, nx), corr_cells)
    if params.radial_amplitude != 0:
        xc = origin[0] + (np.arange(nx) + 0.5) * d
        yc = origin[1] + (np.arange(ny) + 0.5) * d
        bowl = radial_trend(xc[None, :], yc[:, None], params.radial_amplitude, wafer_diameter)
        w = w + bowl
        t = t + bowl
    return VariationMap(w, t, origin, d, params)


def generate_wafer_map(params: VariationParams, wafer_diameter: float) -> VariationMap:
    """Square map enclosing a wafer of the given diameter (um), centered at the origin."""
    if wafer_diameter < 10 * params.mesh_size:
        raise ValueError("wafer diameter must span at least ten mesh cells")
    r = wafer_diameter / 2
    return generate_map(params, wafer_diameter, wafer_diameter, origin=(-r, -r), wafer_diameter=wafer_diameter)


# --------------------------------------------------------------------------
# queries


def _cell_index(offset, d, what):
    k = offset / d
    kr = round(k)
    if abs(k - kr) > 1e-6:
        raise ValueError(f"{what} {offset} um is not aligned to the {d} um mesh")
    return int(kr)


def extract_die(vmap: VariationMap, origin, width: float, height: float) -> VariationMap:
    """Exact sub-grid of ``vmap``; the rectangle must be mesh-aligned and inside the map."""
    d = vmap.mesh_size
    c0 = _cell_index(origin[0] - vmap.origin[0], d, "x origin")
    r0 = _cell_index(origin[1] - vmap.origin[1], d, "y origin")
    nc = _cell_index(width, d, "width")
    nr = _cell_index(height, d, "height")
    ny, nx = vmap.shape
    if nc < 1 or nr < 1:
        raise ValueError("die must contain at least one cell")
    if c0 < 0 or r0 < 0 or c0 + nc > nx or r0 + nr > ny:
        raise OutOfRangeError("die rectangle is not inside the map")
    sl = (slice(r0, r0 + nr), slice(c0, c0 + nc))
    return VariationMap(
        vmap.width_dev[sl], vmap.thick_dev[sl],
        (vmap.origin[0] + c0 * d, vmap.origin[1] + r0 * d), d, vmap.params,
    )


def _integral_image(grid):
    out = np.zeros((grid.shape[0] + 1, grid.shape[1] + 1))
    out[1:, 1:] = np.cumsum(np.cumsum(grid, axis=0), axis=1)
    return out


def _interp_integral(F, u, v):
    """Bilinear interpolation of a corner-sampled integral image at cell coordinates (u=x, v=y).

    The integral of a piecewise-constant field is bilinear inside each
    cell, so this is exact.
    """
    ny1, nx1 = F.shape
    c = np.clip(np.floor(u).astype(int), 0, nx1 - 2)
    r = np.clip(np.floor(v).astype(int), 0, ny1 - 2)
    fu, fv = u - c, v - r
    return (
        F[r, c] * (1 - fu) * (1 - fv)
        + F[r, c + 1] * fu * (1 - fv)
        + F[r + 1, c] * (1 - fu) * fv
        + F[r + 1, c + 1] * fu * fv
    )


class MapSampler:
    """Area-weighted rectangle averages over a map, vectorised over many rectangles."""

    def __init__(self, vmap: VariationMap):
        self.map = vmap
        # integrate around the grid means to keep the running sums small
        self._mean = (float(vmap.width_dev.mean()), float(vmap.thick_dev.mean()))
        self._fw = _integral_image(vmap.width_dev - self._mean[0])
        self._ft = _integral_image(vmap.thick_dev - self._mean[1])

    def sample(self, rects):
        """Mean ``(rho_w, rho_t)`` over each rectangle ``(x, y, width, height)`` (um).

        Rectangles are clipped to the map; one with no overlap raises
        :class:`OutOfRangeError`.  Returns an array of shape ``(n, 2)``.
        """
        rects = np.atleast_2d(np.asarray(rects, float))
        vm = self.map
        d = vm.mesh_size
        ny, nx = vm.shape
        u0 = np.clip((rects[:, 0] - vm.origin[0]) / d, 0, nx)
        u1 = np.clip((rects[:, 0] + rects[:, 2] - vm.origin[0]) / d, 0, nx)
        v0 = np.clip((rects[:, 1] - vm.origin[1]) / d, 0, ny)
        v1 = np.clip((rects[:, 1] + rects[:, 3] - vm.origin[1]) / d, 0, ny)
        area = (u1 - u0) * (v1 - v0)
        if np.any(area <= 0):
            raise OutOfRangeError("rectangle does not intersect the map")
        out = np.empty((len(rects), 2))
        for k, F in enumerate((self._fw, self._ft)):
            total = (
                _interp_integral(F, u1, v1) - _interp_integral(F, u0, v1)
                - _interp_integral(F, u1, v0) + _interp_integral(F, u0, v0)
            )
            out[:, k] = total / area + self._mean[k]
        return out


def sample_region(vmap: VariationMap, rect) -> tuple[float, float]:
    """Area-weighted mean deviations ``(rho_w, rho_t)`` in nm over ``rect = (x, y, w, h)``."""
    w, t = MapSampler(vmap).sample([rect])[0]
    return float(w), float(t)


# --------------------------------------------------------------------------
# statistics helpers


def autocorrelation_x(grid):
    """Mean normalised autocorrelation along x (axis 1) for lags ``0..nx-1``."""
    g = np.asarray(grid, float)
    g = g - g.mean()
    nx = g.shape[1]
    n = sfft.next_fast_len(2 * nx)
    spec = sfft.rfft(g, n=n, axis=1)
    acov = sfft.irfft(spec * np.conj(spec), n=n, axis=1)[:, :nx].sum(axis=0)
    acov /= g.shape[0] * (nx - np.arange(nx))
    return acov / acov[0]


def correlation_length(grid, mesh_size: float) -> float:
    """Lag (um) at which the x-autocorrelation first drops to 1/e (linear interpolation)."""
    acf = autocorrelation_x(grid)
    below = np.nonzero(acf < math.exp(-1))[0]
    if below.size == 0:
        return math.inf
    k = below[0]
    a0, a1 = acf[k - 1], acf[k]
    frac = (a0 - math.exp(-1)) / (a0 - a1)
    return (k - 1 + frac) * mesh_size


# --------------------------------------------------------------------------
# serialization


_FORMAT = "spnn-fpv/variation-map"


def _header(vmap):
    return {
        "format": _FORMAT,
        "version": 1,
        "origin_um": list(vmap.origin),
        "mesh_size_um": vmap.mesh_size,
        "shape": list(vmap.shape),
        "params": asdict(vmap.params),
    }


def save_map(vmap: VariationMap, path, fmt: str | None = None) -> None:
    """Write ``vmap``; ``fmt`` is ``"json"`` or ``"npz"`` (default: by suffix, npz otherwise)."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "npz")
    if fmt == "json":
        doc = _header(vmap)
        doc["width_dev_nm"] = vmap.width_dev.ravel().tolist()
        doc["thick_dev_nm"] = vmap.thick_dev.ravel().tolist()
        path.write_text(json.dumps(doc))
    elif fmt == "npz":
        with open(path, "wb") as fh:
            np.savez_compressed(
                fh, header=np.array(json.dumps(_header(vmap))),
                width_dev=vmap.width_dev, thick_dev=vmap.thick_dev,
            )
    else:
        raise ValueError(f"unknown map format {fmt!r}")


def load_map(path) -> VariationMap:
    raw = Path(path).read_bytes()
    if raw.lstrip()[:1] == b"{":
        doc = json.loads(raw)
        if doc.get("format") != _FORMAT:
            raise ValueError("not a variation-map file")
        shape = tuple(doc["shape"])
        w = np.asarray(doc["width_dev_nm"], float).reshape(shape)
        t = np.asarray(doc["thick_dev_nm"], float).reshape(shape)
    else:
        with np.load(io.BytesIO(raw)) as z:
            doc = json.loads(str(z["header"]))
            w, t = z["width_dev"], z["thick_dev"]
    if doc.get("format") != _FORMAT:
        raise ValueError("not a variation-map file")
    return VariationMap(w, t, tuple(doc["origin_um"]), float(doc["mesh_size_um"]), VariationParams(**doc["params"]))
