"""Unitary meshes: Clements decomposition, layer SVD, placement and reconstruction.

Conventions
-----------
An MZI acting on modes ``(m, m+1)`` applies :func:`mzi.ideal_transfer` to
those two rows.  A program realises

    U = D @ T_K @ ... @ T_2 @ T_1

where ``T_1`` is the first entry of the program (the first MZI light meets)
and ``D`` is a diagonal of unit-modulus phases at the output.  Entries are
stored sorted by ``(column, mode)``; MZIs sharing a column act on disjoint
modes, so this order is a valid light-propagation order.

The decomposition nulls the lower triangle of ``U`` alternating between
column operations (``U @ T^-1``) and row operations (``T @ U``).  The row
operations end up on the output side; each is moved through the residual
diagonal with the identity ``T^-1 @ D = D' @ T'``, so every MZI keeps the
same ``(theta, phi)`` form and only ``D`` carries leftover phases.

Placement puts column ``c`` at ``x0 + c * 340`` um and the MZI on modes
``(m, m+1)`` at ``y0 + 30 * m`` in a ``340 x 60`` um box; the 30 um tall
MZI body sits in the middle of the box.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import mzi as mz
from .errors import OutOfRangeError
from .mzi import ArmVariations, ConfigArray, PerturbationOptions
from .varmap import MapSampler, VariationMap

MZI_PITCH_X = mz.MZI_LENGTH
PORT_PITCH = mz.MZI_HEIGHT
BOX_HEIGHT = 2 * PORT_PITCH
BODY_OFFSET = PORT_PITCH / 2
UNITARY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class MeshProgram:
    size: int
    cols: np.ndarray
    modes: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        n = self.size * (self.size - 1) // 2
        for name in ("cols", "modes", "theta", "phi"):
            arr = np.asarray(getattr(self, name), int if name in ("cols", "modes") else float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must hold {n} entries for size {self.size}")
            object.__setattr__(self, name, arr)
        D = np.asarray(self.D, complex)
        if D.shape != (self.size,) or not np.allclose(np.abs(D), 1, atol=1e-9):
            raise ValueError("D must be a unit-modulus vector of length size")
        object.__setattr__(self, "D", D)

    def __len__(self):
        return len(self.theta)

    def to_dict(self) -> dict:
        return {
            "format": "spnn-fpv/mesh-program",
            "size": self.size,
            "order": "column-major; entries applied first to last, then D",
            "entries": [
                {"col": int(c), "row": int(m), "theta": float(t), "phi": float(p)}
                for c, m, t, p in zip(self.cols, self.modes, self.theta, self.phi)
            ],
            "D": [[float(z.real), float(z.imag)] for z in self.D],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MeshProgram":
        e = data["entries"]
        return cls(
            int(data["size"]),
            [x["col"] for x in e], [x["row"] for x in e],
            [x["theta"] for x in e], [x["phi"] for x in e],
            [complex(re, im) for re, im in data["D"]],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MeshProgram":
        return cls.from_dict(json.loads(text))


def clements_grid(n: int):
    """Canonical ``(column, mode)`` pairs of an ``n``-mode rectangular mesh, in program order."""
    cols, modes = [], []
    for c in range(n):
        for m in range(c % 2, n - 1, 2):
            cols.append(c)
            modes.append(m)
    return np.array(cols, int), np.array(modes, int)


def _t(theta, phi):
    return mz.ideal_transfer(theta, phi)


def _factor_left(M):
    """Write a 2x2 unitary as ``diag(d1, d2) @ T(theta, phi)``."""
    a00, a01 = abs(M[0, 0]), abs(M[0, 1])
    theta = 2 * np.arctan2(a00, a01)
    if a00 > 1e-14 and a01 > 1e-14:
        phi = np.angle(M[0, 0] * np.conj(M[0, 1]))
    elif abs(M[1, 0]) > 1e-14 and abs(M[1, 1]) > 1e-14:
        phi = np.angle(-M[1, 0] * np.conj(M[1, 1]))
    else:
        phi = 0.0
    T = _t(theta, phi)
    d = np.array([M[0] @ T[0].conj(), M[1] @ T[1].conj()])
    return theta, phi, d / np.abs(d)


def check_unitary(U, tol=UNITARY_TOL):
    U = np.asarray(U, complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError("expected a square matrix")
    err = np.linalg.norm(U.conj().T @ U - np.eye(len(U)))
    if not err <= tol:
        raise ValueError(f"matrix is not unitary (||U^H U - I|| = {err:.2e})")
    return U


def clements_decompose(U) -> MeshProgram:
    """Decompose an ``N x N`` unitary into ``N(N-1)/2`` MZIs plus an output phase screen."""
    U = check_unitary(U).copy()
    n = len(U)
    if n < 2:
        raise ValueError("a mesh needs at least two modes")
    right = []  # (mode, theta, phi), applied first to last
    left = []  # (mode, theta, phi), in the order they were applied to U
    for i in range(n - 1):
        if i % 2 == 0:
            for j in range(i + 1):
                r, c = n - 1 - j, i - j
                th = 2 * np.arctan2(abs(U[r, c + 1]), abs(U[r, c]))
                ph = np.angle(-U[r, c] * np.conj(U[r, c + 1]))
                U[:, c:c + 2] = U[:, c:c + 2] @ _t(th, ph).conj().T
                right.append((c, th, ph))
        else:
            for j in range(1, i + 2):
                r, c = n + j - i - 2, j - 1
                th = 2 * np.arctan2(abs(U[r - 1, c]), abs(U[r, c]))
                ph = np.angle(U[r, c] * np.conj(U[r - 1, c]))
                U[r - 1:r + 1, :] = _t(th, ph) @ U[r - 1:r + 1, :]
                left.append((r - 1, th, ph))
    D = np.diag(U).copy()
    D /= np.abs(D)
    # U = L1^-1 ... Lk^-1 D R_m ... R_1.  Fold Lk^-1 first: Lk^-1 D = D' T'_k,
    # which leaves T'_k applied right after R_m, then T'_(k-1), and so on.
    moved = []
    for m, th, ph in reversed(left):
        M = _t(th, ph).conj().T * D[m:m + 2][None, :]
        th2, ph2, d = _factor_left(M)
        D[m:m + 2] = d
        moved.append((m, th2, ph2))
    return _schedule(n, right + moved, D)


def _schedule(n, ops, D) -> MeshProgram:
    last = np.full(n, -1)
    placed = []
    for k, (m, th, ph) in enumerate(ops):
        col = max(last[m], last[m + 1]) + 1
        if col % 2 != m % 2:
            col += 1
        last[m] = last[m + 1] = col
        placed.append((col, m, k, th, ph))
    placed.sort(key=lambda e: (e[0], e[1]))
    cols = np.array([e[0] for e in placed])
    if cols.max(initial=0) >= n:
        raise RuntimeError("mesh schedule exceeded the rectangular depth")
    return MeshProgram(
        n, cols, [e[1] for e in placed], [e[3] for e in placed], [e[4] for e in placed], D,
    )


# --------------------------------------------------------------------------
# reconstruction


def _nominal_configs(program: MeshProgram) -> ConfigArray:
    return ConfigArray.nominal(program.theta, program.phi)


def mzi_matrices(program: MeshProgram, variations=None, model=None, configs=None,
                 options: PerturbationOptions = mz.DEFAULT_OPTIONS):
    """The ``(n, 2, 2)`` transfer matrices of a program's MZIs."""
    if configs is None:
        configs = _nominal_configs(program)
    elif len(configs) != len(program):
        raise ValueError(f"expected {len(program)} MZI configurations, got {len(configs)}")
    else:
        configs = configs.with_phases(program.theta, program.phi)
    if variations is None:
        return mz.ideal_transfer(program.theta, program.phi)
    if len(variations) != len(program):
        raise ValueError(f"expected variations for {len(program)} MZIs, got {len(variations)}")
    if model is None:
        raise ValueError("a perturbed reconstruction needs an effective-index model")
    return mz.batch_transfer(configs, variations, model, options)


def apply_mzis(size: int, modes, mats, D=None):
    """``D @ T_K @ ... @ T_1`` for 2x2 blocks ``mats`` acting on ``(m, m+1)``."""
    M = np.eye(size, dtype=complex)
    for m, T in zip(modes, mats):
        M[m:m + 2] = T @ M[m:m + 2]
    if D is not None:
        M = D[:, None] * M
    return M


def reconstruct(program: MeshProgram, variations: ArmVariations | None = None, model=None,
                configs: ConfigArray | None = None, options: PerturbationOptions = mz.DEFAULT_OPTIONS):
    """Matrix realised by ``program``; perturbed per MZI when ``variations`` is given."""
    mats = mzi_matrices(program, variations, model, configs, options)
    return apply_mzis(program.size, program.modes, mats, program.D)


# --------------------------------------------------------------------------
# layers


@dataclass(frozen=True, eq=False)
class LayerDecomposition:
    """``W = U @ Sigma @ Vh`` with both unitaries programmed as Clements meshes.

    ``Sigma`` is an array of MZIs with one input and one output terminated:
    MZI ``i`` transmits ``sin(theta_i / 2)`` of the field and an ideal
    amplifier of gain ``gain`` restores the scale, so
    ``sigma_i = gain * sin(theta_i / 2)``.  ``phi_i`` is chosen so the
    transmitted element ``T[0, 0]`` is real and positive.
    """

    U_program: MeshProgram
    Vh_program: MeshProgram
    sigma: np.ndarray
    shape: tuple
    gain: float
    sigma_theta: np.ndarray
    sigma_phi: np.ndarray

    @property
    def n_out(self):
        return self.shape[0]

    @property
    def n_in(self):
        return self.shape[1]

    @property
    def mzi_count(self):
        return len(self.U_program) + len(self.Vh_program) + len(self.sigma)

    def sigma_matrix(self, diag=None):
        S = np.zeros(self.shape, complex)
        k = len(self.sigma)
        S[np.arange(k), np.arange(k)] = self.sigma if diag is None else diag
        return S

    def nominal(self):
        return reconstruct(self.U_program) @ self.sigma_matrix() @ reconstruct(self.Vh_program)

    def to_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "U": self.U_program.to_dict(),
            "Vh": self.Vh_program.to_dict(),
            "sigma": [float(s) for s in self.sigma],
            "gain": self.gain,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LayerDecomposition":
        sigma = np.asarray(data["sigma"], float)
        gain = float(data["gain"])
        theta, phi = _sigma_phases(sigma, gain)
        return cls(MeshProgram.from_dict(data["U"]), MeshProgram.from_dict(data["Vh"]), sigma,
                   tuple(data["shape"]), gain, theta, phi)


def _sigma_phases(sigma, gain):
    theta = 2 * np.arcsin(np.clip(sigma / gain, 0.0, 1.0))
    return theta, -np.pi / 2 - theta / 2


def _square_program(U):
    if len(U) == 1:
        raise ValueError("layers need at least two inputs and two outputs")
    return clements_decompose(U)


def decompose_layer(W) -> LayerDecomposition:
    """SVD of an ``n_out x n_in`` weight matrix mapped onto two meshes and a Sigma array."""
    W = np.asarray(W, complex)
    if W.ndim != 2 or not np.isfinite(W).all():
        raise ValueError("weights must be a finite 2-D matrix")
    U, s, Vh = np.linalg.svd(W, full_matrices=True)
    gain = float(s.max()) if s.size and s.max() > 0 else 1.0
    theta, phi = _sigma_phases(s, gain)
    return LayerDecomposition(_square_program(U), _square_program(Vh), s, W.shape, gain, theta, phi)


def sigma_transmission(dec: LayerDecomposition, variations=None, model=None, configs=None,
                       options: PerturbationOptions = mz.DEFAULT_OPTIONS):
    """Field transmission ``T[0, 0]`` of each Sigma MZI, times the amplifier gain."""
    k = len(dec.sigma)
    if configs is None:
        configs = ConfigArray.nominal(dec.sigma_theta, dec.sigma_phi)
    else:
        configs = configs.with_phases(dec.sigma_theta, dec.sigma_phi)
    if variations is None:
        T = mz.ideal_transfer(dec.sigma_theta, dec.sigma_phi)
    else:
        if len(variations) != k:
            raise ValueError(f"expected variations for {k} Sigma MZIs, got {len(variations)}")
        T = mz.batch_transfer(configs, variations, model, options)
    return dec.gain * T[:, 0, 0]


@dataclass(frozen=True)
class LayerVariations:
    """Per-MZI variations (and optional geometry) for the three sub-arrays of a layer."""

    U: ArmVariations | None = None
    Vh: ArmVariations | None = None
    sigma: ArmVariations | None = None


@dataclass(frozen=True)
class LayerConfigs:
    U: ConfigArray | None = None
    Vh: ConfigArray | None = None
    sigma: ConfigArray | None = None


def deviated_weight(dec: LayerDecomposition, vars_U=None, vars_V=None, vars_sigma=None, model=None,
                    configs: LayerConfigs | None = None, options: PerturbationOptions = mz.DEFAULT_OPTIONS):
    """``U' @ Sigma' @ Vh'`` with each factor rebuilt from perturbed MZIs."""
    configs = configs or LayerConfigs()
    U = reconstruct(dec.U_program, vars_U, model, configs.U, options)
    Vh = reconstruct(dec.Vh_program, vars_V, model, configs.Vh, options)
    S = dec.sigma_matrix(sigma_transmission(dec, vars_sigma, model, configs.sigma, options))
    return U @ S @ Vh


# --------------------------------------------------------------------------
# placement


@dataclass(frozen=True, eq=False)
class Placement:
    """MZI bounding boxes ``(x, y, w, h)`` in die coordinates (um), in program order.

    ``bodies`` are the ``340 x 30`` um MZI bodies whose lower-left corner is
    the origin of the local :class:`mzi.MziLayout` frame.
    """

    boxes: np.ndarray
    bodies: np.ndarray
    l_mzi: float = MZI_PITCH_X
    g_mzi: float = PORT_PITCH

    def __len__(self):
        return len(self.boxes)

    @property
    def extent(self):
        """``(x0, y0, x1, y1)`` covering every box."""
        b = self.boxes
        return (b[:, 0].min(), b[:, 1].min(), (b[:, 0] + b[:, 2]).max(), (b[:, 1] + b[:, 3]).max())

    @property
    def centers(self):
        b = self.bodies
        return np.column_stack([b[:, 0] + b[:, 2] / 2, b[:, 1] + b[:, 3] / 2])

    def shifted(self, dx, dy) -> "Placement":
        off = np.array([dx, dy, 0, 0])
        return Placement(self.boxes + off, self.bodies + off, self.l_mzi, self.g_mzi)

    @staticmethod
    def concat(items) -> "Placement":
        items = list(items)
        return Placement(np.vstack([p.boxes for p in items]), np.vstack([p.bodies for p in items]))


def place_oiu(n: int, origin=(0.0, 0.0)) -> Placement:
    """Rectangular Clements placement of an ``n``-mode mesh."""
    if n < 2:
        raise ValueError("a mesh needs at least two modes")
    cols, modes = clements_grid(n)
    x = origin[0] + cols * MZI_PITCH_X
    y = origin[1] + modes * PORT_PITCH
    boxes = np.column_stack([x, y, np.full(len(x), MZI_PITCH_X), np.full(len(x), BOX_HEIGHT)])
    bodies = np.column_stack([x, y + BODY_OFFSET, np.full(len(x), MZI_PITCH_X), np.full(len(x), PORT_PITCH)])
    return Placement(boxes, bodies)


def place_sigma(k: int, origin=(0.0, 0.0)) -> Placement:
    """One column of ``k`` single-output MZIs at the port pitch."""
    y = origin[1] + np.arange(k) * PORT_PITCH
    boxes = np.column_stack([np.full(k, origin[0]), y, np.full(k, MZI_PITCH_X), np.full(k, PORT_PITCH)])
    return Placement(boxes, boxes.copy())


def boxes_overlap(placement: Placement) -> bool:
    b = placement.boxes
    x0, y0, x1, y1 = b[:, 0], b[:, 1], b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    ox = (x0[:, None] < x1[None, :] - 1e-9) & (x0[None, :] < x1[:, None] - 1e-9)
    oy = (y0[:, None] < y1[None, :] - 1e-9) & (y0[None, :] < y1[:, None] - 1e-9)
    hit = ox & oy
    np.fill_diagonal(hit, False)
    return bool(hit.any())


@dataclass(frozen=True, eq=False)
class LayerPlacement:
    Vh: Placement
    sigma: Placement
    U: Placement

    @property
    def all(self) -> Placement:
        return Placement.concat([self.Vh, self.sigma, self.U])


def place_layer(dec: LayerDecomposition, origin=(0.0, 0.0)) -> LayerPlacement:
    """Vh mesh, Sigma column and U mesh left to right, in signal order."""
    x0, y0 = origin
    vh = place_oiu(dec.n_in, (x0, y0))
    xs = x0 + dec.n_in * MZI_PITCH_X
    sg = place_sigma(len(dec.sigma), (xs, y0))
    u = place_oiu(dec.n_out, (xs + MZI_PITCH_X, y0))
    return LayerPlacement(vh, sg, u)


def place_network(decs, origin=(0.0, 0.0), layer_gap: float = BOX_HEIGHT) -> list[LayerPlacement]:
    """Stack the layers of a network along y."""
    out = []
    y = origin[1]
    for dec in decs:
        lp = place_layer(dec, (origin[0], y))
        out.append(lp)
        y = lp.all.extent[3] + layer_gap
    return out


# --------------------------------------------------------------------------
# variation sampling


def mzi_sample_rects(placement: Placement, layout: mz.MziLayout = mz.DEFAULT_LAYOUT,
                     widths=None, dcs=(mz.DcSpec(), mz.DcSpec())):
    """Die-frame rectangles of each MZI's four arms ``(n, 4, 4)`` and two couplers ``(n, 2, 4)``."""
    n = len(placement)
    widths = np.full((n, 4), mz.ph.NOMINAL_WIDTH) if widths is None else np.asarray(widths, float)
    body = placement.bodies[:, None, :2]
    arms = layout.arm_rects(widths)
    arms[..., :2] += body
    dcr = np.broadcast_to(layout.dc_rects(*dcs), (n, 2, 4)).copy()
    dcr[..., :2] += body
    return arms, dcr


THICKNESS_MODES = ("shared", "per-arm")


def sample_mzi_vars(placement: Placement, vmap: VariationMap, layout: mz.MziLayout = mz.DEFAULT_LAYOUT,
                    sampler: MapSampler | None = None, widths=None, thickness: str = "shared") -> ArmVariations:
    """Average ``(rho_w, rho_t)`` over every arm and coupler footprint of each placed MZI.

    Width deviations are always per arm.  With ``thickness="shared"`` the four
    arms of an MZI see one SOI thickness deviation, the mean over their
    footprints; ``"per-arm"`` keeps each arm's own average.
    """
    if thickness not in THICKNESS_MODES:
        raise ValueError(f"thickness must be one of {THICKNESS_MODES}")
    arms, dcs = mzi_sample_rects(placement, layout, widths)
    x0, y0, x1, y1 = vmap.extent
    allr = np.concatenate([arms.reshape(-1, 4), dcs.reshape(-1, 4)])
    tol = 1e-9
    if (allr[:, 0].min() < x0 - tol or allr[:, 1].min() < y0 - tol
            or (allr[:, 0] + allr[:, 2]).max() > x1 + tol or (allr[:, 1] + allr[:, 3]).max() > y1 + tol):
        raise OutOfRangeError("placement extends beyond the variation map")
    sampler = sampler or MapSampler(vmap)
    vals = sampler.sample(allr)
    n = len(placement)
    arms = vals[:4 * n].reshape(n, 4, 2)
    if thickness == "shared":
        arms[..., 1] = arms[..., 1].mean(axis=1, keepdims=True)
    return ArmVariations(arms, vals[4 * n:].reshape(n, 2, 2))


def sample_layer_vars(lp: LayerPlacement, vmap: VariationMap, sampler: MapSampler | None = None,
                      thickness: str = "shared") -> LayerVariations:
    sampler = sampler or MapSampler(vmap)
    return LayerVariations(
        U=sample_mzi_vars(lp.U, vmap, sampler=sampler, thickness=thickness),
        Vh=sample_mzi_vars(lp.Vh, vmap, sampler=sampler, thickness=thickness),
        sigma=sample_mzi_vars(lp.sigma, vmap, sampler=sampler, thickness=thickness),
    )


def network_extent(placements, margin: float = 0.0):
    """Bounding box ``(x0, y0, x1, y1)`` of a list of layer placements, grown by ``margin``."""
    ext = np.array([lp.all.extent for lp in placements])
    return (ext[:, 0].min() - margin, ext[:, 1].min() - margin,
            ext[:, 2].max() + margin, ext[:, 3].max() + margin)
