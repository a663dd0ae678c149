"""Fully connected networks on FFT-compressed MNIST and their photonic evaluation.

Every layer computes ``f(|W @ x|)``: the mesh output is a complex field and
the detector before each activation reads its magnitude.  Hidden layers use
Softplus, the output layer LogSoftMax.  Inputs are the central ``k x k`` bins
of the centred 2-D FFT of each image (``k = 4`` or ``8``), normalised to unit
length, and weights are complex, so the trained model is exactly what an
ideal mesh computes.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_softmax, softmax

from . import mesh
from .mesh import LayerDecomposition

FEATURE_DIMS = (16, 64)
FEATURE_MODES = ("complex", "modulus")
N_CLASSES = 10


class TrainingError(RuntimeError):
    """Training diverged."""


# --------------------------------------------------------------------------
# IDX files

_IDX_TYPES = {0x08: np.uint8, 0x09: np.int8, 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
_IDX_CODES = {np.dtype(np.uint8): 0x08, np.dtype(np.int8): 0x09}


def _open(path, mode):
    path = Path(path)
    return gzip.open(path, mode) if path.suffix == ".gz" else open(path, mode)


def read_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzipped)."""
    with _open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise ValueError(f"{path}: not an IDX file")
    code, ndim = raw[2], raw[3]
    if code not in _IDX_TYPES:
        raise ValueError(f"{path}: unknown IDX element type 0x{code:02x}")
    shape = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    data = np.frombuffer(raw, dtype=_IDX_TYPES[code], offset=4 + 4 * ndim)
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: truncated IDX payload")
    return data.reshape(shape).astype(np.dtype(_IDX_TYPES[code]).newbyteorder("="))


def write_idx(path, array) -> None:
    a = np.asarray(array)
    if a.dtype not in _IDX_CODES:
        raise ValueError("only uint8 / int8 arrays are supported")
    header = bytes([0, 0, _IDX_CODES[a.dtype], a.ndim]) + struct.pack(f">{a.ndim}I", *a.shape)
    with _open(path, "wb") as fh:
        fh.write(header + a.tobytes())


def _find(directory: Path, stem: str) -> Path:
    for name in (stem + ".gz", stem, stem.replace("-idx", ".idx")):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def load_mnist(directory):
    """``(train_images, train_labels, test_images, test_labels)`` from standard IDX file names."""
    d = Path(directory)
    return (
        read_idx(_find(d, "train-images-idx3-ubyte")),
        read_idx(_find(d, "train-labels-idx1-ubyte")),
        read_idx(_find(d, "t10k-images-idx3-ubyte")),
        read_idx(_find(d, "t10k-labels-idx1-ubyte")),
    )


# --------------------------------------------------------------------------
# features


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    normalization: str  # "unit" or "zero" (all-zero input left as is)


def _crop_side(dim):
    if dim not in FEATURE_DIMS:
        raise ValueError(f"feature dimension must be one of {FEATURE_DIMS}")
    return int(round(np.sqrt(dim)))


def extract_batch(images, dim: int = 16, mode: str = "complex") -> np.ndarray:
    """Features of a stack of images, shape ``(n, dim)``; all-zero rows stay zero."""
    if mode not in FEATURE_MODES:
        raise ValueError(f"mode must be one of {FEATURE_MODES}")
    k = _crop_side(dim)
    X = np.asarray(images, float)
    if X.ndim == 2:
        X = X[None]
    if X.shape[1:] != (28, 28):
        raise ValueError("images must be 28 x 28")
    F = np.fft.fftshift(np.fft.fft2(X), axes=(1, 2))
    c, h = 14, k // 2
    C = F[:, c - h:c + h, c - h:c + h].reshape(len(X), dim)
    if mode == "modulus":
        C = np.abs(C).astype(complex)
    norm = np.linalg.norm(C, axis=1, keepdims=True)
    return np.divide(C, norm, out=np.zeros_like(C), where=norm > 0)


def extract_features(image, dim: int = 16, mode: str = "complex") -> FeatureVector:
    """Centre ``sqrt(dim) x sqrt(dim)`` bins of the shifted FFT, flattened and unit-normalised."""
    v = extract_batch(image, dim, mode)[0]
    tag = "unit" if np.any(v) else "zero"
    return FeatureVector(v if mode == "complex" else v.real, tag)


# --------------------------------------------------------------------------
# model


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass(eq=False)
class SpnnModel:
    """``FC(d,d)-SP-FC(d,d)-SP-FC(d,10)-LSM`` acting on field magnitudes."""

    weights: list
    feature_mode: str = "complex"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = [np.asarray(W, complex) for W in self.weights]
        d = self.dim
        shapes = [W.shape for W in self.weights]
        if shapes != [(d, d), (d, d), (N_CLASSES, d)] or d not in FEATURE_DIMS:
            raise ValueError(f"unsupported architecture {shapes}")
        if not all(np.isfinite(W).all() for W in self.weights):
            raise ValueError("weights must be finite")

    @property
    def dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def layer_sizes(self):
        return [W.shape[::-1] for W in self.weights]

    def forward(self, X, weights=None):
        """Log-probabilities ``(n, 10)`` for feature rows ``X``."""
        return forward(X, self.weights if weights is None else weights)

    def predict(self, X, weights=None):
        return self.forward(X, weights).argmax(axis=1)

    def features(self, images):
        return extract_batch(images, self.dim, self.feature_mode)

    def to_dict(self) -> dict:
        return {
            "format": "spnn-fpv/weights",
            "layers": [
                {"shape": list(W.shape), "activation": act,
                 "real": W.real.ravel().tolist(), "imag": W.imag.ravel().tolist()}
                for W, act in zip(self.weights, ("softplus", "softplus", "logsoftmax"))
            ],
            "feature_mode": self.feature_mode,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpnnModel":
        ws = [(np.asarray(L["real"]) + 1j * np.asarray(L["imag"])).reshape(L["shape"]) for L in data["layers"]]
        return cls(ws, data.get("feature_mode", "complex"), data.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "SpnnModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def forward(X, weights):
    h = np.asarray(X)
    for k, W in enumerate(weights):
        a = np.abs(h @ W.T)
        h = softplus(a) if k < len(weights) - 1 else a
    return log_softmax(h, axis=1)


def init_model(dim: int = 16, seed: int = 0, feature_mode: str = "complex") -> SpnnModel:
    """Complex Gaussian weights with variance ``1 / fan_in``."""
    rng = np.random.default_rng(seed)
    ws = []
    for n_in, n_out in ((dim, dim), (dim, dim), (dim, N_CLASSES)):
        ws.append((rng.standard_normal((n_out, n_in)) + 1j * rng.standard_normal((n_out, n_in)))
                  / np.sqrt(2 * n_in))
    return SpnnModel(ws, feature_mode)


def network1(seed: int = 0) -> SpnnModel:
    return init_model(16, seed)


def network2(seed: int = 0) -> SpnnModel:
    return init_model(64, seed)


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    lr: float = 2e-2
    lr_decay: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


def loss_and_grads(X, y, weights):
    """Mean negative log-likelihood and its gradients w.r.t. the complex weights.

    Gradients are ``dL/dRe(W) + i dL/dIm(W)``.  The derivative of ``|z|`` is
    taken as ``z / |z|`` and set to 0 at ``z = 0``.
    """
    acts = [np.asarray(X)]
    zs, mags = [], []
    n_layers = len(weights)
    for k, W in enumerate(weights):
        z = acts[-1] @ W.T
        a = np.abs(z)
        zs.append(z)
        mags.append(a)
        acts.append(softplus(a) if k < n_layers - 1 else a)
    logp = log_softmax(acts[-1], axis=1)
    n = len(y)
    loss = -logp[np.arange(n), y].mean()
    g_a = softmax(acts[-1], axis=1)
    g_a[np.arange(n), y] -= 1
    g_a /= n
    grads = [None] * n_layers
    for k in reversed(range(n_layers)):
        if k < n_layers - 1:
            g_a = g_a * expit(mags[k])
        unit = np.divide(zs[k], mags[k], out=np.zeros_like(zs[k]), where=mags[k] > 0)
        g_z = g_a * unit
        grads[k] = g_z.T @ acts[k].conj()
        if k > 0:
            g_a = (g_z @ weights[k].conj()).real
    return loss, grads


def train(model: SpnnModel, X, y, config: TrainConfig = TrainConfig(), X_test=None, y_test=None,
          log=None) -> SpnnModel:
    """Mini-batch Adam on the negative log-likelihood; returns a new trained model."""
    X = np.asarray(X)
    y = np.asarray(y, int)
    rng = np.random.default_rng(config.seed)
    ws = [W.copy() for W in model.weights]
    m = [np.zeros_like(W) for W in ws]
    v = [np.zeros(W.shape + (2,)) for W in ws]
    step = 0
    lr = config.lr
    for epoch in range(config.epochs):
        perm = rng.permutation(len(y))
        for b in range(0, len(y), config.batch_size):
            idx = perm[b:b + config.batch_size]
            loss, grads = loss_and_grads(X[idx], y[idx], ws)
            if not np.isfinite(loss):
                raise TrainingError(f"loss became {loss} at epoch {epoch}")
            step += 1
            c1 = 1 - config.beta1**step
            c2 = 1 - config.beta2**step
            for W, g, mk, vk in zip(ws, grads, m, v):
                mk *= config.beta1
                mk += (1 - config.beta1) * g
                g2 = np.stack([g.real**2, g.imag**2], -1)
                vk *= config.beta2
                vk += (1 - config.beta2) * g2
                den = np.sqrt(vk / c2) + config.eps
                W -= lr * ((mk.real / c1) / den[..., 0] + 1j * (mk.imag / c1) / den[..., 1])
        lr *= config.lr_decay
        if log is not None:
            msg = f"epoch {epoch + 1}: train acc {accuracy_of(ws, X, y):.4f}"
            if X_test is not None:
                msg += f", test acc {accuracy_of(ws, X_test, y_test):.4f}"
            log(msg)
    meta = dict(model.meta)
    meta.update(training=asdict(config), train_accuracy=accuracy_of(ws, X, y))
    if X_test is not None:
        meta["test_accuracy"] = accuracy_of(ws, X_test, y_test)
    return SpnnModel(ws, model.feature_mode, meta)


def accuracy_of(weights, X, y) -> float:
    return float(np.mean(forward(X, weights).argmax(axis=1) == np.asarray(y)))


# --------------------------------------------------------------------------
# photonic evaluation


def decompose_model(model: SpnnModel) -> list[LayerDecomposition]:
    return [mesh.decompose_layer(W) for W in model.weights]


def evaluate(model: SpnnModel, decs=None, X=None, y=None, weights=None) -> float:
    """Accuracy on ``(X, y)`` using software weights, the nominal mesh weights, or ``weights``.

    With ``decs`` and no ``weights`` the weights are rebuilt from the ideal
    meshes.  ``weights`` takes precedence, e.g. deviated matrices.
    """
    if weights is None:
        weights = model.weights if decs is None else [d.nominal() for d in decs]
    if len(weights) != len(model.weights) or any(a.shape != b.shape for a, b in zip(weights, model.weights)):
        raise ValueError("weights do not match the model architecture")
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"expected features of dimension {model.dim}")
    return accuracy_of(weights, X, y)


def phase_shifter_count(decs) -> int:
    """Two heaters per MZI, counting the Sigma arrays."""
    return 2 * sum(d.mzi_count for d in decs)
