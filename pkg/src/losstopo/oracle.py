"""Loss functions the rest of the pipeline probes.

A :class:`LossOracle` exposes the loss value, its gradient and a
Hessian-vector product at a flat parameter vector. Built-in analytic
functions and a small dense MLP make every downstream stage runnable without
an external ML framework.

Oracles are immutable once constructed, so one instance can be evaluated from
several threads at the same time.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, NumericError, UsageError

__all__ = [
    "LossOracle",
    "Quadratic",
    "DoubleWell1D",
    "Rosenbrock",
    "GaussianMixture",
    "MlpSpec",
    "ToyDataset",
    "MlpOracle",
    "eval_loss",
    "eval_gradient",
    "eval_hvp",
    "train_mlp",
    "make_builtin",
    "BUILTIN_NAMES",
    "save_checkpoint",
    "load_checkpoint",
]


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class LossOracle:
    """Base class for loss functions of ``dim`` real parameters.

    Subclasses implement :meth:`value` and :meth:`gradient`. The default
    :meth:`hvp` is a central difference of the gradient along the normalized
    direction, with step ``1e-4 * max(1, max|theta|)``.
    """

    name = "oracle"

    def __init__(self, dim: int):
        if int(dim) < 1:
            raise UsageError(f"oracle dimension must be >= 1, got {dim}")
        self._dim = int(dim)

    @property
    def dim(self) -> int:
        return self._dim

    def value(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hvp(self, theta: np.ndarray, v: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return np.zeros(self.dim)
        unit = v / norm
        eps = 1e-4 * max(1.0, float(np.max(np.abs(theta))))
        g_plus = self.gradient(theta + eps * unit)
        g_minus = self.gradient(theta - eps * unit)
        with np.errstate(invalid="ignore", over="ignore"):
            return (g_plus - g_minus) * (norm / (2.0 * eps))

    def default_origin(self) -> np.ndarray:
        """Point the landscape is centred on when none is given."""
        return np.zeros(self.dim)

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


def _check_vector(theta, dim: int, what: str = "theta") -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.shape[0] != dim:
        raise UsageError(
            f"{what} has shape {theta.shape}, oracle expects a vector of length {dim}"
        )
    if not np.all(np.isfinite(theta)):
        raise NumericError(f"{what} contains non-finite entries: {theta!r}")
    return theta


def eval_loss(oracle: LossOracle, theta) -> float:
    """Evaluate the loss, checking the dimension and the finiteness of the result."""
    theta = _check_vector(theta, oracle.dim)
    out = float(oracle.value(theta))
    if not np.isfinite(out):
        raise NumericError(f"loss is {out} at theta={theta.tolist()}")
    return out


def eval_gradient(oracle: LossOracle, theta) -> np.ndarray:
    theta = _check_vector(theta, oracle.dim)
    g = np.asarray(oracle.gradient(theta), dtype=float)
    if g.shape != (oracle.dim,):
        raise NumericError(f"gradient has shape {g.shape}, expected ({oracle.dim},)")
    if not np.all(np.isfinite(g)):
        raise NumericError(f"gradient is non-finite at theta={theta.tolist()}")
    return g


def eval_hvp(oracle: LossOracle, theta, v) -> np.ndarray:
    """Hessian-vector product ``H(theta) @ v``.

    Exact for :class:`Quadratic`, a central difference of the gradient for
    every other oracle. A zero ``v`` returns the zero vector without touching
    the oracle.
    """
    theta = _check_vector(theta, oracle.dim)
    v = _check_vector(v, oracle.dim, what="v")
    if not np.any(v):
        return np.zeros(oracle.dim)
    hv = np.asarray(oracle.hvp(theta, v), dtype=float)
    if not np.all(np.isfinite(hv)):
        raise NumericError(f"Hessian-vector product is non-finite at theta={theta.tolist()}")
    return hv


# --------------------------------------------------------------------------
# analytic builtins


class Quadratic(LossOracle):
    """``L(theta) = 0.5 * theta^T A theta`` with symmetric ``A``."""

    name = "quadratic"

    def __init__(self, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise UsageError(f"quadratic matrix must be square, got shape {A.shape}")
        scale = max(1.0, float(np.max(np.abs(A))))
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * scale):
            raise UsageError("quadratic matrix must be symmetric")
        super().__init__(A.shape[0])
        self.A = _frozen(0.5 * (A + A.T))

    @classmethod
    def diag(cls, values: Sequence[float]) -> "Quadratic":
        return cls(np.diag(np.asarray(values, dtype=float)))

    def value(self, theta):
        return 0.5 * float(theta @ self.A @ theta)

    def gradient(self, theta):
        return self.A @ theta

    def hvp(self, theta, v):
        return self.A @ v

    def describe(self):
        d = super().describe()
        if np.count_nonzero(self.A - np.diag(np.diag(self.A))) == 0:
            d["diag"] = np.diag(self.A).tolist()
        return d


class DoubleWell1D(LossOracle):
    """Quartic double well ``barrier * (x^2 - 1)^2 + tilt * x``.

    Minima sit at ``x = +-1`` when ``tilt == 0``; a positive tilt makes the
    left well the deeper one.
    """

    name = "double-well-1d"

    def __init__(self, barrier: float = 1.0, tilt: float = 0.0):
        super().__init__(1)
        self.barrier = float(barrier)
        self.tilt = float(tilt)

    def value(self, theta):
        x = theta[0]
        return float(self.barrier * (x * x - 1.0) ** 2 + self.tilt * x)

    def gradient(self, theta):
        x = theta[0]
        return np.array([4.0 * self.barrier * x * (x * x - 1.0) + self.tilt])

    def default_origin(self):
        return np.array([1.0]) if self.tilt == 0.0 else np.zeros(1)

    def describe(self):
        return {**super().describe(), "barrier": self.barrier, "tilt": self.tilt}


class Rosenbrock(LossOracle):
    """``sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2``; minimum at all-ones."""

    name = "rosenbrock"

    def __init__(self, dim: int = 2):
        if dim < 2:
            raise UsageError("rosenbrock needs dim >= 2")
        super().__init__(dim)

    def value(self, theta):
        x0, x1 = theta[:-1], theta[1:]
        return float(np.sum(100.0 * (x1 - x0**2) ** 2 + (1.0 - x0) ** 2))

    def gradient(self, theta):
        x0, x1 = theta[:-1], theta[1:]
        r = x1 - x0**2
        g = np.zeros_like(theta)
        g[:-1] += -400.0 * x0 * r - 2.0 * (1.0 - x0)
        g[1:] += 200.0 * r
        return g

    def default_origin(self):
        return np.ones(self.dim)


class GaussianMixture(LossOracle):
    """Bowl with Gaussian dents.

    ``L(theta) = |theta|^2 / 2 - sum_j depth_j * exp(-|theta - c_j|^2 / (2 width_j^2))``

    Each dent that is deep and narrow enough relative to the bowl's slope
    becomes its own basin, which makes the number and depth of minima easy to
    dial in.
    """

    name = "gaussian-mixture"

    def __init__(self, centers, depths, widths, seed: int | None = None):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        depths = np.atleast_1d(np.asarray(depths, dtype=float))
        widths = np.atleast_1d(np.asarray(widths, dtype=float))
        n = centers.shape[0]
        if depths.shape != (n,) or widths.shape != (n,):
            raise UsageError("centers, depths and widths must describe the same number of dents")
        if np.any(widths <= 0):
            raise UsageError("gaussian widths must be positive")
        super().__init__(centers.shape[1])
        self.centers = _frozen(centers)
        self.depths = _frozen(depths)
        self.widths = _frozen(widths)
        self.seed = seed

    @classmethod
    def random(
        cls,
        dim: int = 2,
        n_basins: int = 6,
        seed: int = 0,
        spread: float = 1.0,
        depth: tuple[float, float] = (0.5, 1.5),
        width: tuple[float, float] = (0.15, 0.3),
    ) -> "GaussianMixture":
        """Dents with centres uniform in ``[-spread, spread]^dim``; deterministic in ``seed``."""
        rng = np.random.default_rng(seed)
        centers = rng.uniform(-spread, spread, size=(n_basins, dim))
        depths = rng.uniform(*depth, size=n_basins)
        widths = rng.uniform(*width, size=n_basins)
        return cls(centers, depths, widths, seed=seed)

    def _bumps(self, theta):
        diff = theta[None, :] - self.centers
        sq = np.einsum("ij,ij->i", diff, diff)
        return diff, self.depths * np.exp(-sq / (2.0 * self.widths**2))

    def value(self, theta):
        _, bumps = self._bumps(theta)
        return float(0.5 * theta @ theta - bumps.sum())

    def gradient(self, theta):
        diff, bumps = self._bumps(theta)
        return theta + (bumps / self.widths**2) @ diff

    def describe(self):
        return {
            **super().describe(),
            "seed": self.seed,
            "centers": self.centers.tolist(),
            "depths": self.depths.tolist(),
            "widths": self.widths.tolist(),
        }


# --------------------------------------------------------------------------
# tiny MLP


_ACTIVATIONS = ("tanh", "relu")
_LOSSES = ("mse", "cross-entropy")


@dataclass(frozen=True)
class MlpSpec:
    """Dense network layout: ``widths[0]`` inputs, ``widths[-1]`` outputs."""

    widths: tuple[int, ...]
    activation: str = "tanh"
    loss: str = "cross-entropy"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise UsageError(f"MLP needs at least two positive layer widths, got {self.widths}")
        if self.activation not in _ACTIVATIONS:
            raise UsageError(f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}")
        if self.loss not in _LOSSES:
            raise UsageError(f"loss must be one of {_LOSSES}, got {self.loss!r}")
        if self.loss == "mse" and self.widths[-1] != 1:
            raise UsageError("mse loss expects a single output unit")

    @property
    def n_params(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        try:
            return cls(widths=d["widths"], activation=d["activation"], loss=d["loss"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"invalid MlpSpec document: {exc}") from exc


@dataclass(frozen=True)
class ToyDataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise UsageError(f"targets must be a vector of length {X.shape[0]}, got shape {y.shape}")
        if X.shape[0] < 1:
            raise UsageError("dataset needs at least one sample")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y, dtype=y.dtype if y.dtype.kind in "iu" else float))

    @property
    def m(self) -> int:
        return self.X.shape[0]

    def to_dict(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ToyDataset":
        try:
            return cls(X=d["X"], y=d["y"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"invalid ToyDataset document: {exc}") from exc

    @classmethod
    def two_blobs(cls, m: int = 200, seed: int = 0, separation: float = 2.0, noise: float = 1.0):
        """Two Gaussian clouds in 2D labelled 0 and 1."""
        rng = np.random.default_rng(seed)
        y = np.arange(m) % 2
        centers = np.array([[-separation / 2, 0.0], [separation / 2, 0.0]])
        X = centers[y] + noise * rng.standard_normal((m, 2))
        return cls(X=X, y=y.astype(np.int64))


def _layers(spec: MlpSpec, params: np.ndarray):
    out, pos = [], 0
    for a, b in zip(spec.widths[:-1], spec.widths[1:]):
        W = params[pos : pos + a * b].reshape(a, b)
        pos += a * b
        out.append((W, params[pos : pos + b]))
        pos += b
    return out


def _mlp_loss_grad(spec: MlpSpec, params, X, y, need_grad=True):
    layers = _layers(spec, params)
    acts, pre = [X], []
    h = X
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        pre.append(z)
        h = z if i == len(layers) - 1 else (np.tanh(z) if spec.activation == "tanh" else np.maximum(z, 0.0))
        acts.append(h)
    out = acts[-1]
    m = X.shape[0]
    if spec.loss == "mse":
        resid = out[:, 0] - y
        loss = float(np.mean(resid**2))
        delta = (2.0 / m) * resid[:, None]
    else:
        shifted = out - out.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logz
        labels = y.astype(np.int64)
        loss = float(-np.mean(logp[np.arange(m), labels]))
        delta = np.exp(logp)
        delta[np.arange(m), labels] -= 1.0
        delta /= m
    if not need_grad:
        return loss, None

    grads = []
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads.append(((acts[i].T @ delta).ravel(), delta.sum(axis=0)))
        if i > 0:
            delta = delta @ W.T
            if spec.activation == "tanh":
                delta = delta * (1.0 - acts[i] ** 2)
            else:
                delta = delta * (pre[i - 1] > 0.0)
    flat = np.concatenate([part for gW, gb in reversed(grads) for part in (gW, gb)])
    return loss, flat


class MlpOracle(LossOracle):
    """Mean loss of a dense MLP over the whole dataset, as a function of its flat weights.

    Parameters are laid out layer by layer, each as the row-major
    ``(fan_in, fan_out)`` weight matrix followed by the bias.
    """

    name = "mlp"

    def __init__(self, spec: MlpSpec, data: ToyDataset, origin=None):
        if data.X.shape[1] != spec.widths[0]:
            raise UsageError(
                f"dataset has {data.X.shape[1]} features but the MLP input width is {spec.widths[0]}"
            )
        if spec.loss == "cross-entropy":
            if data.y.dtype.kind not in "iu":
                raise UsageError("cross-entropy needs integer class labels")
            if data.y.min() < 0 or data.y.max() >= spec.widths[-1]:
                raise UsageError(f"labels must lie in [0, {spec.widths[-1]})")
        super().__init__(spec.n_params)
        self.spec = spec
        self.data = data
        self._origin = None if origin is None else _frozen(origin)

    def value(self, theta):
        return _mlp_loss_grad(self.spec, theta, self.data.X, self.data.y, need_grad=False)[0]

    def gradient(self, theta):
        return _mlp_loss_grad(self.spec, theta, self.data.X, self.data.y)[1]

    def accuracy(self, theta) -> float:
        """Training accuracy for classifiers."""
        h = self.data.X
        layers = _layers(self.spec, np.asarray(theta, dtype=float))
        for i, (W, b) in enumerate(layers):
            h = h @ W + b
            if i < len(layers) - 1:
                h = np.tanh(h) if self.spec.activation == "tanh" else np.maximum(h, 0.0)
        return float(np.mean(h.argmax(axis=1) == self.data.y))

    def default_origin(self):
        if self._origin is not None:
            return np.array(self._origin)
        return init_mlp(self.spec, seed=0)

    def describe(self):
        return {**super().describe(), "spec": self.spec.to_dict(), "samples": self.data.m}


def init_mlp(spec: MlpSpec, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    parts = []
    for a, b in zip(spec.widths[:-1], spec.widths[1:]):
        parts.append(rng.standard_normal(a * b) / np.sqrt(a))
        parts.append(np.zeros(b))
    return np.concatenate(parts)


def train_mlp(
    spec: MlpSpec,
    data: ToyDataset,
    epochs: int = 100,
    lr: float = 0.1,
    batch: int = 32,
    weight_decay: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Mini-batch SGD from a seeded initialization; returns the flat parameters.

    The result is bit-identical for identical arguments. ``epochs=0`` returns
    the initialization.

    Raises:
        NumericError: the training loss became non-finite; the message names
            the epoch.
    """
    MlpOracle(spec, data)  # shape validation
    if epochs < 0 or batch < 1 or lr <= 0:
        raise UsageError("need epochs >= 0, batch >= 1 and lr > 0")
    rng = np.random.default_rng(seed)
    params = init_mlp(spec, seed)
    X, y = data.X, data.y
    for epoch in range(epochs):
        order = rng.permutation(data.m)
        with np.errstate(all="ignore"):  # divergence is reported below
            for start in range(0, data.m, batch):
                idx = order[start : start + batch]
                _, g = _mlp_loss_grad(spec, params, X[idx], y[idx])
                params = params - lr * (g + weight_decay * params)
            loss, _ = _mlp_loss_grad(spec, params, X, y, need_grad=False)
        if not (np.isfinite(loss) and np.all(np.isfinite(params))):
            raise NumericError(f"training diverged at epoch {epoch}: loss={loss}")
    return params


# --------------------------------------------------------------------------
# registry and checkpoints

BUILTIN_NAMES = ("quadratic", "quadratic-diag-<a>-<b>-...", "double-well-1d", "rosenbrock", "gaussian-mixture")

_DIAG_RE = re.compile(r"^quadratic-diag((?:-[0-9.eE+]+)+)$")


def make_builtin(name: str, dim: int | None = None, seed: int = 0) -> LossOracle:
    """Construct a built-in oracle by its command-line name.

    ``quadratic`` is ``diag(5, 2, 1)``; ``quadratic-diag-4-1`` spells out the
    diagonal. ``dim`` sets the parameter count of ``rosenbrock`` and
    ``gaussian-mixture``, and ``seed`` places the mixture's dents.
    """
    if name == "quadratic":
        return Quadratic.diag([5.0, 2.0, 1.0])
    m = _DIAG_RE.match(name)
    if m:
        try:
            values = [float(tok) for tok in m.group(1).strip("-").split("-")]
        except ValueError:
            values = None
        if values:
            return Quadratic.diag(values)
    if name == "double-well-1d":
        return DoubleWell1D()
    if name == "rosenbrock":
        return Rosenbrock(dim or 2)
    if name == "gaussian-mixture":
        return GaussianMixture.random(dim=dim or 2, seed=seed)
    raise UsageError(f"unknown builtin {name!r}; available: {', '.join(BUILTIN_NAMES)}")


def save_checkpoint(path, params, spec: MlpSpec | dict | None = None) -> None:
    """Write ``params`` as raw little-endian float64 plus a ``<path>.json`` sidecar."""
    path = Path(path)
    params = np.ascontiguousarray(params, dtype="<f8")
    spec_doc = spec.to_dict() if isinstance(spec, MlpSpec) else spec
    path.write_bytes(params.tobytes())
    sidecar = {"dim": int(params.shape[0]), "spec": spec_doc}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    try:
        sidecar = json.loads(Path(str(path) + ".json").read_text())
        raw = path.read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    dim = sidecar.get("dim")
    if not isinstance(dim, int) or len(raw) != 8 * dim:
        raise FormatError(f"checkpoint {path} holds {len(raw) // 8} values, sidecar says dim={dim}")
    params = np.frombuffer(raw, dtype="<f8").astype(float)
    return params, sidecar
