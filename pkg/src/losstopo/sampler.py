"""Loss values on a Cartesian grid spanned by a few directions around ``theta``.

Point ``(a_1, ..., a_n)`` of the grid holds ``L(theta + sum_i a_i d_i)``.
Values are stored flat in row-major order, last axis fastest.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericError, UsageError
from .oracle import LossOracle, eval_loss
from .spectral import SpectralResult

__all__ = [
    "SubspaceSpec",
    "LandscapeGrid",
    "axis_coordinates",
    "build_subspace",
    "sample_grid",
    "THREADS_ENV",
]

THREADS_ENV = "LOSSTOPO_NUM_THREADS"
LAMBDA_FLOOR = 1e-8


def axis_coordinates(r: float, steps: int) -> np.ndarray:
    """``steps`` points on ``[-r, r]``, exactly symmetric with an exact 0 in the middle."""
    if steps < 3 or steps % 2 == 0:
        raise UsageError(
            f"steps must be an odd integer >= 3 so that alpha=0 (the unperturbed model) "
            f"lies on the grid, got {steps}"
        )
    if not r > 0:
        raise UsageError(f"range must be > 0, got {r}")
    half = steps // 2
    return np.arange(-half, half + 1) / half * r


def array_digest(values: np.ndarray, shape: Sequence[int]) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(shape, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class SubspaceSpec:
    origin: np.ndarray
    directions: np.ndarray  # (n, d)
    ranges: tuple[float, ...]
    steps: tuple[int, ...]
    scaling: str = "uniform"
    eigenvalues: tuple[float, ...] | None = None

    def __post_init__(self):
        origin = np.array(self.origin, dtype=float)
        dirs = np.atleast_2d(np.array(self.directions, dtype=float))
        n = dirs.shape[0]
        if dirs.shape[1] != origin.shape[0]:
            raise UsageError(f"directions have length {dirs.shape[1]}, origin has {origin.shape[0]}")
        if len(self.ranges) != n or len(self.steps) != n:
            raise UsageError("need one range and one step count per direction")
        for r, k in zip(self.ranges, self.steps):
            axis_coordinates(r, k)
        gram = dirs @ dirs.T
        if np.max(np.abs(gram - np.eye(n))) > 1e-8:
            raise UsageError("directions must be orthonormal (within 1e-8)")
        if self.scaling not in ("uniform", "inverse-eigenvalue"):
            raise UsageError(f"unknown scaling {self.scaling!r}")
        if self.eigenvalues is not None and len(self.eigenvalues) != n:
            raise UsageError("need one eigenvalue per direction")
        origin.setflags(write=False)
        dirs.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "ranges", tuple(float(r) for r in self.ranges))
        object.__setattr__(self, "steps", tuple(int(k) for k in self.steps))

    @property
    def n(self) -> int:
        return self.directions.shape[0]

    def axes(self) -> list[np.ndarray]:
        return [axis_coordinates(r, k) for r, k in zip(self.ranges, self.steps)]


@dataclass(frozen=True)
class LandscapeGrid:
    """Scalar field on a rectangular grid.

    ``values`` is flat, row-major with the last axis fastest;
    ``values.reshape(shape)`` gives the n-d array. ``ranges`` are the
    per-axis half widths, ``eigenvalues`` (optional) the curvature along each
    axis, and ``meta`` free-form provenance that file formats carry along.
    """

    shape: tuple[int, ...]
    values: np.ndarray
    ranges: tuple[float, ...]
    eigenvalues: tuple[float | None, ...] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(int(k) for k in self.shape)
        values = np.array(self.values, dtype=float).ravel()
        if len(shape) < 1 or min(shape) < 1:
            raise UsageError(f"grid shape must be non-empty, got {shape}")
        n_expected = int(np.prod(shape))
        if values.shape[0] != n_expected:
            raise UsageError(f"grid of shape {shape} needs {n_expected} values, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise NumericError(f"grid value at index {np.unravel_index(bad, shape)} is {values[bad]}")
        if len(self.ranges) != len(shape):
            raise UsageError("need one range per axis")
        values.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ranges", tuple(float(r) for r in self.ranges))
        if self.eigenvalues is not None:
            object.__setattr__(self, "eigenvalues", tuple(self.eigenvalues))

    @classmethod
    def from_array(cls, values, ranges: float | Sequence[float] = 1.0, **kw) -> "LandscapeGrid":
        """Wrap an n-d array; a scalar ``ranges`` applies to every axis."""
        arr = np.asarray(values, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if np.isscalar(ranges):
            ranges = (float(ranges),) * arr.ndim
        return cls(shape=arr.shape, values=arr.ravel(), ranges=tuple(ranges), **kw)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def f_min(self) -> float:
        return float(self.values.min())

    @property
    def f_max(self) -> float:
        return float(self.values.max())

    @property
    def R(self) -> float:
        return self.f_max - self.f_min

    @property
    def axes(self) -> list[np.ndarray]:
        out = []
        for r, k in zip(self.ranges, self.shape):
            if k == 1:
                out.append(np.zeros(1))
            elif k % 2 == 1:
                out.append(axis_coordinates(r, k))
            else:
                out.append(np.linspace(-r, r, k))
        return out

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    @property
    def digest(self) -> str:
        return array_digest(self.values, self.shape)

    def center_value(self) -> float:
        return float(self.as_array()[tuple(k // 2 for k in self.shape)])


def build_subspace(
    spectral: SpectralResult,
    n: int,
    r: float,
    steps: int,
    scaling: str = "uniform",
    origin=None,
) -> SubspaceSpec:
    """Subspace spanned by the first ``n`` eigenvectors of ``spectral``.

    With ``scaling="inverse-eigenvalue"`` axis ``i`` spans
    ``r / sqrt(max(|lambda_i|, 1e-8))`` instead of ``r``, so stiff directions
    are sampled over a shorter interval.
    """
    if n < 1 or n > spectral.k:
        raise UsageError(f"n={n} must lie in [1, {spectral.k}] (the number of eigenpairs computed)")
    lams = [float(x) for x in spectral.eigenvalues[:n]]
    if scaling == "uniform":
        ranges = (float(r),) * n
    elif scaling == "inverse-eigenvalue":
        ranges = tuple(float(r) / np.sqrt(max(abs(lam), LAMBDA_FLOOR)) for lam in lams)
    else:
        raise UsageError(f"unknown scaling {scaling!r}")
    if origin is None:
        origin = np.zeros(spectral.eigenvectors.shape[1])
    return SubspaceSpec(
        origin=origin,
        directions=spectral.eigenvectors[:n],
        ranges=ranges,
        steps=(int(steps),) * n,
        scaling=scaling,
        eigenvalues=tuple(lams),
    )


def subspace_from_directions(origin, directions, r, steps, eigenvalues=None, scaling="uniform") -> SubspaceSpec:
    """Convenience constructor when the directions are already known."""
    directions = np.atleast_2d(directions)
    n = directions.shape[0]
    if scaling == "inverse-eigenvalue":
        if eigenvalues is None:
            raise UsageError("inverse-eigenvalue scaling needs the eigenvalues")
        ranges = tuple(float(r) / np.sqrt(max(abs(lam), LAMBDA_FLOOR)) for lam in eigenvalues)
    else:
        ranges = (float(r),) * n if np.isscalar(r) else tuple(r)
    steps = (int(steps),) * n if np.isscalar(steps) else tuple(steps)
    return SubspaceSpec(origin, directions, ranges, steps, scaling,
                        None if eigenvalues is None else tuple(float(x) for x in eigenvalues))


def _thread_count(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def sample_grid(
    oracle: LossOracle,
    spec: SubspaceSpec,
    threads: int | None = None,
    meta: dict | None = None,
) -> LandscapeGrid:
    """Evaluate the loss at every grid point; exactly ``prod(steps)`` oracle calls.

    ``threads`` (default: the ``LOSSTOPO_NUM_THREADS`` environment variable,
    else 1) only changes the wall time; every point is written to its own
    slot, so the output is identical for any thread count.

    Raises:
        NumericError: a loss value is non-finite; the message gives the
            offending coordinates.
    """
    if spec.origin.shape[0] != oracle.dim:
        raise UsageError(f"subspace lives in dimension {spec.origin.shape[0]}, oracle has {oracle.dim}")
    axes = spec.axes()
    shape = tuple(len(a) for a in axes)
    total = int(np.prod(shape))
    out = np.empty(total)
    dirs = spec.directions
    theta = spec.origin

    def evaluate(block: range):
        for flat in block:
            idx = np.unravel_index(flat, shape)
            alpha = np.array([axes[i][j] for i, j in enumerate(idx)])
            point = theta + alpha @ dirs
            try:
                out[flat] = eval_loss(oracle, point)
            except NumericError as exc:
                raise NumericError(f"non-finite loss at alpha={alpha.tolist()}: {exc}") from exc

    n_threads = _thread_count(threads)
    if n_threads == 1:
        evaluate(range(total))
    else:
        chunk = -(-total // n_threads)
        blocks = [range(s, min(s + chunk, total)) for s in range(0, total, chunk)]
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            for fut in [pool.submit(evaluate, b) for b in blocks]:
                fut.result()

    info = {"oracle": oracle.describe(), "origin_digest": array_digest(theta, theta.shape),
            "scaling": spec.scaling}
    if meta:
        info.update(meta)
    return LandscapeGrid(shape=shape, values=out, ranges=spec.ranges,
                         eigenvalues=spec.eigenvalues, meta=info)
