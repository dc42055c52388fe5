"""Hessian spectrum through Hessian-vector products only.

Top eigenpairs come from power iteration with deflation, the trace from
Hutchinson's estimator with Rademacher probes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateHessianWarning, UsageError
from .oracle import LossOracle, eval_hvp, save_checkpoint

__all__ = [
    "SpectralConfig",
    "SpectralResult",
    "TraceEstimate",
    "top_eigenpairs",
    "max_eigenvalue",
    "hutchinson_trace",
]


@dataclass(frozen=True)
class SpectralConfig:
    """Settings for :func:`top_eigenpairs`.

    ``ordering="magnitude"`` returns the pairs with the largest ``|lambda|``
    first and keeps negative eigenvalues with their sign; ``"algebraic"``
    returns the largest signed eigenvalues.
    """

    k: int = 1
    max_iter: int = 1000
    tol: float = 1e-6
    seed: int = 0
    ordering: str = "magnitude"

    def __post_init__(self):
        if self.k < 1:
            raise UsageError(f"k must be >= 1, got {self.k}")
        if self.max_iter < 1:
            raise UsageError("max_iter must be positive")
        if not self.tol > 0:
            raise UsageError("tol must be > 0")
        if self.ordering not in ("magnitude", "algebraic"):
            raise UsageError(f"ordering must be 'magnitude' or 'algebraic', got {self.ordering!r}")


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # shape (k, d), one unit vector per row
    iterations: tuple[int, ...]
    residuals: tuple[float, ...]
    converged: tuple[bool, ...]
    degenerate: tuple[bool, ...]
    config: SpectralConfig = field(default_factory=SpectralConfig)

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "residuals": [float(x) for x in self.residuals],
            "iterations": [int(x) for x in self.iterations],
            "converged": list(self.converged),
            "degenerate": list(self.degenerate),
            "ordering": self.config.ordering,
            "tol": self.config.tol,
            "seed": self.config.seed,
        }

    def save(self, path, vectors_dir=None) -> list[Path]:
        """Write the JSON summary and one float64 sidecar file per eigenvector."""
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        vectors_dir = Path(vectors_dir) if vectors_dir is not None else path.parent
        written = [path]
        for i, vec in enumerate(self.eigenvectors):
            vpath = vectors_dir / f"{path.stem}.eigvec{i}.f64"
            save_checkpoint(vpath, vec, {"index": i, "eigenvalue": float(self.eigenvalues[i])})
            written.append(vpath)
        return written


@dataclass(frozen=True)
class TraceEstimate:
    estimate: float
    stderr: float
    samples: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "samples": self.samples}


def _fix_sign(v: np.ndarray) -> np.ndarray:
    # largest-magnitude component positive; argmax takes the first on ties
    return -v if v[np.argmax(np.abs(v))] < 0 else v


def _orthogonalize(v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    # two passes of classical Gram-Schmidt keep the Gram matrix at roundoff level
    for _ in range(2):
        for u in basis:
            v = v - (u @ v) * u
    return v


def top_eigenpairs(oracle: LossOracle, theta, cfg: SpectralConfig | None = None) -> SpectralResult:
    """Top-``k`` Hessian eigenpairs at ``theta`` by deflated power iteration.

    Each iterate is re-orthogonalized against every accepted eigenvector. A pair
    is accepted once the Rayleigh quotient moves by at most
    ``tol * max(1, |lambda|)`` between iterations and the residual
    ``|H v - lambda v|`` is within the same bound. A final Rayleigh-Ritz step
    over the accepted vectors gives the returned pairs; ``converged`` reports
    whether each final residual meets the bound.

    When the deflated Hessian vanishes on the remaining subspace the pair is
    reported with ``lambda = 0``, an arbitrary orthonormal vector and
    ``degenerate=True``.
    """
    cfg = cfg or SpectralConfig()
    theta = np.asarray(theta, dtype=float)
    d = oracle.dim
    if cfg.k > d:
        raise UsageError(f"k={cfg.k} exceeds the parameter dimension {d}")
    rng = np.random.default_rng(cfg.seed)

    def hvp(v):
        return eval_hvp(oracle, theta, v)

    shift = 0.0
    if cfg.ordering == "algebraic":
        # H + s I with s = spectral radius is PSD; its dominant pairs are the
        # algebraically largest pairs of H.
        lead = _power(hvp, rng.standard_normal(d), [], cfg, 0.0)
        shift = abs(lead[0])

    vals, vecs, iters, resids, conv, degen = [], [], [], [], [], []
    for _ in range(cfg.k):
        start = rng.standard_normal(d)
        lam, v, it, res, ok, deg = _power(hvp, start, vecs, cfg, shift)
        vals.append(lam)
        vecs.append(v)
        iters.append(it)
        resids.append(res)
        conv.append(ok)
        degen.append(deg)

    # Rayleigh-Ritz on the accepted vectors removes the coupling each deflated
    # pair inherits from the small residuals of the pairs found before it
    V = np.array(vecs).reshape(cfg.k, d)
    HV = np.array([hvp(v) for v in V]).reshape(cfg.k, d)
    T = V @ HV.T
    ritz, Q = np.linalg.eigh((T + T.T) / 2)
    V, HV = Q.T @ V, Q.T @ HV
    vals = [float(x) for x in ritz]
    vecs = list(V)
    resids = [float(np.linalg.norm(hv - lam * v)) for lam, v, hv in zip(vals, V, HV)]
    # a pair is certified by its own residual, whichever iteration produced it
    conv = [r <= cfg.tol * max(1.0, abs(lam)) for lam, r in zip(vals, resids)]
    zero = 1e-12 * max([1.0] + [abs(x) for x in vals])
    degen = [any(degen) and abs(lam) <= zero for lam in vals]

    key = (lambda i: -abs(vals[i])) if cfg.ordering == "magnitude" else (lambda i: -vals[i])
    order = sorted(range(cfg.k), key=key)
    vec_arr = np.array([_fix_sign(vecs[i]) for i in order]).reshape(cfg.k, d)
    return SpectralResult(
        eigenvalues=np.array([vals[i] for i in order]),
        eigenvectors=vec_arr,
        iterations=tuple(iters[i] for i in order),
        residuals=tuple(resids[i] for i in order),
        converged=tuple(conv[i] for i in order),
        degenerate=tuple(degen[i] for i in order),
        config=cfg,
    )


def _power(hvp, start, basis, cfg: SpectralConfig, shift: float):
    scale = max([1.0] + [abs(float(u @ hvp(u))) for u in basis[:1]])
    zero_tol = 1e-12 * scale

    v = _orthogonalize(start, basis)
    v /= np.linalg.norm(v)
    lam_prev = None
    lam, res = 0.0, np.inf
    for it in range(1, cfg.max_iter + 1):
        w = _orthogonalize(hvp(v), basis)
        w_norm = np.linalg.norm(w)
        if w_norm <= zero_tol:
            return 0.0, v, it, float(w_norm), True, True
        lam = float(v @ w)
        res = float(np.linalg.norm(w - lam * v))
        bound = cfg.tol * max(1.0, abs(lam))
        if lam_prev is not None and abs(lam - lam_prev) <= bound and res <= bound:
            return lam, v, it, res, True, False
        lam_prev = lam
        step = w + shift * v
        v = _orthogonalize(step, basis)
        v /= np.linalg.norm(v)
    return lam, v, cfg.max_iter, res, False, False


def max_eigenvalue(oracle: LossOracle, theta, cfg: SpectralConfig | None = None) -> float:
    """Signed Hessian eigenvalue of largest magnitude (plain power iteration).

    Emits :class:`DegenerateHessianWarning` when the Hessian-vector product
    vanishes, in which case 0.0 is returned.
    """
    cfg = cfg or SpectralConfig()
    one = SpectralConfig(k=1, max_iter=cfg.max_iter, tol=cfg.tol, seed=cfg.seed, ordering="magnitude")
    res = top_eigenpairs(oracle, theta, one)
    if res.degenerate[0]:
        warnings.warn("Hessian-vector product vanished; Hessian is degenerate", DegenerateHessianWarning)
    if not res.converged[0]:
        warnings.warn(f"power iteration did not converge in {cfg.max_iter} iterations", RuntimeWarning)
    return float(res.eigenvalues[0])


def hutchinson_trace(oracle: LossOracle, theta, samples: int = 100, seed: int = 0) -> TraceEstimate:
    """Hutchinson estimate of ``tr(H)`` from Rademacher probes.

    The standard error is the sample standard deviation of ``z^T H z`` over
    ``sqrt(samples)``; it is 0 for a single sample.
    """
    if samples < 1:
        raise UsageError("samples must be >= 1")
    theta = np.asarray(theta, dtype=float)
    rng = np.random.default_rng(seed)
    quad = np.empty(samples)
    for i in range(samples):
        z = rng.integers(0, 2, size=oracle.dim) * 2.0 - 1.0
        quad[i] = z @ eval_hvp(oracle, theta, z)
    stderr = float(np.std(quad, ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return TraceEstimate(estimate=float(np.mean(quad)), stderr=stderr, samples=samples)
