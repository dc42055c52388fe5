"""SMAD and the scalar summaries that accompany it in a landscape report.

SMAD averages, over the finite saddle-minimum pairs, the pair's persistence
divided by the loss range ``R`` times the share of grid points in the
minimum's stable manifold::

    SMAD = 1/|S| * sum_i (p_i / R) * (w_i / N)

Lower values mean a smoother landscape. A landscape with no finite pair
(unimodal) or no range (constant) scores 0.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import UsageError
from .sampler import LandscapeGrid
from .spectral import SpectralResult, TraceEstimate
from .topology import Barcode, StableManifolds

__all__ = ["SmadTerm", "SmadReport", "LandscapeReport", "smad", "persistence_range",
           "assemble_report", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SmadTerm:
    minimum: int
    min_index: int
    persistence: float
    weight: int
    term: float


@dataclass(frozen=True)
class SmadReport:
    smad: float
    pair_count: int
    R: float
    N: int
    contributions: tuple[SmadTerm, ...]

    def to_dict(self) -> dict:
        return {
            "smad": self.smad,
            "pair_count": self.pair_count,
            "R": self.R,
            "N": self.N,
            "pairs": [asdict(t) for t in self.contributions],
        }


def _check_provenance(grid: LandscapeGrid, *parts):
    digest = grid.digest
    for part in parts:
        if part is not None and part.grid_digest != digest:
            raise UsageError(
                f"{type(part).__name__} was computed from grid {part.grid_digest}, "
                f"not from this grid ({digest})"
            )


def smad(barcode: Barcode, manifolds: StableManifolds, grid: LandscapeGrid) -> SmadReport:
    """Saddle-minimum average distance of ``grid``.

    The pairs are the finite bars of ``barcode``; the essential bar of the
    global minimum does not end at a saddle and is left out.
    """
    _check_provenance(grid, barcode, manifolds)
    R, N = grid.R, grid.N
    finite = barcode.finite
    terms = []
    for p in finite:
        w = int(manifolds.sizes[p.minimum])
        term = (p.persistence / R) * (w / N) if R > 0 else 0.0
        terms.append(SmadTerm(p.minimum, p.min_index, p.persistence, w, term))
    value = float(sum(t.term for t in terms) / len(terms)) if terms and R > 0 else 0.0
    return SmadReport(value, len(terms), R, N, tuple(terms))


def persistence_range(barcode: Barcode) -> float:
    """Spread of the finite persistences, ``max - min``; 0 with fewer than two bars."""
    ps = [p.persistence for p in barcode.finite]
    return float(max(ps) - min(ps)) if ps else 0.0


@dataclass(frozen=True)
class LandscapeReport:
    smad: SmadReport
    persistence_range: float
    bar_count: int
    mean_persistence: float
    max_persistence: float
    adjacency: str
    grid: dict
    barcode: list = field(default_factory=list)
    eigenvalues: list | None = None
    lambda_max: float | None = None
    trace: dict | None = None
    simplify_tau: float = 0.0
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "smad": self.smad.smad,
            "pair_count": self.smad.pair_count,
            "R": self.smad.R,
            "N": self.smad.N,
            "pairs": [asdict(t) for t in self.smad.contributions],
            "persistence_range": self.persistence_range,
            "persistence_range_definition": "max-min over finite persistences",
            "persistence_range_alternative": {"global_range_R": self.smad.R},
            "bar_count": self.bar_count,
            "mean_persistence": self.mean_persistence,
            "max_persistence": self.max_persistence,
            "adjacency": self.adjacency,
            "simplify_tau": self.simplify_tau,
            "barcode": self.barcode,
            "spectral": {
                "eigenvalues": self.eigenvalues,
                "lambda_max": self.lambda_max,
                "trace": self.trace,
            },
            "grid": self.grid,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> dict:
        """Parsed report document (reports are consumed as plain dicts)."""
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise UsageError(f"unsupported report schema {doc.get('schema_version')!r}")
        return doc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def assemble_report(
    grid: LandscapeGrid,
    barcode: Barcode,
    manifolds: StableManifolds,
    spectral: SpectralResult | None = None,
    trace: TraceEstimate | None = None,
    simplify_tau: float = 0.0,
) -> LandscapeReport:
    """Collect SMAD, barcode statistics and optional curvature numbers.

    Without a spectral result the eigenvalues stored on the grid (if any) are
    reported and ``lambda_max`` is taken from them.
    """
    _check_provenance(grid, barcode, manifolds)
    if barcode.adjacency != manifolds.adjacency:
        raise UsageError("barcode and stable manifolds use different adjacencies")
    sm = smad(barcode, manifolds, grid)
    finite = [p.persistence for p in barcode.finite]
    notes = []
    if grid.R == 0:
        notes.append("degenerate range R=0")

    if spectral is not None:
        eigenvalues = [float(x) for x in spectral.eigenvalues]
    elif grid.eigenvalues is not None and all(x is not None for x in grid.eigenvalues):
        eigenvalues = [float(x) for x in grid.eigenvalues]
    else:
        eigenvalues = None
    lam_max = max(eigenvalues, key=abs) if eigenvalues else None

    return LandscapeReport(
        smad=sm,
        persistence_range=persistence_range(barcode),
        bar_count=len(barcode.pairs),
        mean_persistence=float(np.mean(finite)) if finite else 0.0,
        max_persistence=float(max(finite)) if finite else 0.0,
        adjacency=barcode.adjacency,
        grid=_jsonable({
            "shape": list(grid.shape),
            "N": grid.N,
            "ranges": list(grid.ranges),
            "f_min": grid.f_min,
            "f_max": grid.f_max,
            "digest": grid.digest,
            "meta": grid.meta,
        }),
        barcode=[p.to_dict() for p in barcode.pairs],
        eigenvalues=eigenvalues,
        lambda_max=lam_max,
        trace=None if trace is None else trace.to_dict(),
        simplify_tau=float(simplify_tau),
        warnings=tuple(notes),
    )
