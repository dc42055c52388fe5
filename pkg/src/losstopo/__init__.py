"""Loss-landscape topology: Hessian-subspace grids, 0-dimensional persistence and SMAD."""

__version__ = "0.1.0"

from .errors import DegenerateHessianWarning, FormatError, LossTopoError, NumericError, UsageError
from .gridio import read_csv_grid, read_llg, write_llg
from .metrics import LandscapeReport, SmadReport, assemble_report, persistence_range, smad
from .oracle import (
    DoubleWell1D,
    GaussianMixture,
    LossOracle,
    MlpOracle,
    MlpSpec,
    Quadratic,
    Rosenbrock,
    ToyDataset,
    eval_gradient,
    eval_hvp,
    eval_loss,
    make_builtin,
    train_mlp,
)
from .sampler import LandscapeGrid, SubspaceSpec, build_subspace, sample_grid
from .spectral import SpectralConfig, SpectralResult, TraceEstimate, hutchinson_trace, max_eigenvalue, top_eigenpairs
from .topology import Barcode, MergeTree, StableManifolds, build_merge_tree, simplify, stable_manifolds
from .viz import layout_profile, render_barcode, render_contour, render_merge_tree, render_profile


def analyze_grid(grid, adjacency="axis", tau=0.0, spectral=None, trace=None):
    """Merge tree, barcode, stable manifolds and report of ``grid`` in one call."""
    tree, bars = build_merge_tree(grid, adjacency)
    man = stable_manifolds(grid, adjacency)
    tree, bars, man = simplify(tree, bars, tau, man)
    return tree, bars, man, assemble_report(grid, bars, man, spectral, trace, simplify_tau=tau)
