"""Underfit, well-fit and overfit MLPs on the same two-class toy problem.

Each network is trained with a fixed seed, the top two Hessian eigenvectors
at the trained weights span a 41x41 grid, and SMAD summarizes how rugged the
loss surface is around the solution. The overparameterized network, trained
far past the point of fitting its noisy 60-point dataset, should sit in the
roughest landscape.

Run with ``python demos/mlp_regimes.py``; it exits non-zero if the well-fit
SMAD is not below the overfit one.
"""

import sys

from losstopo import (
    MlpOracle,
    MlpSpec,
    SpectralConfig,
    ToyDataset,
    analyze_grid,
    build_subspace,
    sample_grid,
    top_eigenpairs,
    train_mlp,
)

DATA = ToyDataset.two_blobs(m=60, seed=0, separation=1.5, noise=1.0)

# name -> (architecture, training settings)
REGIMES = {
    "underfit": (MlpSpec((2, 2, 2)), dict(epochs=3, lr=0.05, weight_decay=0.05)),
    "well-fit": (MlpSpec((2, 8, 2)), dict(epochs=200, lr=0.1, weight_decay=1e-3)),
    "overfit": (MlpSpec((2, 32, 32, 2)), dict(epochs=3000, lr=0.1, weight_decay=0.0)),
}

RANGE = 20.0
STEPS = 41


def landscape(spec, hyper, seed=0):
    theta = train_mlp(spec, DATA, seed=seed, **hyper)
    oracle = MlpOracle(spec, DATA, origin=theta)
    spectral = top_eigenpairs(oracle, theta, SpectralConfig(k=2, tol=1e-6, max_iter=500, seed=seed))
    grid = sample_grid(oracle, build_subspace(spectral, 2, RANGE, STEPS, origin=theta))
    *_, report = analyze_grid(grid)
    return oracle, theta, spectral, report


def main():
    smads = {}
    print(f"{'regime':10} {'params':>6} {'loss':>8} {'acc':>6} {'lambda_1':>9} {'minima':>6} {'SMAD':>10}")
    for name, (spec, hyper) in REGIMES.items():
        oracle, theta, spectral, report = landscape(spec, hyper)
        smads[name] = report.smad.smad
        print(f"{name:10} {oracle.dim:6d} {oracle.value(theta):8.4f} {oracle.accuracy(theta):6.3f} "
              f"{spectral.eigenvalues[0]:9.4f} {report.smad.pair_count + 1:6d} {report.smad.smad:10.3e}")
    ok = smads["well-fit"] < smads["overfit"]
    print("well-fit SMAD < overfit SMAD:", "yes" if ok else "NO")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
