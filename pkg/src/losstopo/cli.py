"""Command line front end.

Subcommands::

    losstopo sample   --fn quadratic --dims 2 --range 0.5 --steps 11 --out grid.llg
    losstopo spectrum --fn quadratic-diag-5-2-1 --k 2 --out spectrum.json
    losstopo analyze  grid.llg --out report.json [--simplify TAU] [--adjacency full]
    losstopo smad     grid.llg
    losstopo render   grid.llg --barcode b.svg --mergetree t.svg --profile p.svg --contour c.svg

Exit codes: 0 success, 1 internal error, 2 bad input or usage, 3 numeric
failure. ``--config FILE`` reads a JSON object of flag values (keys spelled as
the long flag without dashes, ``-`` replaced by ``_``); explicit flags win.
Output files appear only when the command succeeds.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FormatError, LossTopoError, UsageError
from .gridio import atomic_write, read_csv_grid, read_llg, write_llg
from .metrics import assemble_report, smad
from .oracle import (BUILTIN_NAMES, MlpOracle, MlpSpec, ToyDataset, load_checkpoint,
                     make_builtin, save_checkpoint)
from .sampler import THREADS_ENV, build_subspace, sample_grid
from .spectral import SpectralConfig, hutchinson_trace, top_eigenpairs
from .topology import ADJACENCIES, build_merge_tree, simplify, stable_manifolds
from .viz import (DEFAULT_PROFILE_LEVELS, default_levels, layout_profile, render_barcode,
                  render_contour, render_merge_tree, render_profile)


def _add_oracle_flags(p):
    g = p.add_argument_group("loss function")
    g.add_argument("--fn", help=f"builtin oracle: {', '.join(BUILTIN_NAMES)}")
    g.add_argument("--checkpoint", help="flat float64 MLP parameters with a .json sidecar")
    g.add_argument("--data", help="ToyDataset JSON used with --checkpoint")
    g.add_argument("--param-dim", type=int, help="parameter count for rosenbrock / gaussian-mixture")
    g.add_argument("--origin", help="comma-separated parameter vector (default: the oracle's own)")
    g.add_argument("--seed", type=int, default=0, help="seed for start vectors and random builtins")


def _add_spectral_flags(p):
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--ordering", choices=("magnitude", "algebraic"), default="magnitude")


def _add_topology_flags(p):
    p.add_argument("input", help="LLG file (binary or JSON) or a .csv table for 2D grids")
    p.add_argument("--adjacency", choices=ADJACENCIES, default="axis")
    p.add_argument("--simplify", type=float, default=0.0, metavar="TAU",
                   help="cancel finite pairs with persistence below TAU")
    p.add_argument("--csv-range", type=float, default=1.0, help="axis half width for CSV input")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="losstopo", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a loss grid along top Hessian eigenvectors")
    _add_oracle_flags(p)
    _add_spectral_flags(p)
    p.add_argument("--dims", type=int, default=2, help="number of subspace directions n")
    p.add_argument("--range", type=float, default=1.0, dest="range_", metavar="R",
                   help="axis half width r; alpha runs over [-r, r]")
    p.add_argument("--steps", type=int, default=11, help="odd points per axis")
    p.add_argument("--scaling", choices=("uniform", "inverse-eigenvalue"), default="uniform")
    p.add_argument("--threads", type=int, help=f"evaluation threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--format", choices=("binary", "json"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("spectrum", help="top-k Hessian eigenpairs and optional trace")
    _add_oracle_flags(p)
    _add_spectral_flags(p)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--trace-samples", type=int, default=0, help="Hutchinson probes (0 = skip)")
    p.add_argument("--out", help="SpectralResult JSON; eigenvectors go next to it")

    p = sub.add_parser("analyze", help="persistence, SMAD and the full landscape report")
    _add_topology_flags(p)
    p.add_argument("--spectrum", help="SpectralResult JSON to fold into the report")
    p.add_argument("--out", help="report JSON path")

    p = sub.add_parser("smad", help="print the SMAD of a grid")
    _add_topology_flags(p)

    p = sub.add_parser("render", help="write SVG figures")
    _add_topology_flags(p)
    p.add_argument("--barcode")
    p.add_argument("--mergetree")
    p.add_argument("--profile")
    p.add_argument("--contour")
    p.add_argument("--levels", type=int, default=10, help="number of contour levels")
    p.add_argument("--profile-levels", type=int, default=DEFAULT_PROFILE_LEVELS)

    for p in sub.choices.values():
        p.add_argument("--config", help="JSON file of default flag values")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(config, dict):
        raise FormatError("config file must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    renamed = {("range_" if k == "range" else k.replace("-", "_")): v for k, v in config.items()}
    unknown = sorted(set(renamed) - known)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    sub.set_defaults(**renamed)
    return parser.parse_args(argv)


def _oracle(args):
    if args.checkpoint:
        if not args.data:
            raise UsageError("--checkpoint needs --data")
        params, sidecar = load_checkpoint(args.checkpoint)
        spec = MlpSpec.from_dict(sidecar.get("spec") or {})
        try:
            data = ToyDataset.from_dict(json.loads(Path(args.data).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read dataset {args.data}: {exc}") from exc
        oracle = MlpOracle(spec, data, origin=params)
        if oracle.dim != params.shape[0]:
            raise FormatError(f"checkpoint has {params.shape[0]} parameters, the architecture needs {oracle.dim}")
        return oracle
    if not args.fn:
        raise UsageError("give --fn NAME or --checkpoint PATH")
    return make_builtin(args.fn, dim=args.param_dim, seed=args.seed)


def _origin(args, oracle):
    if args.origin is None:
        return oracle.default_origin()
    try:
        theta = np.array([float(x) for x in args.origin.split(",")])
    except ValueError as exc:
        raise UsageError(f"--origin must be comma-separated numbers: {exc}") from exc
    if theta.shape[0] != oracle.dim:
        raise UsageError(f"--origin has {theta.shape[0]} entries, the oracle has {oracle.dim} parameters")
    return theta


def _load_grid(args):
    if str(args.input).lower().endswith(".csv"):
        return read_csv_grid(args.input, ranges=args.csv_range)
    return read_llg(args.input)


def _topology(args, grid):
    tree, bars = build_merge_tree(grid, args.adjacency)
    man = stable_manifolds(grid, args.adjacency)
    if args.simplify < 0:
        raise UsageError("--simplify must be >= 0")
    tree, bars, man = simplify(tree, bars, args.simplify, man)
    return tree, bars, man


def cmd_sample(args) -> int:
    oracle = _oracle(args)
    theta = _origin(args, oracle)
    if args.dims < 1 or args.dims > oracle.dim:
        raise UsageError(f"--dims must lie in [1, {oracle.dim}]")
    cfg = SpectralConfig(k=args.dims, max_iter=args.max_iter, tol=args.tol, seed=args.seed,
                         ordering=args.ordering)
    spectral = top_eigenpairs(oracle, theta, cfg)
    spec = build_subspace(spectral, args.dims, args.range_, args.steps, args.scaling, origin=theta)
    grid = sample_grid(oracle, spec, threads=args.threads, meta={"seed": args.seed})
    write_llg(grid, args.out, args.format)
    print(f"wrote {args.out}: shape {list(grid.shape)}, N={grid.N}, "
          f"loss in [{grid.f_min:.6g}, {grid.f_max:.6g}]")
    return 0


def cmd_spectrum(args) -> int:
    oracle = _oracle(args)
    theta = _origin(args, oracle)
    cfg = SpectralConfig(k=args.k, max_iter=args.max_iter, tol=args.tol, seed=args.seed,
                         ordering=args.ordering)
    res = top_eigenpairs(oracle, theta, cfg)
    doc = res.to_dict()
    if args.trace_samples:
        doc["trace"] = hutchinson_trace(oracle, theta, args.trace_samples, args.seed).to_dict()
    if args.out:
        out = Path(args.out)
        atomic_write(out, json.dumps(doc, indent=1, sort_keys=True) + "\n")
        for i, vec in enumerate(res.eigenvectors):
            vpath = out.parent / f"{out.stem}.eigvec{i}.f64"
            save_checkpoint(vpath, vec, {"index": i, "eigenvalue": float(res.eigenvalues[i])})
    print("eigenvalues: " + " ".join(f"{x:.10g}" for x in res.eigenvalues))
    if not all(res.converged):
        print("warning: some eigenpairs did not converge", file=sys.stderr)
    return 0


def _read_spectrum(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read spectrum {path}: {exc}") from exc
    eig = doc.get("eigenvalues") or []
    return {
        "eigenvalues": eig,
        "lambda_max": max(eig, key=abs) if eig else None,
        "trace": doc.get("trace"),
    }


def cmd_analyze(args) -> int:
    grid = _load_grid(args)
    extra = _read_spectrum(args.spectrum) if args.spectrum else None
    tree, bars, man = _topology(args, grid)
    report = assemble_report(grid, bars, man, simplify_tau=args.simplify)
    doc = report.to_dict()
    if extra is not None:
        doc["spectral"] = extra
    for note in report.warnings:
        print(f"warning: {note}", file=sys.stderr)
    if args.out:
        atomic_write(args.out, json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n")
    print(f"SMAD: {report.smad.smad:.10g}")
    print(f"persistence range: {report.persistence_range:.10g}")
    print(f"pairs: {report.smad.pair_count} finite, {report.bar_count} bars")
    return 0


def cmd_smad(args) -> int:
    grid = _load_grid(args)
    _, bars, man = _topology(args, grid)
    if grid.R == 0:
        print("warning: degenerate range R=0", file=sys.stderr)
    print(f"{smad(bars, man, grid).smad:.17g}")
    return 0


def cmd_render(args) -> int:
    targets = {k: getattr(args, k) for k in ("barcode", "mergetree", "profile", "contour")}
    if not any(targets.values()):
        raise UsageError("render needs at least one of --barcode, --mergetree, --profile, --contour")
    grid = _load_grid(args)
    if targets["contour"] and grid.ndim != 2:
        raise UsageError(f"--contour needs a 2D grid; {args.input} has {grid.ndim} axes")
    tree, bars, man = _topology(args, grid)
    docs = {}
    if targets["barcode"]:
        docs["barcode"] = render_barcode(bars)
    if targets["mergetree"]:
        docs["mergetree"] = render_merge_tree(tree)
    if targets["profile"]:
        docs["profile"] = render_profile(layout_profile(tree, man, grid, args.profile_levels, bars))
    if targets["contour"]:
        docs["contour"] = render_contour(grid, default_levels(grid, args.levels))
    for key, text in docs.items():
        atomic_write(targets[key], text)
        print(f"wrote {targets[key]}")
    return 0


COMMANDS = {
    "sample": cmd_sample,
    "spectrum": cmd_spectrum,
    "analyze": cmd_analyze,
    "smad": cmd_smad,
    "render": cmd_render,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse
        return int(exc.code or 0)
    except LossTopoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
