"""``adlab`` command line: model-gen, verify, sweep, boxdim.

Exit codes: 0 pass, 1 invariant failure, 2 usage or I/O error. Every JSON
report carries the tool version, the model hash and the tolerances in effect.
Wall-clock timings are only written with ``--timing`` so that repeated runs
produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .carriers import (carrier_points, harmonic_heights, mutually_singular,
                       poisson_divergence)
from .cartography import (LineSpec, SliceSpec, box_counting_dimension, exceptional_flags,
                          line_exceptional_ts, slice_sweep)
from .errors import AdlabError, HypothesesNotMet, NotPositiveDefinite
from .invariants import (a2_condition_scan, a2_probe_grid, check_alpha_orthogonality,
                         common_carrier_points, perturbed_measure)
from .linalg import DEFAULT_TOL, Tolerances, hermitian, opnorm, random_hermitian
from .measures import trace_measure
from .model import (block_swap_model, direct_sum_model, noncyclic_control, random_model,
                    rank_one_model, spectral_matrix_measure, verify_resolvent_relation)
from .modelfile import dumps, load_model, model_hash, parse_nu, save_model

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- helpers -----------------------------------------------------------------


def _tolerances(args) -> Tolerances:
    over = {}
    if args.tol_atom_merge is not None:
        over["atom_merge"] = args.tol_atom_merge
    if args.tol_rank is not None:
        over["rank_rel"] = args.tol_rank
    return Tolerances(**{**DEFAULT_TOL.as_dict(), **over})


def _finite(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, dict):
        return {k: _finite(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_finite(x) for x in v]
    return v


def _emit(doc: dict, out) -> None:
    text = dumps(_finite(doc))
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _matrix(text: str, d: int | None = None) -> np.ndarray:
    """JSON matrix: nested real lists, or ``{"re": ..., "im": ...}``, or a bare number."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"bad matrix JSON: {exc}") from None
    if isinstance(doc, dict):
        M = np.asarray(doc["re"], float) + 1j * np.asarray(doc.get("im", 0.0), float)
    else:
        M = np.asarray(doc, dtype=float).astype(complex)
    M = np.atleast_2d(M)
    if M.shape[0] != M.shape[1] or (d is not None and M.shape != (d, d)):
        raise UsageError(f"matrix must be {d}x{d}, got {M.shape}")
    return hermitian(M)


def _header(args, doc, tol) -> dict:
    return {
        "tool": "adlab",
        "version": __version__,
        "command": args.command,
        "model_hash": model_hash(doc) if doc is not None else None,
        "tolerances": tol.as_dict(),
        "seed": getattr(args, "seed", None),
    }


def _check(name: str, value: float, threshold: float, passed: bool, **extra) -> dict:
    return {"name": name, "value": float(value), "threshold": float(threshold),
            "passed": bool(passed), **extra}


def _alphas(args, model, control) -> list[np.ndarray]:
    if control is not None:
        return [control.alpha]
    out = [_matrix(a, model.d) for a in (args.alpha or [])]
    rng = np.random.default_rng(args.seed)
    for _ in range(args.n_alpha):
        out.append(random_hermitian(model.d, int(rng.integers(2**31)), float(rng.uniform(0.2, 2.0))))
    return out


# --- model-gen ---------------------------------------------------------------


def cmd_model_gen(args) -> int:
    tol = _tolerances(args)
    control = None
    if args.kind == "random":
        model = random_model(args.n, args.d, args.seed, tol)
    elif args.kind == "rank-one":
        model = rank_one_model(args.n, args.seed, tol)
    elif args.kind == "direct-sum":
        model = direct_sum_model(args.base_dim, args.copies, args.seed, tol)
    elif args.kind == "block-swap":
        model = block_swap_model(args.base_dim, args.shift, args.seed, tol)
    else:  # noncyclic-control
        control = noncyclic_control(args.base_dim, args.strength, args.seed, tol)
        model = control.model
    if args.out:
        save_model(args.out, model, control)
        load_model(args.out, tol)  # the written file must load
    else:
        from .modelfile import model_to_dict
        sys.stdout.write(dumps(model_to_dict(model, control)))
    return EXIT_OK


# --- verify ------------------------------------------------------------------


def _suite_resolvent(args, model, control, tol) -> list[dict]:
    rng = np.random.default_rng(args.seed)
    lam = np.linalg.eigvalsh(model.A)
    lo, hi = lam[0] - 1.0, lam[-1] + 1.0
    z = rng.uniform(lo, hi, 50) + 1j * rng.uniform(0.1, 2.0, 50)
    checks = []
    mass_ref = float(np.trace(model.B.conj().T @ model.B).real)
    for k, alpha in enumerate([np.zeros((model.d, model.d))] + _alphas(args, model, None)):
        dev = verify_resolvent_relation(model, alpha, z, tol)
        checks.append(_check(f"resolvent[{k}]", dev, 1e-8, dev <= 1e-8))
        mass = spectral_matrix_measure(model, alpha, tol).total_mass()
        err = abs(mass - mass_ref)
        checks.append(_check(f"mass[{k}]", err, 1e-10, err <= 1e-10))
    return checks


def _suite_ad_rank_one(args, model, control, tol) -> list[dict]:
    if model.d != 1:
        raise UsageError("ad-rank-one needs a d = 1 model")
    rng = np.random.default_rng(args.seed)
    mu0 = spectral_matrix_measure(model, None, tol)
    checks = []
    for k in range(max(args.n_alpha, 1)):
        a = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 5.0))
        mua = spectral_matrix_measure(model, [[a]], tol)
        gap = float(np.min(np.abs(mu0.locations[:, None] - mua.locations[None, :])))
        checks.append(_check(f"separation[alpha={a!r}]", gap, tol.atom_merge,
                             mutually_singular(mu0, mua, tol)))
    return checks


def _suite_orthogonality(args, model, control, tol) -> list[dict]:
    perturbed = control.perturbed if control is not None else None
    checks = []
    for k, alpha in enumerate(_alphas(args, model, control)):
        points = common_carrier_points(model, alpha, tol, perturbed=perturbed)
        for x in points:
            try:
                ok, defect = check_alpha_orthogonality(model, alpha, x, tol, perturbed=perturbed)
            except HypothesesNotMet:
                checks.append({"name": f"orthogonality[{k}]@{x!r}", "skipped": True, "passed": True})
                continue
            checks.append(_check(f"orthogonality[{k}]@{x!r}", defect, 1e-7, ok))
        if not points:
            checks.append({"name": f"orthogonality[{k}]", "common_points": 0, "passed": True})
    return checks


def _suite_a2(args, model, control, tol) -> list[dict]:
    perturbed = control.perturbed if control is not None else None
    checks = []
    mass0 = opnorm(spectral_matrix_measure(model, None, tol).total())
    for k, alpha in enumerate(_alphas(args, model, control)):
        Ma = perturbed_measure(model, alpha, tol, perturbed)
        mu0 = spectral_matrix_measure(model, None, tol)
        xs = np.union1d(mu0.locations, Ma.locations)
        xs = np.concatenate([xs, (xs[1:] + xs[:-1]) / 2])
        levels = 20
        scan = a2_condition_scan(model, alpha, a2_probe_grid(xs, levels), tol, perturbed)
        V = scan.values.reshape(xs.size, levels)
        growth = float(np.max(V[:, -1] / np.maximum(V[:, -11], 1e-300)))
        # the scan must not blow up as y -> 0 over the last ten halvings
        checks.append(_check(f"a2_growth[{k}]", growth, 10.0, growth <= 10.0,
                             sup=scan.sup, argmax=[scan.argmax.real, scan.argmax.imag]))
        y = 0.1
        coarse = a2_condition_scan(model, alpha, a2_probe_grid(xs, 1, y), tol, perturbed)
        bound = opnorm(alpha) * math.sqrt(mass0 * opnorm(Ma.total())) / (math.pi * y)
        checks.append(_check(f"a2_envelope[{k}]", coarse.sup, bound, coarse.sup <= bound * (1 + 1e-9)))
    return checks


def _suite_carriers(args, model, control, tol) -> list[dict]:
    checks = []
    rng = np.random.default_rng(args.seed)
    mass_ref = float(np.trace(model.B.conj().T @ model.B).real)
    for k, alpha in enumerate([np.zeros((model.d, model.d))] + _alphas(args, model, None)):
        rep = carrier_points(model, alpha, tol)
        missing = sum(not p.in_carrier for p in rep.points)
        checks.append(_check(f"atoms_in_carrier[{k}]", missing, 0, missing == 0))
        harm = carrier_points(model, alpha, tol, heights=harmonic_heights(40))
        diff = sum(p.in_carrier != q.in_carrier for p, q in zip(rep.points, harm.points))
        checks.append(_check(f"harnack[{k}]", diff, 0, diff == 0))
        trace_err = max((abs(np.trace(p.W).real - 1) for p in rep.carrier), default=0.0)
        checks.append(_check(f"density_trace[{k}]", trace_err, 1e-8, trace_err <= 1e-8))
        lost = abs(rep.total_mass() - rep.carried_mass())
        checks.append(_check(f"uncarried_mass[{k}]", lost, 1e-9 * mass_ref, lost <= 1e-9 * mass_ref))
        M = spectral_matrix_measure(model, alpha, tol)
        mu = trace_measure(M)
        locs = M.locations
        probes = rng.uniform(locs[0] - 1, locs[-1] + 1, 8)
        gaps = np.min(np.abs(probes[:, None] - locs[None, :]), axis=1)
        probes = probes[gaps > 1e-3]
        false_hits = sum(poisson_divergence(mu, float(x)) for x in probes)
        checks.append(_check(f"off_atom_divergence[{k}]", false_hits, 0, false_hits == 0))
        err = abs(mu.total_mass() - mass_ref)
        checks.append(_check(f"mass[{k}]", err, 1e-10, err <= 1e-10))
    return checks


SUITES = {
    "resolvent": _suite_resolvent,
    "ad-rank-one": _suite_ad_rank_one,
    "orthogonality": _suite_orthogonality,
    "a2": _suite_a2,
    "carriers": _suite_carriers,
}


def cmd_verify(args) -> int:
    tol = _tolerances(args)
    model, control, doc = load_model(args.model, tol)
    if control is not None and args.suite not in ("orthogonality", "a2"):
        raise UsageError(f"suite {args.suite!r} needs a model without a control block")
    started = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        checks = SUITES[args.suite](args, model, control, tol)
    passed = all(c["passed"] for c in checks)
    report = {**_header(args, doc, tol), "suite": args.suite, "checks": checks,
              "passed": passed}
    if args.timing:
        report["runtime_s"] = time.perf_counter() - started
    _emit(report, args.out)
    return EXIT_OK if passed else EXIT_FAIL


# --- sweep -------------------------------------------------------------------


def _load_nu(args, tol):
    if args.nu is None:
        return parse_nu([], tol)
    text = args.nu if args.nu.lstrip().startswith("[") else Path(args.nu).read_text()
    try:
        return parse_nu(json.loads(text), tol)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"bad nu specification: {exc}") from None


def _fmt(v: float) -> str:
    return "%.17g" % v


def cmd_sweep(args) -> int:
    tol = _tolerances(args)
    model, _, doc = load_model(args.model, tol)
    nu = _load_nu(args, tol)
    started = time.perf_counter()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    report = {**_header(args, doc, tol), "mode": args.mode,
              "nu": [{"x": float(x), "mass": float(m[0, 0].real)}
                     for x, m in zip(nu.locations, nu.weights)]}
    if args.mode == "line":
        if args.direction is None or args.t_range is None:
            raise UsageError("line mode needs --direction and --t-range")
        alpha0 = _matrix(args.alpha0, model.d) if args.alpha0 else np.zeros((model.d, model.d))
        line = LineSpec(alpha0, _matrix(args.direction, model.d), tuple(args.t_range), args.resolution)
        ts = line_exceptional_ts(model, line, nu, tol)
        grid = np.linspace(*line.t_range, line.resolution)
        flags = exceptional_flags(model, line.at(grid), nu, tol)
        hits = np.asarray(ts)
        w.writerow(["t", "exceptional_flag", "nearest_hit_t"])
        for t, f in zip(grid, flags):
            near = float(hits[np.argmin(np.abs(hits - t))]) if hits.size else float("nan")
            w.writerow([_fmt(t), int(f), _fmt(near)])
        report.update({
            "t_range": list(line.t_range), "resolution": line.resolution,
            "counts": {"grid_nodes": int(grid.size), "exceptional_nodes": int(flags.sum()),
                       "exceptional_ts": len(ts)},
            "exceptional_ts": [float(t) for t in ts],
        })
    else:
        if not args.axis:
            raise UsageError("slice mode needs at least one --axis")
        m = len(args.axis)
        if len(args.range or []) != m or len(args.count or []) != m:
            raise UsageError("give one --range and one --count per --axis")
        base = _matrix(args.base, model.d) if args.base else np.zeros((model.d, model.d))
        spec = SliceSpec(base, tuple(_matrix(a, model.d) for a in args.axis),
                         tuple(tuple(r) for r in args.range), tuple(args.count))
        res = slice_sweep(model, spec, nu, tol, threads=args.threads)
        coords = spec.coordinates()
        mesh = np.meshgrid(*coords, indexing="ij")
        U = np.stack([g.reshape(-1) for g in mesh], axis=1)
        w.writerow([f"u{k}" for k in range(m)] + ["exceptional_flag"])
        for u, f in zip(U, res.flags.reshape(-1)):
            w.writerow([_fmt(v) for v in u] + [int(f)])
        report.update({
            "ranges": [list(r) for r in spec.ranges], "counts_per_axis": list(spec.counts),
            "counts": {"grid_nodes": int(U.shape[0]), "exceptional_nodes": int(res.flags.sum())},
        })
    if args.timing:
        report["runtime_s"] = time.perf_counter() - started
    if args.csv:
        Path(args.csv).write_text(buf.getvalue())
        report["csv"] = str(args.csv)
    elif args.out:
        sys.stdout.write(buf.getvalue())
    _emit(report, args.out)
    return EXIT_OK


# --- boxdim ------------------------------------------------------------------


def read_points_csv(path) -> np.ndarray:
    """Numeric columns of a CSV with a header; a trailing ``exceptional_flag``
    column, if present, selects the rows flagged 1."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError("empty CSV")
    header, body = rows[0], [r for r in rows[1:] if r]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise UsageError(f"malformed CSV: {exc}") from None
    if data.size == 0 or data.ndim != 2 or data.shape[1] != len(header):
        raise UsageError("malformed CSV: ragged or empty rows")
    if header[-1] == "exceptional_flag":
        data = data[data[:, -1] == 1][:, :-1]
    return data


def cmd_boxdim(args) -> int:
    P = read_points_csv(args.points)
    if args.scales:
        scales = [float(s) for s in args.scales.split(",")]
    else:
        extent = float(np.ptp(P, axis=0).max()) if P.size else 0.0
        extent = extent if extent > 0 else 1.0
        scales = [extent * f for f in (1, 0.5, 0.25, 0.1, 0.05, 0.025, 0.01)]
    est = box_counting_dimension(P, scales, args.grid_pitch)
    report = {"tool": "adlab", "version": __version__, "command": "boxdim",
              "n_points": int(P.shape[0]), **est.as_dict()}
    _emit(report, args.out)
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol-atom-merge", type=float, default=None)
    common.add_argument("--tol-rank", type=float, default=None)
    common.add_argument("--out", default=None, help="output path (stdout if omitted)")
    common.add_argument("--threads", type=int, default=1, help="worker processes, 0 = auto")
    common.add_argument("--timing", action="store_true", help="record wall-clock runtime")

    p = argparse.ArgumentParser(prog="adlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"adlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("model-gen", parents=[common], help="write a model file")
    g.add_argument("--kind", required=True,
                   choices=["random", "direct-sum", "rank-one", "block-swap", "noncyclic-control"])
    g.add_argument("--n", type=int, default=6)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--base-dim", type=int, default=3)
    g.add_argument("--copies", type=int, default=2)
    g.add_argument("--shift", type=float, default=0.7)
    g.add_argument("--strength", type=float, default=0.5)
    g.set_defaults(func=cmd_model_gen)

    v = sub.add_parser("verify", parents=[common], help="run an invariant suite")
    v.add_argument("model")
    v.add_argument("--suite", required=True, choices=sorted(SUITES))
    v.add_argument("--alpha", action="append", help="extra alpha as JSON matrix (repeatable)")
    v.add_argument("--n-alpha", type=int, default=5, help="number of random alphas")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", parents=[common], help="line or slice sweep")
    s.add_argument("model")
    s.add_argument("--mode", required=True, choices=["line", "slice"])
    s.add_argument("--nu", help="atom list JSON (file path or inline)")
    s.add_argument("--csv", help="CSV output path")
    s.add_argument("--alpha0")
    s.add_argument("--direction")
    s.add_argument("--t-range", type=float, nargs=2)
    s.add_argument("--resolution", type=int, default=64)
    s.add_argument("--base")
    s.add_argument("--axis", action="append")
    s.add_argument("--range", type=float, nargs=2, action="append")
    s.add_argument("--count", type=int, action="append")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("boxdim", parents=[common], help="box-counting dimension of a CSV cloud")
    b.add_argument("points")
    b.add_argument("--scales", help="comma-separated box sizes")
    b.add_argument("--grid-pitch", type=float, default=None)
    b.set_defaults(func=cmd_boxdim)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NotPositiveDefinite as exc:
        print(f"adlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, AdlabError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"adlab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
