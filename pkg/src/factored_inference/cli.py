"""Command-line front end.

Exit codes: 0 success, 1 solver did not converge, 2 input error, 3 resource cap.
"""

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

from .bench import (
    ALGORITHMS,
    CSV_COLUMNS,
    METRICS,
    InstanceSpec,
    metadata,
    run_suite,
)
from .ep_common import Mode, SolverConfig, run_clipping_ep
from .errors import CapExceeded, FactoredInferenceError, UnsupportedSize
from .gaussian_core import DEFAULT_COMPONENT_CAP, Gmm1D, exact_product_moments, product_component_count
from .persistent_ep import run_persistent_ep
from .acep import run_acep
from .vdbp import MatrixKind, build_mixing_matrix, run_vdbp, validate_mixing_matrix

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INPUT, EXIT_CAP = 0, 1, 2, 3


class InputError(Exception):
    pass


def load_instance(path):
    """Accept either a bare list of mixtures or ``{"factors": [...]}``."""
    try:
        text = sys.stdin.read() if str(path) == "-" else Path(path).read_text()
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read instance: {exc}") from exc
    if isinstance(data, dict) and "factors" in data:
        data = data["factors"]
    if not isinstance(data, list) or not data:
        raise InputError("instance must be a non-empty list of mixtures")
    try:
        return [Gmm1D.from_dict(d) for d in data]
    except (FactoredInferenceError, ValueError, TypeError) as exc:
        raise InputError(str(exc)) from exc


def dump_instance(factors):
    return json.dumps({"factors": [f.to_dict() for f in factors]})


def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))
    return str(x)


def records_csv(records):
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        lines.append(",".join(_fmt(getattr(r, c)) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def cdf_text(curve):
    values, cdf = curve
    return "".join(f"{_fmt(float(v))} {_fmt(float(c))}\n" for v, c in zip(values, cdf))


def _config(args):
    kw = {}
    if args.tol is not None:
        kw["tol"] = args.tol
        kw["vdbp_tol"] = args.tol
    if args.max_iter is not None:
        kw["max_sweeps"] = args.max_iter
        kw["vdbp_max_iter"] = args.max_iter
    if getattr(args, "mode", None):
        kw["mode"] = Mode(args.mode)
    return SolverConfig(**kw)


def cmd_solve(args):
    if args.mode and args.algorithm not in ("pep", "acep"):
        raise InputError("--mode only applies to pep and acep")
    if args.matrix and args.algorithm != "vdbp":
        raise InputError("--matrix only applies to vdbp")
    factors = load_instance(args.instance)
    config = _config(args)
    if args.algorithm == "vdbp":
        kind = MatrixKind(args.matrix or "hadamard")
        if len(factors) < 2:
            raise InputError("vdbp needs at least two factors")
        try:
            matrix = build_mixing_matrix(len(factors), kind, args.seed)
        except UnsupportedSize as exc:
            raise InputError(str(exc)) from exc
        est = run_vdbp(factors, matrix, config)
    elif args.algorithm == "clip":
        est = run_clipping_ep(factors, config)
    elif args.algorithm == "pep":
        est = run_persistent_ep(factors, config)[0]
    else:
        est = run_acep(factors, config)[0]
    out = est.to_dict()
    if est.reason:
        out["reason"] = est.reason
    print(json.dumps(out))
    return EXIT_OK if est.converged else EXIT_NOT_CONVERGED


def cmd_oracle(args):
    factors = load_instance(args.instance)
    exact = exact_product_moments(factors, cap=args.cap)
    print(json.dumps({
        "mean": exact.mean,
        "variance": exact.variance,
        "log_evidence": exact.log_scale,
        "components": product_component_count(factors),
    }))
    return EXIT_OK


def cmd_bench(args):
    if args.algorithms == "all":
        algorithms = ALGORITHMS
    else:
        algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
        unknown = [a for a in algorithms if a not in ALGORITHMS]
        if unknown:
            raise InputError(f"unknown algorithms: {', '.join(unknown)}")
    if args.components ** args.n_factors > DEFAULT_COMPONENT_CAP:
        raise CapExceeded("oracle expansion would exceed the component cap")
    spec = InstanceSpec(n_factors=args.n_factors, components=args.components, seed=args.seed)
    result = run_suite(spec, args.realizations, algorithms, _config(args), workers=args.workers)
    out = Path(args.out)
    write_atomic(out / "results.csv", records_csv(result.records))
    for a in algorithms:
        for m in METRICS:
            write_atomic(out / f"cdf_{a}_{m}.txt", cdf_text(result.curve(a, m)))
    write_atomic(out / "metadata.json", json.dumps(metadata(result), indent=2) + "\n")
    print(json.dumps({"out": str(out), "records": len(result.records)}))
    return EXIT_OK


def cmd_validate_matrix(args):
    try:
        m = build_mixing_matrix(args.n, MatrixKind(args.matrix or "hadamard"), args.seed)
    except UnsupportedSize as exc:
        raise InputError(str(exc)) from exc
    report = validate_mixing_matrix(m)
    print(json.dumps(report.to_dict()))
    return EXIT_OK if report.ok() else EXIT_NOT_CONVERGED


def build_parser():
    p = argparse.ArgumentParser(prog="factored-inference", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iter", type=int, dest="max_iter")
        sp.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("solve", help="approximate mean/variance of one instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--algorithm", choices=("vdbp", "pep", "acep", "clip"), required=True)
    s.add_argument("--mode", choices=[m.value for m in Mode])
    s.add_argument("--matrix", choices=[k.value for k in MatrixKind])
    common(s)
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle", help="exact moments by full expansion")
    o.add_argument("--instance", required=True)
    o.add_argument("--cap", type=int, default=DEFAULT_COMPONENT_CAP)
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("bench", help="NSE benchmark against the exact oracle")
    b.add_argument("--realizations", type=int, default=10_000)
    b.add_argument("--algorithms", default="all")
    b.add_argument("--n-factors", type=int, default=8, dest="n_factors")
    b.add_argument("--components", type=int, default=2)
    b.add_argument("--workers", type=int)
    b.add_argument("--out", default="bench_out")
    common(b)
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("validate-matrix", help="check a mixing matrix")
    v.add_argument("--n", type=int, required=True)
    v.add_argument("--matrix", choices=[k.value for k in MatrixKind])
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_validate_matrix)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ValueError, FactoredInferenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
