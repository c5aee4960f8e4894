"""Command-line runner: ``difflab <command> [--config PATH] [--seed N] [--threads N] [--out DIR]``.

Every command writes its artifact into the output directory (``--out``,
overridden by the ``DIFFLAB_OUT`` environment variable) and echoes JSON
results on stdout. Artifacts embed ``format_version`` and the fully
resolved config; JSON keys are sorted and CSV floats carry 17 significant
digits, so identical inputs give byte-identical files. The thread count is
deliberately not part of any artifact.

Errors are reported as one JSON object on stderr with a nonzero exit code.

Commands:
    sample          run the reverse sampler on Gaussian data; writes sample.json,
                    trace.csv and (with sampler.keep_states) states.bin
    bound           full upper-bound report (bound.json)
    check-stepsize  stepsize admissibility report (stepsize.json)
    complexity      prescription table over families x eps x d (complexity.csv)
    lower-bound     smallest K reaching W2 <= eps on the Gaussian recursion; eta
                    is fixed and the horizon grows as T = K eta (lower_bound.json)
    c0              first-order stepsize coefficient plus a Richardson cross-check (c0.json)
    schedule-dump   (t, f, g, a1, a2) grid of the configured schedule (schedule.csv)
    reference-config  print a complete config with every default written out
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bounds import require_admissible, stepsize_admissible, theorem_bound
from .complexity import (
    DEFAULT_PARAMS,
    ComplexityQuery,
    lower_bound_gaussian,
    prescribe,
)
from .config import FORMAT_VERSION, ExperimentConfig, load_config, reference_config
from .errors import ConfigError, DiffLabError
from .gaussian_oracle import (
    compute_c0,
    continuum_limit,
    minimal_k_search,
    variance_recursion,
    w2_exact,
)
from .sampler import ScoreMode, frozen_score_recursion, run_reverse

COMPLEXITY_COLUMNS = ["family", "params", "eps", "d", "T", "eta_max", "M_max", "K_min", "order_label"]


def _clean(obj: Any) -> Any:
    """Make a value JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list[Any]], meta: dict) -> None:
    buf = io.StringIO()
    buf.write(f"# format_version: {FORMAT_VERSION}\n")
    buf.write("# config: " + json.dumps(_clean(meta), sort_keys=True, separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _envelope(meta: dict, body: dict) -> dict:
    return {"format_version": FORMAT_VERSION, "config": meta, **body}


def _out_dir(args) -> Path:
    out = os.environ.get("DIFFLAB_OUT") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit_json(args, name: str, doc: dict) -> None:
    text = dumps(doc)
    (_out_dir(args) / name).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("this command needs a config file", field="--config")
    return load_config(args.config).with_seed(args.seed)


# -- commands ------------------------------------------------------------------


def cmd_sample(args) -> None:
    cfg = _config(args)
    model = cfg.model()
    spec = cfg.spec
    sc = cfg.sampler_config(threads=args.threads)
    bound_M = sc.M if sc.score_mode is ScoreMode.PERTURBED else cfg.resolved["bound"]["M"]
    ctx = cfg.bound_context(M=bound_M)
    step_report = require_admissible(ctx)
    result = run_reverse(spec, sc, model=model)
    trace = variance_recursion(model, spec, sc.K, sc.eta)
    sampler_trace = frozen_score_recursion(model, spec, sc.K)
    bound = theorem_bound(ctx)
    out = _out_dir(args)
    with open(out / "trace.csv", "w", encoding="utf-8") as fh:
        fh.write(f"# format_version: {FORMAT_VERSION}\n")
        fh.write("# config: " + json.dumps(_clean(cfg.resolved), sort_keys=True, separators=(",", ":")) + "\n")
        trace.write_csv(fh)
    if sc.keep_states:
        result.write_states(out / "states.bin")
    doc = _envelope(
        cfg.resolved,
        {
            "sigma_hat_K_sq": trace.final,
            "sigma_hat_K_sq_sampler_update": float(sampler_trace[-1]),
            "empirical_var": result.empirical_var,
            "w2_exact": w2_exact(model, math.sqrt(trace.final)),
            "w2_moment": result.w2_moment,
            "w2_bound": bound.value,
            "bound_M": bound_M,
            "eta": sc.eta,
            "eta_star": step_report.eta_star,
            "contraction_violations": trace.violations,
            "run": result.to_dict(),
        },
    )
    _emit_json(args, "sample.json", doc)


def cmd_bound(args) -> None:
    cfg = _config(args)
    ctx = cfg.bound_context()
    step_report = require_admissible(ctx)
    report = theorem_bound(ctx)
    body = {"bound": report.to_dict(include_steps=True), "stepsize": step_report.to_dict()}
    if cfg.is_gaussian:
        model = cfg.model()
        trace = variance_recursion(model, ctx.spec, ctx.K, ctx.eta)
        body["w2_exact"] = w2_exact(model, math.sqrt(trace.final))
    _emit_json(args, "bound.json", _envelope(cfg.resolved, body))


def cmd_check_stepsize(args) -> None:
    cfg = _config(args)
    report = stepsize_admissible(cfg.bound_context())
    doc = _envelope(cfg.resolved, {"stepsize": report.to_dict()})
    _emit_json(args, "stepsize.json", doc)
    if not report.admissible:
        sys.stderr.write(
            dumps({"error": "admissibility_error", "message": report.violated, "condition": report.binding})
        )
        raise SystemExit(3)


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}", field=name) from None


def _ints(text: str, name: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}", field=name) from None


def _param_overrides(items: Sequence[str]) -> dict[str, dict[str, float]]:
    params = {k: dict(v) for k, v in DEFAULT_PARAMS.items()}
    for item in items or ():
        try:
            key, value = item.split("=", 1)
            fam, name = key.split(".", 1)
            params.setdefault(fam, {})[name] = float(value)
        except ValueError:
            raise ConfigError(f"expected FAMILY.param=value, got {item!r}", field="--param") from None
    return params


def cmd_complexity(args) -> None:
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    eps_list = _floats(args.eps, "--eps")
    d_list = _ints(args.d, "--d")
    params = _param_overrides(args.param)
    consts = {"m0": 1.0, "L0": 1.0, "x_star_norm": 0.0}
    if args.config:
        data = load_config(args.config).resolved["data"]
        if data["kind"] == "gaussian":
            consts = {"m0": 1.0 / data["sigma0_sq"], "L0": 1.0 / data["sigma0_sq"], "x_star_norm": 0.0}
        else:
            consts = {k: data[k] for k in ("m0", "L0", "x_star_norm")}
    rows = []
    for fam in families:
        for eps in eps_list:
            for d in d_list:
                q = ComplexityQuery(eps=eps, d=d, **consts)
                p = prescribe(fam, params.get(fam), q)
                ptxt = ";".join(f"{k}={fmt(v)}" for k, v in sorted(p.params.items()))
                rows.append([p.family, ptxt, eps, d, p.T_val, p.eta_max, p.M_max, p.K_min, p.order_label])
    meta = {"families": families, "eps": eps_list, "d": d_list, "params": {f: params.get(f) for f in families}, **consts}
    path = _out_dir(args) / "complexity.csv"
    write_csv(path, COMPLEXITY_COLUMNS, rows, meta)
    sys.stdout.write(path.read_text(encoding="utf-8"))


def cmd_lower_bound(args) -> None:
    cfg = _config(args)
    model = cfg.model()
    res = minimal_k_search(model, cfg.spec, args.eps, args.eta, k_max=args.k_max)
    body = {
        "eps": args.eps,
        "eta": args.eta,
        "K": res.K,
        "T": res.T,
        "w2": res.w2,
        "achievable": res.achievable,
        "best_K": res.best_K,
        "best_w2": res.best_w2,
        "sqrt_d_over_eps": lower_bound_gaussian(ComplexityQuery(args.eps, model.d)),
    }
    _emit_json(args, "lower_bound.json", _envelope(cfg.resolved, body))


def cmd_c0(args) -> None:
    cfg = _config(args)
    model = cfg.model()
    spec = cfg.spec
    K = int(round(spec.horizon_T / args.eta))
    if K < 1 or abs(K * args.eta - spec.horizon_T) > 1e-9 * spec.horizon_T:
        raise ConfigError(f"T / eta must be an integer, got {spec.horizon_T / args.eta}", field="--eta")
    c0 = compute_c0(model, spec)
    coarse = variance_recursion(model, spec, K, spec.horizon_T / K).final
    fine = variance_recursion(model, spec, 2 * K, spec.horizon_T / (2 * K)).final
    eta = spec.horizon_T / K
    slope = (coarse - fine) * 2.0 / eta
    body = {
        "c0": c0,
        "eta": eta,
        "K": K,
        "sigma_hat_K_sq": coarse,
        "sigma_hat_K_sq_half_eta": fine,
        "continuum_limit": continuum_limit(model, spec),
        "richardson_slope": slope,
        "relative_difference": abs(slope - c0) / abs(c0) if c0 != 0 else None,
    }
    _emit_json(args, "c0.json", _envelope(cfg.resolved, body))


def cmd_schedule_dump(args) -> None:
    cfg = _config(args)
    spec = cfg.spec
    t = np.linspace(0.0, spec.horizon_T, args.points)
    cols = [t, spec.f(t), spec.g(t), spec.a1(t), spec.a2(t)]
    rows = [[float(c[i]) for c in cols] for i in range(args.points)]
    path = _out_dir(args) / "schedule.csv"
    write_csv(path, ["t", "f", "g", "a1", "a2"], rows, cfg.resolved)
    sys.stdout.write(path.read_text(encoding="utf-8"))


def cmd_reference_config(args) -> None:
    sys.stdout.write(reference_config())


# -- parser --------------------------------------------------------------------


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment config")
    common.add_argument("--seed", type=_seed, default=None, help="override sampler.seed (unsigned 64-bit)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads for chain blocks")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (DIFFLAB_OUT overrides)")

    parser = argparse.ArgumentParser(
        prog="difflab",
        description="Score-based diffusion sampler lab: Gaussian oracle, bounds, prescriptions.",
    )
    parser.add_argument("--version", action="version", version=f"difflab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("sample", parents=[common], help="run the reverse sampler").set_defaults(func=cmd_sample)
    sub.add_parser("bound", parents=[common], help="evaluate the upper bound").set_defaults(func=cmd_bound)
    sub.add_parser(
        "check-stepsize", parents=[common], help="stepsize admissibility report"
    ).set_defaults(func=cmd_check_stepsize)

    p = sub.add_parser("complexity", parents=[common], help="prescription table")
    p.add_argument("--families", default=",".join(DEFAULT_PARAMS), help="comma-separated family names")
    p.add_argument("--eps", default="0.2,0.1,0.05", help="comma-separated accuracies")
    p.add_argument("--d", default="4,16,64", help="comma-separated dimensions")
    p.add_argument("--param", action="append", metavar="FAMILY.NAME=VALUE", help="override a family parameter")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser(
        "lower-bound",
        parents=[common],
        help="minimal K on the Gaussian recursion (eta fixed, T = K eta grows)",
    )
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--k-max", type=int, default=10_000_000)
    p.set_defaults(func=cmd_lower_bound)

    p = sub.add_parser("c0", parents=[common], help="first-order stepsize coefficient")
    p.add_argument("--eta", type=float, default=1e-3)
    p.set_defaults(func=cmd_c0)

    p = sub.add_parser("schedule-dump", parents=[common], help="tabulate f, g, a1, a2")
    p.add_argument("--points", type=_positive_int, default=201)
    p.set_defaults(func=cmd_schedule_dump)

    sub.add_parser(
        "reference-config", parents=[common], help="print a complete default config"
    ).set_defaults(func=cmd_reference_config)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except DiffLabError as exc:
        sys.stderr.write(dumps(exc.to_dict()))
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - surface anything else as machine-readable JSON
        sys.stderr.write(dumps({"error": "internal_error", "message": f"{type(exc).__name__}: {exc}"}))
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
