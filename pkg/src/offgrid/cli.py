"""Command-line entry point: `offgrid <subcommand> ...`.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure
(including audits that do not pass).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .certificates import (audit_certificate, build_certificate, build_localizing_certificate,
                           build_sketched_certificate)
from .errors import (ConfigurationError, DiagnosticError, EmbeddingViolation, IllPosedError, InvalidArgument,
                     PreconditionError, UnsupportedError)
from .geometry import DiscreteMeasure, ParameterBox
from .kernels import Sinc4Kernel, kernel_from_config, template_from_config
from .lpc import (LpcReport, audit_curvature, audit_sinc4, derivative_bound_audit, sinc4_lpc_params)
from .pipeline import (ExperimentConfig, resolve, run_experiment, s2mix_bounds, simulate_mixture, summarize,
                       _json_default)
from .sketching import (law_from_config, noise_level_bound, operator_from_config, sketch_dataset, sketch_from_json,
                        sketch_to_json)
from .solver import (BlassoProblem, SolveConfig, bound_verdict, calibrate_kappa, effective_radius, objective,
                     sketched_c_kappa, solve)
from .switch import supermix_switch_constant, switch_constant

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _load_json(path) -> dict:
    """Read a JSON file; an argument that starts with '{' is parsed as inline JSON."""
    text = str(path)
    if text.lstrip().startswith("{"):
        return json.loads(text)
    return json.loads(Path(path).read_text())


def _emit(obj, out: str | None):
    text = json.dumps(obj, indent=1, default=_json_default)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        print(text)


def _read_samples(path, d: int | None = None) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if d is not None and data.shape[1] != d:
        raise InvalidArgument(f"samples have {data.shape[1]} columns, expected d = {d}")
    return data


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    res = resolve(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for n in cfg.n_list:
        for seed in cfg.seeds:
            x = simulate_mixture(res.mu0, res.template, int(n), [int(seed), int(n)])
            np.savetxt(out / f"samples_n{n}_seed{seed}.csv", x, delimiter=",", fmt="%.17g")
    _emit(res.mu0.to_json(), str(out / "mu0.json"))
    kernel = {"kind": "sinc4", "tau": res.tau, "d": cfg.d, "m": res.m, "law": cfg.law,
              "template": res.template.describe()}
    _emit(kernel, str(out / "kernel.json"))
    print(f"wrote samples for {len(cfg.n_list) * len(cfg.seeds)} cells to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.out:
        cfg.output_dir = args.out
    record = run_experiment(cfg)
    summary = summarize(record)
    summary["errors"] = len(summary["errors"])
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def cmd_sketch(args) -> int:
    cfg = _load_json(args.kernel)
    cfg["m"] = args.m if args.m is not None else cfg.get("m")
    if cfg["m"] is None:
        raise InvalidArgument("sketch size missing: pass --m or set 'm' in the kernel config")
    op = operator_from_config(cfg, seed=args.seed)
    samples = _read_samples(args.samples, op.d)
    sk = sketch_dataset(samples, op, args.seed)
    _emit(sketch_to_json(op, sk), args.out)
    return EXIT_OK


def _box_from_args(args, d: int) -> ParameterBox:
    if args.box is None:
        raise InvalidArgument("--box LOWER... UPPER... is required")
    vals = np.asarray(args.box, dtype=float)
    if vals.size != 2 * d:
        raise InvalidArgument(f"--box needs {2 * d} numbers (lower bounds then upper bounds)")
    return ParameterBox(vals[:d], vals[d:])


def cmd_estimate(args) -> int:
    op, sk = sketch_from_json(_load_json(args.sketch))
    box = _box_from_args(args, op.d)
    if args.kappa is not None:
        kappa = float(args.kappa)
        meta = {"kappa": kappa, "preset": "manual"}
    elif args.kappa_preset == "s2mix":
        template = template_from_config(op.law.get("template", {"kind": "gaussian"}))
        law = law_from_config(op.law, op.tau, op.d)
        csw = supermix_switch_constant(template, op.tau, op.d).value
        nb = noise_level_bound(args.alpha, op.m, sk.n, op.tau, law, args.c1, args.c2)
        kappa = calibrate_kappa(nb.value, args.s0, sketched_c_kappa(csw, args.c_pivot))
        meta = {"kappa": kappa, "preset": "s2mix", "c_switch": csw, "gamma_bound": nb.value,
                "c_alpha_m": nb.c_alpha_m, "s0": args.s0, "alpha": args.alpha,
                "flags": ["C1, C2 and C'_pivot are configured defaults"]}
    else:
        raise InvalidArgument(f"unknown kappa preset '{args.kappa_preset}'")
    overrides = json.loads(args.solve) if args.solve else {}
    problem = BlassoProblem.sketched(op, sk, kappa, box)
    mu, trace = solve(problem, SolveConfig(**overrides))
    _emit(mu.to_json(), args.out)
    trace_out = {"calibration": meta, "objective": objective(problem, mu), **trace.to_json()}
    _emit(trace_out, args.trace or (str(Path(args.out).with_suffix(".trace.json")) if args.out else None))
    return EXIT_OK if trace.converged else EXIT_NUMERICAL


def cmd_certify(args) -> int:
    mu = DiscreteMeasure.from_json(_load_json(args.measure))
    kcfg = _load_json(args.kernel)
    d = int(kcfg.get("d", mu.d))
    lpc = sinc4_lpc_params(d, max(len(mu), 1))
    r0 = args.r0 if args.r0 is not None else lpc.r0
    eps0 = args.eps0 if args.eps0 is not None else lpc.eps0_lower
    eps2 = args.eps2 if args.eps2 is not None else lpc.eps2_lower
    signs = np.sign(mu.weights)
    signs[signs == 0] = 1
    if args.sketch:
        op, _ = sketch_from_json(_load_json(args.sketch))
        kind = "localizing" if args.localizing is not None else "full"
        cert = build_sketched_certificate(mu.positions, signs, op, kind, args.localizing, c_pivot=args.c_pivot)
        eps0, eps2 = (eps0 / 4, 1.5 * eps2) if args.eps0 is None and args.eps2 is None else (eps0, eps2)
    else:
        pivot = kernel_from_config({"kind": "sinc4", **kcfg}, d)
        if args.localizing is not None:
            cert = build_localizing_certificate(mu.positions, args.localizing, pivot, signs)
        else:
            cert = build_certificate(mu.positions, signs, pivot)
    audit = audit_certificate(cert, r0, eps0, eps2, far_samples=args.far_samples,
                              near_grid_density=args.near_density)
    _emit({"certificate": cert.to_json(), "audit": audit.to_json()}, args.out)
    return EXIT_OK if audit.passed else EXIT_NUMERICAL


def cmd_lpc(args) -> int:
    kcfg = _load_json(args.kernel) if args.kernel else {"kind": "sinc4", "tau": 1.0}
    d = args.d or int(kcfg.get("d", 1))
    if kcfg.get("kind") == "sinc4":
        rep = audit_sinc4(d, args.s0, float(kcfg.get("tau", 1.0)), grid_density=args.grid_density,
                          trials=args.trials)
    else:
        if args.r0 is None or args.eps0 is None or args.eps2 is None:
            raise InvalidArgument("non-sinc-4 kernels need --r0, --eps0 and --eps2 to audit against")
        kernel = kernel_from_config(kcfg, d)
        cur = audit_curvature(kernel, args.r0, grid_density=args.grid_density)
        der = derivative_bound_audit(kernel, trials=args.trials)
        rep = LpcReport(args.r0, args.eps0, args.eps2, args.delta0 or 1.0, der.estimates, args.s0,
                        {"eps0_hat": cur.eps0_hat, "eps2_hat": cur.eps2_hat, "far_witness": cur.far_witness,
                         "near_witness": cur.near_witness, "tail_bound": cur.tail_bound, "grid": cur.grid})
    _emit(rep.to_json(), args.out)
    return EXIT_OK if rep.passed else EXIT_NUMERICAL


def cmd_switch(args) -> int:
    pivot = kernel_from_config(_load_json(args.pivot), args.d)
    model = kernel_from_config(_load_json(args.model), args.d)
    sc = switch_constant(pivot, model, nodes=args.nodes)
    _emit(sc.to_json(), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    res = resolve(cfg)
    mu = DiscreteMeasure.from_json(_load_json(args.mu))
    mu0 = DiscreteMeasure.from_json(_load_json(args.mu0)) if args.mu0 else res.mu0
    n = int(args.n or cfg.n_list[0])
    s0 = len(mu0)
    metric = Sinc4Kernel(res.tau, cfg.d).metric
    nb = noise_level_bound(cfg.alpha, res.m, n, res.tau, res.law, cfg.c1, cfg.c2)
    r, _ = effective_radius(n, cfg.schedule)
    far_b, near_b = s2mix_bounds(cfg.c_pivot, res.c_switch, nb.c_alpha_m, n, r, s0)
    report = bound_verdict(mu, mu0, r, nb.value, s0, res.constants, metric, strict=False,
                           far_bound=far_b, near_bound=near_b)
    _emit(report.to_json(), args.out)
    rows = ["n,r_n,gamma_bound,far_bound,near_bound,precondition_ok"]
    ns = sorted({int(v) for v in np.logspace(2, 7, 11)} | {n})
    limit = res.constants.radius_limit[0]
    for k in ns:
        rk, _ = effective_radius(k, cfg.schedule)
        nbk = noise_level_bound(cfg.alpha, res.m, k, res.tau, res.law, cfg.c1, cfg.c2)
        fb, nbnd = s2mix_bounds(cfg.c_pivot, res.c_switch, nbk.c_alpha_m, k, rk, s0)
        rows.append(f"{k},{rk:.10g},{nbk.value:.10g},{fb:.10g},{nbnd:.10g},{int(rk < limit)}")
    csv_text = "\n".join(rows) + "\n"
    if args.csv:
        Path(args.csv).write_text(csv_text)
    return EXIT_OK if report.passed else EXIT_NUMERICAL


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="offgrid", description="Off-the-grid sparse measure recovery toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw mixture samples for every (n, seed) in a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("run", help="full experiment: simulate, sketch, estimate and check bounds")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sketch", help="sketch a CSV dataset with random Fourier features")
    s.add_argument("--samples", required=True)
    s.add_argument("--kernel", required=True, help="JSON with tau, d, template, law")
    s.add_argument("--m", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sketch)

    s = sub.add_parser("estimate", help="solve the sketched BLASSO")
    s.add_argument("--sketch", required=True)
    s.add_argument("--box", type=float, nargs="+", help="lower bounds followed by upper bounds")
    s.add_argument("--kappa", type=float)
    s.add_argument("--kappa-preset", default="s2mix")
    s.add_argument("--s0", type=int, default=1)
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--c1", type=float, default=1.0)
    s.add_argument("--c2", type=float, default=1.0)
    s.add_argument("--c-pivot", type=float, default=1.0)
    s.add_argument("--solve", help="JSON object of solver overrides")
    s.add_argument("--out")
    s.add_argument("--trace")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("certify", help="build and audit a dual certificate")
    s.add_argument("--measure", required=True)
    s.add_argument("--kernel", required=True)
    s.add_argument("--sketch")
    s.add_argument("--localizing", type=int)
    s.add_argument("--r0", type=float)
    s.add_argument("--eps0", type=float)
    s.add_argument("--eps2", type=float)
    s.add_argument("--c-pivot", type=float, default=1.0)
    s.add_argument("--far-samples", type=int, default=10_000)
    s.add_argument("--near-density", type=int, default=200)
    s.add_argument("--out")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("lpc", help="local positive curvature constants with grid audits")
    s.add_argument("--kernel")
    s.add_argument("--d", type=int)
    s.add_argument("--s0", type=int, default=1)
    s.add_argument("--r0", type=float)
    s.add_argument("--eps0", type=float)
    s.add_argument("--eps2", type=float)
    s.add_argument("--delta0", type=float)
    s.add_argument("--grid-density", type=int, default=200)
    s.add_argument("--trials", type=int, default=4000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_lpc)

    s = sub.add_parser("switch-constant", help="kernel-switch constant between two kernels")
    s.add_argument("--pivot", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--d", type=int)
    s.add_argument("--nodes", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_switch)

    s = sub.add_parser("report", help="bound verdict for an estimate plus plot-ready bound curves")
    s.add_argument("--mu", required=True)
    s.add_argument("--mu0")
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--out")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgument, PreconditionError, ConfigurationError, UnsupportedError,
            FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IllPosedError, EmbeddingViolation, DiagnosticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
