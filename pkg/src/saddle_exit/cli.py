"""Command line front end: ``saddle-exit {analyze,sample,compare,convergence,verify}``.

Every subcommand reads a JSON config (see :mod:`saddle_exit.config`) and
writes its result into the output directory. Precedence for that directory
is ``--out``, then ``$SADDLE_EXIT_OUT``, then ``output_dir`` in the config.

Exit codes: 0 success, 1 bad config, 2 spectral assumption violated,
3 geometry failure, 4 numerical convergence failure, 5 a verify check failed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import Experiment, ExperimentConfig, load_config, resolve
from .dynsys import spectral_data
from .errors import ConfigError, SaddleExitError
from .flow import StepControl, boundary_hits, geometric_grid, h_constants
from .mc import (
    compare_to_limit,
    convergence_sweep,
    run_batch,
    samples_from_csv,
    samples_to_csv,
    sweep_to_csv,
)
from .models import truth_card
from .theory import ExitLawParams, LimitLaw, sigma_at_origin, sigma_via_adjoint

ENV_OUT = "SADDLE_EXIT_OUT"
EXIT_VERIFY_FAILED = 5
CDF_POINTS = 200


def _floats(a):
    return [float(x) for x in np.asarray(a).ravel()]


def analyze(exp: Experiment) -> dict:
    """Limit-law parameters of an experiment, with error estimates."""
    tol = exp.config.tolerances
    model = exp.model
    s = spectral_data(model)
    step = StepControl(rtol=tol["rtol"])
    grid = geometric_grid(tol["delta0"], tol["K"])
    curve = boundary_hits(model, s, delta_ref=tol["delta0"], grid=grid, step=step)
    hc = h_constants(model, s, curve, grid=grid, step=step)
    sigma, sigma_err = sigma_via_adjoint(model, s, exp.x0, rtol=tol["sigma_rtol"], return_error=True)
    law = LimitLaw(ExitLawParams(curve.q_plus, curve.q_minus, hc.h_plus, hc.h_minus, sigma, s.lam))
    lo = min(law.ppf(1, 1e-3), law.ppf(-1, 1e-3))
    hi = max(law.ppf(1, 1 - 1e-3), law.ppf(-1, 1 - 1e-3))
    t = np.linspace(lo, hi, CDF_POINTS)
    report = {
        "lambda": float(s.lam),
        "v": _floats(s.v),
        "ell": _floats(s.ell),
        "gap": float(s.gap) if math.isfinite(s.gap) else None,
        "mu": None if s.mu is None else float(s.mu),
        "eigenvalues_real": _floats(s.eigenvalues.real),
        "eigenvalues_imag": _floats(s.eigenvalues.imag),
        "fixed_point": _floats(exp.offset),
        "x0": _floats(exp.x0 + exp.offset),
        "q_plus": _floats(curve.q_plus + exp.offset),
        "q_minus": _floats(curve.q_minus + exp.offset),
        "transversality_plus": float(curve.transversality_plus),
        "transversality_minus": float(curve.transversality_minus),
        "h_plus": float(hc.h_plus),
        "h_minus": float(hc.h_minus),
        "h_error": float(max(hc.h_plus_error, hc.h_minus_error)),
        "h_plus_error": float(hc.h_plus_error),
        "h_minus_error": float(hc.h_minus_error),
        "sigma": float(sigma),
        "sigma_error": float(sigma_err),
        "sigma_origin_closed_form": sigma_at_origin(s),
        "raw_table": {k: {"delta": [d for d, _ in v], "a": [a for _, a in v]}
                      for k, v in hc.raw_table.items()},
        "cdf_table": {
            "t": _floats(t),
            "cdf_plus": _floats(law.cdf(1, t)),
            "cdf_minus": _floats(law.cdf(-1, t)),
            "density_plus": _floats(law.density(1, t)),
            "density_minus": _floats(law.density(-1, t)),
        },
    }
    if exp.registry_name is not None:
        card = truth_card(exp.registry_name, exp.params, exp.model.domain)
        if card is not None and not np.any(exp.offset):
            report["truth_card"] = card
    return report


def law_of(exp: Experiment, report: dict | None = None):
    report = analyze(exp) if report is None else report
    off = exp.offset
    params = ExitLawParams(np.array(report["q_plus"]) - off, np.array(report["q_minus"]) - off,
                           report["h_plus"], report["h_minus"], report["sigma"], report["lambda"])
    return spectral_data(exp.model), LimitLaw(params)


def sample(exp: Experiment, threads: int, law=None, s=None):
    cfg = exp.config
    if s is None:
        s, law = law_of(exp)
    return run_batch(exp.model, s, law, exp.x0, cfg.eps, cfg.n, cfg.seed, cfg.step, threads, cfg.t_cap)


def compare(exp: Experiment, threads: int, samples=None) -> dict:
    s, law = law_of(exp)
    if samples is None:
        samples = sample(exp, threads, law, s)
    rep = compare_to_limit(samples, law, radii=None, diameter=exp.model.domain.diameter,
                           min_per_side=min(100, max(1, len(samples) // 4)))
    out = rep.to_dict()
    out["concentration"] = {repr(k): v for k, v in rep.concentration.items()}
    out["eps"] = samples[0].eps
    out["lambda"] = law.params.lam
    out["h_plus"], out["h_minus"], out["sigma"] = law.params.h_plus, law.params.h_minus, law.params.sigma
    return out


def convergence(exp: Experiment, threads: int) -> str:
    cfg = exp.config
    if len(cfg.eps_list) < 3:
        raise ConfigError("eps_list: convergence needs at least 3 values")
    s, law = law_of(exp)
    rows, _ = convergence_sweep(exp.model, s, law, exp.x0, cfg.eps_list, cfg.n, cfg.seed,
                                cfg.step, threads)
    return sweep_to_csv(rows)


# ---------------------------------------------------------------- driver

def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(ENV_OUT):
        return Path(os.environ[ENV_OUT])
    return Path(cfg.output_dir)


def cmd_analyze(exp, args, out):
    path = _write(out / "analyze.json", _dump(analyze(exp)))
    print(f"wrote {path}")
    return 0


def cmd_sample(exp, args, out):
    smp = sample(exp, args.threads)
    path = _write(out / "samples.csv", samples_to_csv(smp, exp.offset))
    print(f"wrote {path} ({len(smp)} samples, {sum(x.capped for x in smp)} capped)")
    return 0


def cmd_compare(exp, args, out):
    src = args.samples or exp.config.raw.get("samples_file")
    samples = None
    if src:
        samples = samples_from_csv(Path(src).read_text(encoding="utf-8"), exp.config.seed,
                                   exp.offset)
        if not samples:
            raise ConfigError(f"samples_file: {src} holds no samples")
    rep = compare(exp, args.threads, samples)
    path = _write(out / "compare.json", _dump(rep))
    print(f"wrote {path}: ks_plus={rep['ks_plus']:.4f} (band {rep['ks_band_plus']:.4f}), "
          f"ks_minus={rep['ks_minus']:.4f} (band {rep['ks_band_minus']:.4f}), "
          f"side_fraction_plus={rep['side_fraction_plus']:.4f}")
    return 0


def cmd_convergence(exp, args, out):
    path = _write(out / "convergence.csv", convergence(exp, args.threads))
    print(f"wrote {path}")
    return 0


def cmd_verify(exp, args, out):
    from .acceptance import run_verify

    results = run_verify(exp, threads=args.threads, full=args.full)
    for r in results:
        print(r.line())
    _write(out / "verify.json", _dump([r.to_dict() for r in results]))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY_FAILED if failed else 0


COMMANDS = {
    "analyze": cmd_analyze,
    "sample": cmd_sample,
    "compare": cmd_compare,
    "convergence": cmd_convergence,
    "verify": cmd_verify,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(ConfigError.exit_code)


def build_parser():
    p = _Parser(prog="saddle-exit", description="Small-noise exit law near an unstable fixed point.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--threads", type=int, default=None, help="worker threads for Monte Carlo")
        sp.add_argument("--out", default=None, help="output directory")
        if name == "compare":
            sp.add_argument("--samples", default=None, help="CSV written by `sample`")
        if name == "verify":
            sp.add_argument("--full", action="store_true", help="full-scale acceptance runs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed: must be an unsigned 64-bit integer")
            cfg = cfg.with_overrides(seed=args.seed)
        if args.threads is None:
            args.threads = cfg.threads
        if args.threads < 1:
            raise ConfigError("--threads: must be at least 1")
        exp = resolve(cfg)
        t0 = time.perf_counter()
        code = COMMANDS[args.command](exp, args, _out_dir(args, cfg))
        print(f"{args.command} finished in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except SaddleExitError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
