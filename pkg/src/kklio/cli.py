"""Command-line front end.

Subcommands:

* ``run``       -- one experiment; writes a CSV trace and optionally an SVG chart
* ``compare``   -- the same experiment across several gains, as a table
* ``constants`` -- print the estimated regularity constants of a preset

A flat JSON config file can supply any ``run``/``compare`` option; explicit
command-line flags win on conflict. Exit codes: 0 success, 2 enclosure
violation, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import presets
from .harness import RunConfig, compare_gammas, format_comparison, run_experiment

EXIT_OK = 0
EXIT_VIOLATION = 2
EXIT_CONFIG = 3

_RUN_FIELDS = ("preset", "tau", "gamma", "steps", "seed", "noise", "disturbance",
               "variant", "x0", "x0_halfwidth", "window", "out", "svg", "coeffs",
               "gammas")
_VARIANTS = {"minmax": "min_max", "min_max": "min_max", "plus": "plus_only",
             "minus": "minus_only", "swapped": "swapped"}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", default=None, help=f"plant preset (default {presets.OSCILLATOR})")
    p.add_argument("--tau", type=float, default=None, help="discretization rate")
    p.add_argument("--steps", type=int, default=None, help="number of steps (default 500)")
    p.add_argument("--seed", type=int, default=None, help="seed for constant estimation")
    p.add_argument("--noise", choices=("on", "off"), default=None)
    p.add_argument("--disturbance", choices=("on", "off"), default=None)
    p.add_argument("--variant", default=None,
                   help="bound recovery variant: minmax|plus|minus|swapped")
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--coeffs", default=None, help="coefficient table to load instead of solving")
    p.add_argument("--config", default=None, help="JSON file with defaults (CLI flags win)")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kklio",
                                 description="Interval state estimation in KKL coordinates")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    _add_common(run)
    run.add_argument("--gamma", type=float, default=None, help="target gain in (0, 1]")
    run.add_argument("--svg", default=None, help="SVG chart output path")

    cmp_ = sub.add_parser("compare", help="run several gains on the identical experiment")
    _add_common(cmp_)
    cmp_.add_argument("--gammas", default=None, help="comma-separated gains, e.g. 1.0,0.7")

    con = sub.add_parser("constants", help="print estimated constants for a preset")
    con.add_argument("--preset", default=presets.OSCILLATOR)
    con.add_argument("--gamma", type=float, default=1.0)
    con.add_argument("--tau", type=float, default=presets.DEFAULT_TAU)
    con.add_argument("--seed", type=int, default=presets.ESTIMATION_SEED)
    return ap


def _merge_config(args: argparse.Namespace) -> dict:
    merged: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(_RUN_FIELDS) - {"gamma"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(loaded)
    for key in (*_RUN_FIELDS, "gamma"):
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _run_config(merged: dict) -> RunConfig:
    kwargs = {}
    for key in ("preset", "tau", "gamma", "steps", "seed", "out", "svg", "coeffs",
                "x0", "x0_halfwidth", "window"):
        if key in merged and merged[key] is not None:
            kwargs[key] = merged[key]
    for key in ("noise", "disturbance"):
        if key in merged and merged[key] is not None:
            v = merged[key]
            kwargs[key] = v if isinstance(v, bool) else v == "on"
    if merged.get("variant"):
        variant = _VARIANTS.get(merged["variant"])
        if variant is None:
            raise ValueError(f"unknown variant {merged['variant']!r}")
        kwargs["recovery_variant"] = variant
    if "x0" in kwargs:
        kwargs["x0"] = tuple(kwargs["x0"])
    if "window" in kwargs:
        kwargs["window"] = tuple(kwargs["window"])
    return RunConfig(**kwargs)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "constants":
            return _cmd_constants(args)
        merged = _merge_config(args)
        cfg = _run_config(merged)
        if args.command == "run":
            return _cmd_run(cfg)
        gammas = merged.get("gammas")
        if gammas is None:
            raise ValueError("compare needs --gammas")
        if isinstance(gammas, str):
            gammas = [float(g) for g in gammas.split(",") if g]
        return _cmd_compare(cfg, gammas)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _cmd_run(cfg: RunConfig) -> int:
    result = run_experiment(cfg)
    s = result.summary
    print(f"preset={s['preset']} gamma={s['gamma']:g} steps={s['steps']} "
          f"noise={'on' if s['noise'] else 'off'} "
          f"disturbance={'on' if s['disturbance'] else 'off'}")
    print(f"mean width_x over k in {s['window']}: {s['mean_width_x_window']:.6g}")
    print(f"z-width decay rate per step: {s['decay_rate_z']:.6g}")
    print(f"final width_x: {s['final_width_x']:.6g}  max inversion residual: "
          f"{s['max_resid']:.3g}")
    if cfg.out:
        print(f"trace written to {cfg.out}")
    if cfg.svg:
        print(f"chart written to {cfg.svg}")
    if s["violations"]:
        print(f"enclosure violated at {s['violations']} step(s), first at "
              f"k={s['first_violation_k']}", file=sys.stderr)
        return EXIT_VIOLATION
    print("enclosure violations: 0")
    return EXIT_OK


def _cmd_compare(cfg: RunConfig, gammas) -> int:
    summaries = compare_gammas(cfg, gammas)
    print(format_comparison(summaries))
    bad = [s for s in summaries if s["violations"]]
    if bad:
        print(f"enclosure violated for gamma={bad[0]['gamma']:g} at "
              f"k={bad[0]['first_violation_k']}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_constants(args: argparse.Namespace) -> int:
    bundle = presets.build_preset(args.preset, gamma=args.gamma, tau=args.tau, seed=args.seed)
    c = bundle.consts
    print(f"preset={bundle.name} gamma={args.gamma:g} tau={args.tau:g} seed={args.seed}")
    print(f"orders m={c.m} (m_bar={c.m_bar})  n_z={bundle.target.n_z}")
    print(f"c_f={c.c_f:.12g}\nc_h={c.c_h:.12g}\nc_o={c.c_o:.12g}\nc_c={c.c_c:.12g}")
    print(f"c_N={c.c_N:g}")
    print(f"gamma_star (closed form, uncapped) = {bundle.gamma_star_raw:.12g}")
    print(f"c_L={c.c_L:.12g}  (sampled transform Lipschitz bound)")
    print(f"c_I={c.c_I:.12g}  (sampled injectivity margin)")
    print(f"c={c.c:.12g}  recovery margin c/gamma^(m_bar-1)="
          f"{bundle.observer_cfg.margin_c_over_gamma:.12g}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
