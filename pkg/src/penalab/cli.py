"""Command-line front door.

Verdicts stream to stdout as JSON lines (one object per check); series data
goes to CSV files under ``--out`` when requested.  The exit status is 0 iff
every verdict passed.  ``--config`` names a plain key=value file supplying
defaults; explicit flags override it.  The default seed comes from the
PENALAB_SEED environment variable when set.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .exact_laws import DensitySpec, classify_region, h_cdf, p_bessel3, p_joint, p_max
from .expansion import f1_coefficient_check, f1_kennedy_check, fit_rate
from .martingales import m_kennedy_xs, m_mu_lambda_xs, m_phi_xs
from .penalized_mc import bessel_penalization_check
from .quadrature import RectEvent, q_ay_finite, q_ay_limit, q_phi_limit, q_y_finite, q_y_limit
from .report import Verdict, abs_verdict, ks_test
from .samplers import RngStream, exact_bm_state, sample_Q_y
from .acceptance import _event_freq, _mixture_levels

__all__ = ["main", "ks_test", "Verdict"]


def _parse_event(text: str) -> RectEvent:
    vals = {}
    for part in text.split(","):
        key, _, raw = part.partition("=")
        if key.strip() not in ("u", "b", "c"):
            raise SystemExit(f"unknown event key {key!r} (expected u=,b=,c=)")
        vals[key.strip()] = float(raw)
    if "u" not in vals:
        raise SystemExit("event needs u=<time>")
    return RectEvent(vals["u"], vals.get("b", math.inf), vals.get("c", math.inf))


def _parse_phi(text: str) -> DensitySpec:
    parts = text.split(":")
    if parts[0] == "phi":
        parts = parts[1:]
    family = parts[0]
    if family in ("uniform", "uni"):
        return DensitySpec.uniform(float(parts[1]))
    if family in ("exp", "exponential"):
        return DensitySpec.exponential(float(parts[1]))
    raise SystemExit(f"unsupported density spec {text!r} (use uniform:A or exp:RATE)")


def _parse_psi(text: str, lam: float) -> DensitySpec:
    parts = text.split(":")
    family = parts[0]
    if family in ("uniform", "uni"):
        return DensitySpec.uniform(float(parts[1]), laplace_lambda=lam)
    if family in ("exp", "exponential"):
        return DensitySpec.exponential(float(parts[1]), laplace_lambda=lam)
    raise SystemExit(f"unsupported shape spec {text!r}")


def _emit(verdicts, out: "list[Verdict]"):
    for v in verdicts:
        print(v.to_json())
        sys.stdout.flush()
        out.append(v)


def _write_csv(out_dir: str | None, name: str, header, rows):
    if not out_dir:
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / name, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_density(args, verdicts):
    fns = {"max": p_max, "max-cdf": h_cdf, "bessel3": p_bessel3}
    if args.law == "joint":
        val = p_joint(args.r, args.a, args.z)
    else:
        val = fns[args.law](args.r, args.z)
    print(json.dumps({"law": args.law, "r": args.r, "value": val}))


def _cmd_classify(args, verdicts):
    print(json.dumps({"region": classify_region(args.lam, args.mu).value}))


def _cmd_martingale_check(args, verdicts):
    rng = RngStream(args.seed)
    gen = rng.generator(0)
    x, s = exact_bm_state(args.u, args.n, gen)
    parts = args.family.split(":")
    if parts[0] == "phi":
        phi = _parse_phi(":".join(parts[1:]))
        vals = m_phi_xs(x, s, phi)
    elif parts[0] == "explinear":
        vals = m_mu_lambda_xs(x, s, args.u, float(parts[1]), float(parts[2]))
    elif parts[0] == "kennedy":
        lam = float(parts[1])
        psi = _parse_psi(":".join(parts[2:]), lam)
        vals = m_kennedy_xs(x, s, args.u, lam, psi)
    else:
        raise SystemExit(f"unknown martingale family {args.family!r}")
    vals = np.asarray(vals, dtype=float)
    se = float(np.std(vals)) / math.sqrt(args.n)
    _emit([abs_verdict(f"unit-mean[{args.family}]@u={args.u}",
                       float(np.mean(vals)), 1.0, 4.0 * se, "mc-oracle")], verdicts)


def _cmd_limit(args, verdicts):
    ev = _parse_event(args.event)
    rng = RngStream(args.seed)
    if args.phi is not None:
        phi = _parse_phi(args.phi)
        levels = phi.ppf(rng.generator(0).random(args.n))
        levels = np.maximum(levels, 1e-9)
        target = q_phi_limit(phi, ev)
        tag = f"phi:{args.phi}"
    elif args.a is not None:
        levels = _mixture_levels(args.a, args.y, args.n, rng.generator(0))
        target = q_ay_limit(args.a, args.y, ev)
        tag = f"a={args.a},y={args.y}"
    else:
        levels = np.full(args.n, args.y)
        target = q_y_limit(args.y, ev)
        tag = f"y={args.y}"
    p, se, _ = _event_freq(levels, ev, args.step, rng.generator(1))
    _emit([abs_verdict(f"limit[{tag}]", p, target, 3.0 * se, "sampler vs quadrature")],
          verdicts)
    if args.dump_paths:
        out_dir = Path(args.out or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        gen = rng.generator(2)
        for k in range(args.dump_paths):
            path = sample_Q_y(float(levels[k % levels.size]), ev.u, args.step, gen=gen)
            with open(out_dir / f"path_{k:04d}.csv", "w") as fh:
                path.write_csv(fh)


def _cmd_converge(args, verdicts):
    ev = _parse_event(args.event)
    ts = [float(t) for t in args.t.split(",")]
    if args.a is not None:
        limit = q_ay_limit(args.a, args.y, ev)
        series = [(t, q_ay_finite(args.a, args.y, ev, t)) for t in ts]
        tag = f"ay({args.a},{args.y})"
    else:
        limit = q_y_limit(args.y, ev)
        series = [(t, q_y_finite(args.y, ev, t)) for t in ts]
        tag = f"y({args.y})"
    fit = fit_rate(series, model="poly")
    gaps = [abs(v - limit) for _, v in series]
    slope = float(np.polyfit(np.log(ts), np.log(gaps), 1)[0])
    print(json.dumps({"fit": {"q_limit": fit.q_limit, "c1": fit.c1,
                              "residual": fit.residual, "window": list(fit.window)},
                      "limit": limit}))
    _emit([abs_verdict(f"converge[{tag}]-decay-exponent", -slope, 1.0, 0.2,
                       "log-log slope of the gap")], verdicts)
    _write_csv(args.out, f"converge_{tag}.csv", ["t", "value", "gap"],
               [(t, v, abs(v - limit)) for t, v in series])


def _cmd_expansion(args, verdicts):
    ev = _parse_event(args.event)
    if args.mode == "poly":
        rep = f1_coefficient_check(_parse_phi(args.phi), ev)
        _emit([abs_verdict("expansion-poly-rel-err", rep["rel_err"], 0.0, 0.10,
                           f"fit {rep['fit'].c1:.6g} target {rep['target']:.6g} "
                           f"(cubic-variant {rep['target_cubic_variant']:.6g})")], verdicts)
    else:
        lam = args.lam
        psi = _parse_psi(args.psi, lam)
        rep = f1_kennedy_check(lam, psi, ev)
        _emit([abs_verdict("expansion-kennedy-rel-err", rep["rel_err"], 0.0, 0.15,
                           f"fit {rep['fit'].c1:.6g} target {rep['target']:.6g}")], verdicts)
    fit = rep["fit"]
    if args.mode == "poly":
        model = lambda t: fit.q_limit + fit.c1 / t
    else:
        model = lambda t: fit.q_limit + fit.c1 * math.exp(-args.lam ** 2 * t / 2.0) / t ** 1.5
    _write_csv(args.out, f"expansion_{args.mode}.csv", ["t", "value", "model_value"],
               [(t, v, model(t)) for t, v in rep["series"]])


def _cmd_bessel(args, verdicts):
    rng = RngStream(args.seed)
    ts = [float(t) for t in args.t.split(",")]
    if args.trivial:
        f52 = lambda b, j: np.exp(-b) * (j <= 1.0)
        rep = bessel_penalization_check(0.0, 0.0, args.u, ts, args.n, rng, f52=f52)
    else:
        rep = bessel_penalization_check(args.lam, args.mu, args.u, ts, args.n, rng)
    vs = [abs_verdict(f"bessel[t={row['t']},b={row['b']}]", row["value"],
                      row["target"], row["tol"], "penalized Bessel(3) vs target")
          for row in rep["rows"]]
    _emit(vs, verdicts)
    _write_csv(args.out, "bessel.csv",
               ["penalty", "t", "b", "value", "stderr", "n", "target", "target_source"],
               [(r["penalty"], r["t"], r["b"], r["value"], r["stderr"], r["n"],
                 r["target"], r["target_source"]) for r in rep["rows"]])


def _cmd_verify(args, verdicts):
    which = None
    if args.only:
        which = {int(k) for k in args.only.split(",")}
    vs, _ = acceptance.run_suite(seed=args.seed, scale=args.scale, which=which)
    _emit(vs, verdicts)


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    seed_default = int(os.environ.get("PENALAB_SEED", "12345"))
    top = argparse.ArgumentParser(prog="penalab",
                                  description="penalized-Brownian-motion laboratory")
    top.add_argument("--config", help="key=value file with option defaults")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--out", help="directory for CSV output")

    p = sub.add_parser("density", help="evaluate a closed-form density/CDF")
    p.add_argument("--law", choices=["max", "max-cdf", "joint", "bessel3"], required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--a", type=float, default=0.0)
    common(p)
    p.set_defaults(fn=_cmd_density)

    p = sub.add_parser("classify", help="regime of (lambda, mu)")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    common(p)
    p.set_defaults(fn=_cmd_classify)

    p = sub.add_parser("martingale-check", help="empirical unit-mean check")
    p.add_argument("--family", required=True,
                   help="phi:uniform:A | phi:exp:RATE | explinear:LAM:MU | kennedy:LAM:uniform:A")
    p.add_argument("--u", type=float, default=1.0)
    p.add_argument("--n", type=int, default=100000)
    common(p)
    p.set_defaults(fn=_cmd_martingale_check)

    p = sub.add_parser("limit", help="sampler vs quadrature limit law")
    p.add_argument("--y", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--phi", help="uniform:A or exp:RATE")
    p.add_argument("--event", required=True, help="u=1,b=0,c=0.5 (b,c optional)")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--dump-paths", type=int, default=0,
                   help="also write this many sample paths as CSV (t, x, s)")
    common(p)
    p.set_defaults(fn=_cmd_limit)

    p = sub.add_parser("converge", help="finite-horizon convergence and rate fit")
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--a", type=float)
    p.add_argument("--event", required=True)
    p.add_argument("--t", default="32,64,128,256,512,1024")
    common(p)
    p.set_defaults(fn=_cmd_converge)

    p = sub.add_parser("expansion", help="first-order expansion coefficient check")
    p.add_argument("--mode", choices=["poly", "kennedy"], default="poly")
    p.add_argument("--phi", default="uniform:1")
    p.add_argument("--psi", default="uniform:1")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--event", default="u=1,b=0,c=0.5")
    common(p)
    p.set_defaults(fn=_cmd_expansion)

    p = sub.add_parser("bessel", help="penalized Bessel(3) checks")
    p.add_argument("--lambda", dest="lam", type=float, default=-1.0)
    p.add_argument("--mu", type=float, default=-1.0)
    p.add_argument("--u", type=float, default=1.0)
    p.add_argument("--t", default="16")
    p.add_argument("--n", type=int, default=30000)
    p.add_argument("--trivial", action="store_true",
                   help="use the trivial-limit weight f(X, J) instead")
    common(p)
    p.set_defaults(fn=_cmd_bessel)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--suite", default="core")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--only", help="comma-separated criterion numbers")
    common(p)
    p.set_defaults(fn=_cmd_verify)
    return top


def _known_dests(parser: argparse.ArgumentParser) -> set[str]:
    dests = set()
    stack = [parser]
    while stack:
        p = stack.pop()
        for action in p._actions:
            dests.add(action.dest)
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())
    return dests


def main(argv=None) -> int:
    parser = _build_parser()
    args, _ = parser.parse_known_args(argv)
    if args.config:
        known = _known_dests(parser)
        defaults = {}
        for line in Path(args.config).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            dest = key.strip().replace("-", "_")
            if dest not in known:
                parser.error(f"unknown config key {key.strip()!r}")
            defaults[dest] = val.strip()
        parser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    else:
        args = parser.parse_args(argv)
    verdicts: list[Verdict] = []
    args.fn(args, verdicts)
    return 0 if all(v.passed for v in verdicts) else 1


if __name__ == "__main__":
    sys.exit(main())
