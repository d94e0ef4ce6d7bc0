"""Command-line interface: ``desing <subcommand> ...``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure,
3 stage or size limit.  Errors go to stderr as
``{"error": {"code", "message", "context"}}``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import actions as act_mod
from . import blowup, metrics, nerve, plot, presets, quotient, serialize, strata
from .errors import DesingError, UnsupportedStage, ValidationError

log = logging.getLogger("desing")


@dataclass(frozen=True)
class RunConfig:
    action: str
    radius: float = 1.0
    grid: int = 11
    rank_tol: float = act_mod.RANK_RTOL
    metric_tol: float = 1e-9
    quotient_tol: float = quotient.SEGMENT_TOL
    max_stages: int = blowup.DEFAULT_MAX_STAGES
    outputs: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        bad = [name for name in ("radius", "rank_tol", "metric_tol", "quotient_tol")
               if not getattr(self, name) > 0]
        if bad:
            raise ValidationError([{"code": "BadConfig", "entry": b, "detail": "must be positive"}
                                   for b in bad])
        if self.grid < 1 or self.max_stages < 0:
            raise ValidationError([{"code": "BadConfig", "entry": "grid/max_stages",
                                    "detail": "out of range"}])


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError([{"code": "BadArguments", "entry": self.prog, "detail": message}])


def _load(spec):
    """Action from a JSON path, or a bundled preset name."""
    if os.path.exists(spec):
        try:
            return act_mod.load_action(spec)
        except json.JSONDecodeError as exc:
            raise ValidationError([{"code": "BadJSON", "entry": spec, "detail": str(exc)}]) from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError([{"code": "BadShape", "entry": spec, "detail": str(exc)}]) from None
    name = spec[len("preset:"):] if spec.startswith("preset:") else spec
    if name in presets.NAMES:
        return act_mod.load_action(presets.preset_path(name), name)
    raise ValidationError([{"code": "MissingFile", "entry": spec, "detail": "no such file or preset"}])


def _emit(path, text):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _summary(msg):
    print(msg)


# ------------------------------------------------------------------ subcommands

def cmd_validate(args):
    action = _load(args.action)
    g = action.group
    report = {"valid": True, "ambient_dim": action.ambient_dim, "algebra_dim": g.algebra_dim,
              "components": len(g.finite_elements), "haar_nodes": len(g.haar_weights),
              "haar_kind": g.haar_kind}
    _emit(args.out, serialize.dumps(report))
    _summary(f"valid: n={action.ambient_dim} algebra_dim={g.algebra_dim} "
             f"components={len(g.finite_elements)} nodes={len(g.haar_weights)}")


def cmd_stratify(args):
    cfg = RunConfig(action=args.action, radius=args.radius, grid=args.grid)
    action = _load(cfg.action)
    st = strata.stratify(action, cfg.radius, cfg.grid)
    _emit(args.out, serialize.dumps(st.to_list()))
    fr = strata.check_frontier(st)
    c1 = strata.check_no_codim_one(st)
    _summary(f"codims={st.codim_classes} components={len(st.strata)} "
             f"frontier={'pass' if fr['passed'] else 'fail'} "
             f"no_codim_one={'pass' if c1['passed'] else 'fail'}")


def _desing(action, cfg, args):
    return blowup.desingularize(action, max_stages=cfg.max_stages, radius=cfg.radius,
                                grid=cfg.grid, rho=getattr(args, "rho", blowup.DEFAULT_RHO),
                                samples=getattr(args, "samples", 10_000), seed=cfg.seed)


def cmd_desingularize(args):
    cfg = RunConfig(action=args.action, radius=args.radius, grid=args.grid,
                    max_stages=args.max_stages, seed=args.seed)
    action = _load(cfg.action)
    res = _desing(action, cfg, args)
    out = res.to_dict()
    _emit(args.out, serialize.dumps(out))
    _summary(f"stages={res.stage_count} final_regular={str(out['final_regular']).lower()} "
             f"orbit_dim={out['orbit_dim']}")


def _stage_manifold(action, stage, cfg, args):
    if stage == 0:
        return None
    res = blowup.desingularize(action, max_stages=cfg.max_stages, radius=cfg.radius,
                               grid=cfg.grid, samples=1000, seed=cfg.seed)
    if res.stage_count < stage:
        raise UnsupportedStage("requested stage exceeds the desingularization length",
                               stage=stage, stages=res.stage_count)
    if stage != 1:
        raise UnsupportedStage("metric checks are implemented for stage 0 and 1", stage=stage)
    return res.stages[0][1]


def exceptional_samples(manifold, count, radius, rng):
    """Random points of E as ``(chart, (s, u))`` spread over the leaf charts."""
    k = manifold.stages[0].centers[0].dim
    leaves = [c for c in manifold.leaf_charts if c.kind == "projective"]
    out = []
    for i in range(count):
        chart = leaves[i % len(leaves)]
        z = rng.uniform(-1.0, 1.0, manifold.n - 1)
        z[:k] *= radius
        out.append((chart.id, z))
    return out


def cmd_metric_check(args):
    cfg = RunConfig(action=args.action, radius=args.radius, grid=args.grid,
                    metric_tol=args.tol, seed=args.seed)
    action = _load(cfg.action)
    n = action.ambient_dim
    manifold = _stage_manifold(action, args.stage, cfg, args)
    base = metrics.euclidean_field(n)
    rng = np.random.default_rng(cfg.seed)
    if args.kind == "nerve":
        upstairs = None
        if manifold is not None:
            nm = nerve.NerveMetrics(action, base, manifold=manifold)
            upstairs = metrics.base_blowup_metric(action, manifold, args.rho, nm.base_field())
        rep = nerve.nerve_metric_check(action, base, k=args.level, manifold=manifold,
                                       upstairs_field=upstairs, n_samples=args.samples,
                                       seed=cfg.seed, tol=cfg.metric_tol)
    else:
        if manifold is None:
            raise UnsupportedStage("submersion and isometry checks need --stage 1")
        up = metrics.base_blowup_metric(action, manifold, args.rho, base)
        if args.kind == "submersion":
            src, tgt = metrics.exceptional_fields(up, base, manifold)
            pts = exceptional_samples(manifold, args.samples, cfg.radius, rng)
            rep = metrics.check_riemannian_submersion(metrics.exceptional_projection(manifold),
                                                      src, tgt, pts, cfg.metric_tol)
        else:
            pts = [(cid, p) for cid, block in blowup.sample_atlas(manifold, args.samples,
                                                                   cfg.radius, cfg.seed)
                   for p in block]
            rep = metrics.check_isometry_outside(manifold, up, base, args.rho, pts, cfg.metric_tol)
    rep = {"kind": args.kind, "samples": rep["samples"], "max_defect": rep["max_defect"],
           "failures": rep["failures"], "passed": rep["passed"],
           **{k: v for k, v in rep.items() if k in ("faces", "bit_equal", "group_metric")}}
    _emit(args.out, serialize.dumps(rep))
    _summary(f"{args.kind}: {'pass' if rep['passed'] else 'fail'} "
             f"max_defect={serialize.fmt_float(rep['max_defect'])} samples={rep['samples']}")
    return 0 if rep["passed"] else 2


def cmd_quotient(args):
    cfg = RunConfig(action=args.action, radius=args.radius, grid=args.grid, seed=args.seed)
    action = _load(cfg.action)
    n = action.ambient_dim
    base = metrics.euclidean_field(n)
    reps = quotient.sample_representatives(action, args.samples, cfg.radius, cfg.seed)
    if args.stage:
        manifold = _stage_manifold(action, args.stage, cfg, args)
        up = metrics.base_blowup_metric(action, manifold, args.rho, base)
        space = quotient.sample_orbit_space(action, up, radius=cfg.radius, k=args.k,
                                            manifold=manifold, reps=reps)
    else:
        space = quotient.sample_orbit_space(action, base, radius=cfg.radius, k=args.k, reps=reps)
    _emit(args.out, serialize.matrix_to_csv(space.labels, space.distances))
    _summary(f"orbits={len(space)} diameter={serialize.fmt_float(space.diameter)}")


def cmd_gh(args):
    try:
        a = serialize.read_space_csv(args.a)
        b = serialize.read_space_csv(args.b)
    except (OSError, ValueError) as exc:
        raise ValidationError([{"code": "BadCSV", "entry": f"{args.a},{args.b}",
                                "detail": str(exc)}]) from None
    lo, hi = quotient.gh_distance(a, b, args.mode)
    rep = {"mode": args.mode, "interval": [lo, hi], "sizes": [len(a), len(b)]}
    _emit(args.out, serialize.dumps(rep))
    _summary(f"gh in [{serialize.fmt_float(lo)}, {serialize.fmt_float(hi)}]")


def cmd_compare(args):
    cfg = RunConfig(action=args.action, radius=args.radius, grid=args.grid,
                    max_stages=args.max_stages, seed=args.seed)
    action = _load(cfg.action)
    try:
        eps = [float(e) for e in args.eps.split(",") if e.strip()]
    except ValueError:
        raise ValidationError([{"code": "BadArguments", "entry": "--eps",
                                "detail": args.eps}]) from None
    if not eps or any(e <= 0 for e in eps):
        raise ValidationError([{"code": "BadArguments", "entry": "--eps", "detail": "need positive values"}])
    res = blowup.desingularize(action, max_stages=cfg.max_stages, radius=cfg.radius,
                               grid=cfg.grid, samples=1000, seed=cfg.seed)
    rep = quotient.compare_quotients(action, res, eps, n_samples=args.samples,
                                     radius=cfg.radius, seed=cfg.seed, k=args.k)
    _emit(args.out, serialize.dumps(rep))
    _summary("compare: " + " ".join(f"eps={r['eps']:g}:{'pass' if r['passed'] else 'fail'}"
                                    for r in rep["rows"])
             + f" monotone={str(rep['monotone']).lower()}")
    return 0 if rep["passed"] else 2


def cmd_plot(args):
    path = args.input
    if path.endswith(".csv"):
        try:
            obj = serialize.read_space_csv(path)
        except (OSError, ValueError) as exc:
            raise ValidationError([{"code": "BadCSV", "entry": path, "detail": str(exc)}]) from None
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
            obj = json.loads(text) if text.strip() else {}
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError([{"code": "BadJSON", "entry": path, "detail": str(exc)}]) from None
    svg = plot.render(obj)
    _emit(args.out, svg)
    _summary(f"plot: {plot.detect_kind(obj)} -> {args.out}")


# ------------------------------------------------------------------ parser

def build_parser():
    p = _Parser(prog="desing", description="Desingularize compact linear group actions.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, grid=11):
        sp.add_argument("--action", required=True, help="action JSON path or preset name")
        sp.add_argument("--radius", type=float, default=1.0)
        sp.add_argument("--grid", type=int, default=grid)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("validate")
    sp.add_argument("--action", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("stratify")
    common(sp, grid=21)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_stratify)

    sp = sub.add_parser("desingularize")
    common(sp)
    sp.add_argument("--max-stages", type=int, default=blowup.DEFAULT_MAX_STAGES)
    sp.add_argument("--rho", type=float, default=blowup.DEFAULT_RHO)
    sp.add_argument("--samples", type=int, default=10_000)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_desingularize)

    sp = sub.add_parser("metric-check")
    common(sp)
    sp.add_argument("--kind", choices=("submersion", "isometry", "nerve"), required=True)
    sp.add_argument("--stage", type=int, default=1)
    sp.add_argument("--level", type=int, default=2, help="nerve level k <= 2")
    sp.add_argument("--rho", type=float, default=blowup.DEFAULT_RHO)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_metric_check)

    sp = sub.add_parser("quotient")
    common(sp)
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--k", type=int, default=quotient.DEFAULT_K)
    sp.add_argument("--stage", type=int, default=0)
    sp.add_argument("--rho", type=float, default=0.05)
    sp.add_argument("--max-stages", type=int, default=blowup.DEFAULT_MAX_STAGES)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_quotient)

    sp = sub.add_parser("gh")
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--mode", choices=("exact", "bounds"), default="bounds")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gh)

    sp = sub.add_parser("compare")
    common(sp)
    sp.add_argument("--eps", default="0.2,0.1,0.05")
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--k", type=int, default=quotient.DEFAULT_K)
    sp.add_argument("--max-stages", type=int, default=blowup.DEFAULT_MAX_STAGES)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("plot")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_plot)
    return p


def _fail(err):
    sys.stderr.write(json.dumps({"error": err.to_dict()}, default=str, sort_keys=True) + "\n")
    return err.exit_code


def run_command(argv=None):
    """Run one subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if not getattr(args, "func", None):
            raise ValidationError([{"code": "BadArguments", "entry": "desing",
                                    "detail": "a subcommand is required"}])
        if hasattr(args, "max_stages") and args.max_stages < 0:
            raise ValidationError([{"code": "BadArguments", "entry": "--max-stages",
                                    "detail": "must be non-negative"}])
        code = args.func(args)
        return int(code or 0)
    except DesingError as err:
        return _fail(err)
    except np.linalg.LinAlgError as exc:
        return _fail(DesingError(f"linear algebra failure: {exc}"))


def main(argv=None):
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
