"""geomlab command line.

Exit codes: 0 all checks pass, 1 a check fails, 2 usage or parse error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
import time

import numpy as np

from . import expr as ex
from .ballvol import BlowupSampleError, ball_volume_mc
from .family import CHRISTOFFEL_TOL, CURVATURE_TOL, DET_TOL, build_kh, det_identity_rhs, kh_report
from .geodesic import GeodesicError, GeodesicState, integrate
from .metricfield import (
    CPoint,
    CTangent,
    MetricField,
    NumericalError,
    SingularMetricError,
    euclidean_field,
    random_points,
)
from .report import Report, _num, dumps
from .warren import (
    WarrenClosedForm,
    WarrenGeodesicParams,
    classify_direction,
    geodesic_closed_form,
    q_of_t,
    warren_field,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (ex.EvalError, SingularMetricError, NumericalError, GeodesicError, BlowupSampleError, ArithmeticError)

BUILTIN_METRICS = ("warren", "warren-closed", "euclidean")


class UsageError(Exception):
    pass


def parse_quad(text: str) -> tuple[float, float, float, float]:
    """"x,y,u,v" or a complex pair "a+bi,c+di"."""
    parts = [s.strip() for s in text.split(",")]
    try:
        if len(parts) == 4:
            vals = tuple(float(s) for s in parts)
        elif len(parts) == 2:
            a, b = (complex(s.replace("i", "j").replace(" ", "")) for s in parts)
            vals = (a.real, a.imag, b.real, b.imag)
        else:
            raise ValueError
    except ValueError:
        raise UsageError(f"expected 'x,y,u,v' or 'a+bi,c+di', got {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise UsageError(f"non-finite coordinate in {text!r}")
    return vals


def _field(args, allow_closed: bool = True):
    if args.potential is not None:
        return MetricField.from_potential(ex.parse(args.potential), name=args.potential)
    name = args.metric or "warren"
    if name == "warren":
        return warren_field()
    if name == "euclidean":
        return euclidean_field()
    if name == "warren-closed":
        if not allow_closed:
            raise UsageError("warren-closed has no curvature jet; use --metric warren")
        return WarrenClosedForm()
    raise UsageError(f"unknown metric {name!r}")


def _field_params(args) -> dict:
    if args.potential is not None:
        return {"potential": args.potential}
    return {"metric": args.metric or "warren"}


# ---------------------------------------------------------------------------


def cmd_verify(args) -> Report:
    field = _field(args, allow_closed=False)
    rep = Report(
        "verify",
        {
            **_field_params(args),
            "samples": args.samples,
            "seed": args.seed,
            "box": args.box,
            "tol_curvature": args.tol_curvature,
            "tol_det": args.tol_det,
            "tol_kahler": args.tol_kahler,
            "det_check": not args.no_det_check,
        },
    )
    pts = random_points(np.random.default_rng(args.seed), args.samples, args.box)
    dets, curv, kahler, non_pd = [], 0.0, 0.0, 0
    for p in pts:
        m = field.metric(p)
        dets.append(float(m.det))
        if not m.positive_definite:
            non_pd += 1
            continue
        curv = max(curv, field.curvature(p).max_abs)
        kahler = max(kahler, field.kahler_residual(p))
    dets = np.array(dets)
    det_dev = float(np.max(np.abs(dets - 1)))
    rep.results.update(
        det_min=float(dets.min()),
        det_max=float(dets.max()),
        max_curvature=curv,
        max_kahler_residual=kahler,
        non_positive_definite=non_pd,
    )
    rep.check("positive_definite", non_pd, 0, non_pd == 0)
    rep.check("flat", curv, args.tol_curvature, curv <= args.tol_curvature)
    rep.check("kahler", kahler, args.tol_kahler, kahler <= args.tol_kahler)
    rep.check("unit_determinant", det_dev, args.tol_det, None if args.no_det_check else det_dev <= args.tol_det)
    return rep


def cmd_geodesic(args) -> tuple[Report, str | None]:
    field = _field(args)
    p0 = CPoint(*parse_quad(args.start))
    v0 = CTangent(*parse_quad(args.vel))
    rep = Report(
        "geodesic",
        {
            **_field_params(args),
            "from": list(p0.as_array()),
            "vel": list(v0.as_array()),
            "t_end": args.t_end,
            "rtol": args.rtol,
            "atol": args.atol,
            "stride": args.stride,
        },
    )
    trace = integrate(field, GeodesicState(0.0, p0, v0), args.t_end, rtol=args.rtol, atol=args.atol, stride=args.stride)
    term = trace.termination
    rep.results.update(termination=term.kind, t_final=term.t, steps=len(trace.times) - 1, rejected=trace.n_rejected)

    is_warren = getattr(field, "name", "") in ("warren", "warren-closed")
    cls = classify_direction(v0.U, v0.V)
    expect_blowup = cls.kind == "blowup" and cls.t0 < args.t_end
    if is_warren:
        rep.results["direction_class"] = cls.kind
        rep.results["t0"] = cls.t0
    if expect_blowup:
        rep.check("blowup_time", abs(term.t - cls.t0), 0.01, term.kind == "blowup_detected" and abs(term.t - cls.t0) <= 0.01)
    else:
        rep.check("reached_t_end", term.t, args.t_end, term.kind == "reached_t_end")
        drift = trace.speed_drift
        rep.check("speed_drift", drift, 1e-8, drift <= 1e-8)

    closed_cols = None
    if is_warren:
        prm = WarrenGeodesicParams.from_state(p0, v0)
        C = prm.Z + prm.z0 * prm.W
        rep.results["first_integral"] = C
        closed_cols = []
        dev = 0.0
        for t, y in zip(trace.times, trace.states):
            if q_of_t(prm.W, t) > 0:
                cf = geodesic_closed_form(prm, t).as_array()
                d = float(np.max(np.abs(cf - y[:4])))
            else:
                cf, d = np.full(4, np.nan), np.nan
            closed_cols.append((cf, d))
            if not expect_blowup:
                dev = max(dev, d)
        if not expect_blowup:
            fi = float(np.max(np.abs(trace.first_integral - C)))
            rep.check("closed_form_deviation", dev, 1e-6, dev <= 1e-6)
            rep.check("first_integral_drift", fi, 1e-7, fi <= 1e-7)

    table = None
    if args.format == "csv":
        buf = io.StringIO()
        cols = ["t", "x", "y", "u", "v", "xdot", "ydot", "udot", "vdot", "speed"]
        if closed_cols is not None:
            cols += ["cf_x", "cf_y", "cf_u", "cf_v", "cf_dev"]
        buf.write(",".join(cols) + "\n")
        for k in np.flatnonzero(trace.on_grid):
            row = [trace.times[k], *trace.states[k], trace.speed[k]]
            if closed_cols is not None:
                cf, d = closed_cols[k]
                row += [*cf, d]
            buf.write(",".join("" if not math.isfinite(x) else _num(float(x)) for x in row) + "\n")
        table = buf.getvalue()
    else:
        rep.results["samples"] = [
            {"t": trace.times[k], "state": list(trace.states[k]), "speed": trace.speed[k]}
            for k in np.flatnonzero(trace.on_grid)
        ]
    return rep, table


def cmd_volume(args) -> Report:
    field = _field(args)
    base = CPoint(*parse_quad(args.center))
    rep = Report(
        "volume",
        {
            **_field_params(args),
            "center": list(base.as_array()),
            "radius": args.radius,
            "samples": args.samples,
            "seed": args.seed,
            "skip_blowup": args.skip_blowup,
        },
    )
    est = ball_volume_mc(field, base, args.radius, args.samples, args.seed, skip_blowup=args.skip_blowup)
    rep.results.update(
        estimate=est.estimate,
        stderr=est.stderr,
        euclidean=est.euclidean,
        n_inside=est.n_inside,
        n_skipped=est.n_skipped,
    )
    gap = abs(est.estimate - est.euclidean)
    rep.check("euclidean_volume", gap, 3 * est.stderr, gap <= 3 * est.stderr)
    return rep


def cmd_family(args) -> Report:
    field = build_kh(args.h)
    rep = Report("family", {"h": args.h, "samples": args.samples, "seed": args.seed, "box": args.box})
    pts = random_points(np.random.default_rng(args.seed), args.samples, args.box)
    r = kh_report(field, pts)
    ident = 0.0
    for p in pts:
        det = float(field.metric(p).det)
        ident = max(ident, abs((det - 1) - det_identity_rhs(field.h, p)) / max(1.0, abs(det)))
    rep.results.update(
        harmonic=r.harmonic,
        max_abs_laplacian=r.max_abs_laplacian,
        max_det_deviation=r.max_det_deviation,
        max_curvature=r.max_curvature,
        max_christoffel_deviation=r.max_christoffel_deviation,
        max_kahler_residual=r.max_kahler_residual,
        max_det_identity_error=ident,
    )
    rep.check("det_identity", ident, 1e-9, ident <= 1e-9)
    applies = r.harmonic
    rep.check("unit_determinant", r.max_det_deviation, DET_TOL, (r.max_det_deviation <= DET_TOL) if applies else None)
    rep.check("flat", r.max_curvature, CURVATURE_TOL, (r.max_curvature <= CURVATURE_TOL) if applies else None)
    rep.check(
        "christoffel_closed_form",
        r.max_christoffel_deviation,
        CHRISTOFFEL_TOL,
        (r.max_christoffel_deviation <= CHRISTOFFEL_TOL) if applies else None,
    )
    return rep


# ---------------------------------------------------------------------------


def _add_field_args(p: argparse.ArgumentParser, closed: bool = True) -> None:
    g = p.add_mutually_exclusive_group()
    choices = BUILTIN_METRICS if closed else ("warren", "euclidean")
    g.add_argument("--metric", choices=choices, help="built-in metric (default warren)")
    g.add_argument("--potential", help="Kähler potential expression, e.g. '|z|^2+|w|^2'")


def _add_output_args(p: argparse.ArgumentParser, default_format: str = "json") -> None:
    p.add_argument("--format", choices=("json", "csv"), default=default_format)
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geomlab", description="Kähler metric verification engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="check unimodularity, Kähler symmetry and flatness at random points")
    _add_field_args(p, closed=False)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--box", type=float, default=3.0)
    p.add_argument("--tol-curvature", type=float, default=1e-8)
    p.add_argument("--tol-det", type=float, default=1e-12)
    p.add_argument("--tol-kahler", type=float, default=1e-11)
    p.add_argument("--no-det-check", action="store_true", help="report det(g) without requiring det = 1")
    _add_output_args(p)

    p = sub.add_parser("geodesic", help="integrate one geodesic")
    _add_field_args(p)
    p.add_argument("--from", dest="start", default="0,0,0,0", help="start point x,y,u,v")
    p.add_argument("--vel", required=True, help="initial velocity X,Y,U,V")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--rtol", type=float, default=1e-9)
    p.add_argument("--atol", type=float, default=1e-12)
    p.add_argument("--stride", type=float, default=1e-2)
    _add_output_args(p, default_format="csv")

    p = sub.add_parser("volume", help="Monte Carlo geodesic-ball volume")
    _add_field_args(p)
    p.add_argument("--center", default="0,0,0,0")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-blowup", action="store_true", help="count and skip blow-up directions instead of aborting")
    _add_output_args(p)

    p = sub.add_parser("family", help="check the K_h family for a generator h(w)")
    p.add_argument("--h", required=True, help="real generator in w, e.g. 'Re(w)'")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--box", type=float, default=1.0)
    _add_output_args(p)
    return parser


COMMANDS = {"verify": cmd_verify, "geodesic": cmd_geodesic, "volume": cmd_volume, "family": cmd_family}


def _write(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t_start = time.perf_counter()
    table = None
    try:
        out = COMMANDS[args.command](args)
        rep, table = out if isinstance(out, tuple) else (out, None)
    except (ex.ParseError, UsageError, ValueError) as exc:
        print(f"geomlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"geomlab: numeric failure: {exc}", file=sys.stderr)
        rep = Report(args.command, {"argv": list(argv if argv is not None else sys.argv[1:])}, error=str(exc))
        _write(args, rep.to_json() + "\n")
        return EXIT_NUMERIC

    elapsed = time.perf_counter() - t_start
    print(f"geomlab: {args.command} finished in {elapsed:.2f}s", file=sys.stderr)
    if args.timing:
        rep.wall_time = elapsed

    if table is not None:
        text = table + "# report: " + rep.to_json() + "\n"
    elif args.format == "csv":
        text = rep.checks_csv()
    else:
        text = rep.to_json() + "\n"
    _write(args, text)
    return EXIT_OK if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
