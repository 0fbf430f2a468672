"""Command-line front end (``nibm``).

Every output file gets a ``<file>.meta.json`` sidecar with the tool version,
a hash of the effective configuration, the seed and the precision policy.

Exit codes::

    0  success
    2  usage error (bad flags)
    3  configuration error (malformed or inconsistent config/spec)
    4  I/O error
    5  numerical failure (convergence, precision, range)
    6  internal consistency check failed
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConsistencyError, NibmError

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_CONSISTENCY = 0, 2, 3, 4, 5, 6
SUBCOMMANDS = ("density", "critical", "kernel", "limit-kernel", "converge", "fredholm", "tw2",
               "simulate", "gap", "xi")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    try:
        cp.read_string(p.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {p}: {exc}") from exc
    if not cp.has_section("measure"):
        raise ConfigError("config needs a [measure] section")
    return cp


def dump_config(cp: configparser.ConfigParser) -> str:
    """Canonical text form: sections and keys sorted."""
    out = configparser.ConfigParser()
    for sec in sorted(cp.sections()):
        out.add_section(sec)
        for k in sorted(cp[sec]):
            out[sec][k] = cp[sec][k].strip()
    buf = io.StringIO()
    out.write(buf)
    return buf.getvalue()


def config_hash(text: str, extra: dict | None = None) -> str:
    h = hashlib.sha256(text.encode())
    if extra:
        h.update(json.dumps(extra, sort_keys=True, default=str).encode())
    return h.hexdigest()[:16]


def build_measure(cp: configparser.ConfigParser):
    """``DensitySpec`` (kind = power | uniform | table) or ``EmpiricalMeasure`` (kind = atoms)."""
    from .measures import DensitySpec, EmpiricalMeasure

    sec = cp["measure"]
    kind = sec.get("kind", "power").strip()
    try:
        if kind == "power":
            xs = sec.get("x_star")
            return DensitySpec.power(sec.getfloat("kappa", 4.0), sec.getfloat("a", -1.0),
                                     sec.getfloat("b", 1.0), None if xs is None else float(xs))
        if kind == "uniform":
            return DensitySpec.uniform(sec.getfloat("a", 0.0), sec.getfloat("b", 1.0))
        if kind == "table":
            rows = np.loadtxt(sec["file"], delimiter=",", skiprows=1)
            xs = sec.get("x_star")
            kap = sec.get("kappa")
            return DensitySpec.from_table(rows[:, 0], rows[:, 1], None if xs is None else float(xs),
                                          None if kap is None else float(kap))
        if kind == "atoms":
            return EmpiricalMeasure.from_csv(sec["file"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad [measure] section: {exc}") from exc
    raise ConfigError(f"unknown measure kind {kind!r}")


def initial_configuration(cp, spec, n: int):
    from .measures import DisplacementRule, EmpiricalMeasure, quantile_init

    if isinstance(spec, EmpiricalMeasure):
        if spec.n != n:
            raise ConfigError(f"atom file has {spec.n} atoms but --n {n}")
        return spec
    sec = cp["init"] if cp.has_section("init") else {}
    placement = sec.get("placement", "right")
    rule = DisplacementRule(float(sec.get("m", 0.5)), float(sec.get("shift", 0.6)))
    return quantile_init(spec, n, rule=rule, placement=placement)


def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:num`` or a comma list."""
    try:
        if ":" in text:
            lo, hi, num = text.split(":")
            g = np.linspace(float(lo), float(hi), int(num))
        else:
            g = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}") from exc
    if g.size == 0:
        raise ConfigError("empty grid")
    return g


def parse_pair(text: str) -> tuple[float, float]:
    vals = [float(v) for v in text.split(",")]
    if len(vals) == 1:
        return vals[0], vals[0]
    if len(vals) != 2:
        raise ConfigError(f"expected tau1,tau2 got {text!r}")
    return vals[0], vals[1]


def parse_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


@dataclass
class ExperimentSpec:
    subcommand: str
    measure: str | None = None
    regime: str | None = None
    ns: list = field(default_factory=list)
    taus: list = field(default_factory=list)
    grid: list = field(default_factory=list)
    seed: int | None = None
    out: str | None = None
    precision: str = "auto"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_jsonable)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        try:
            d = json.loads(text)
            return cls(**d).validate()
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"bad experiment spec: {exc}") from exc

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.measure is not None and not Path(self.measure).exists():
            raise ConfigError(f"measure config {self.measure} does not exist")
        if self.subcommand == "converge" and any(b <= a for a, b in zip(self.ns, self.ns[1:])):
            raise ConfigError("n list must be strictly increasing")
        if self.subcommand in ("kernel", "limit-kernel", "converge") and len(self.grid) == 0:
            raise ConfigError("grid must be non-empty")
        return self


# ---------------------------------------------------------------------------
# output helpers


class Writer:
    def __init__(self, args, cfg_text: str = ""):
        self.args = args
        self.meta = dict(tool="nibmlab", version=__version__,
                         config_hash=config_hash(cfg_text, {k: v for k, v in vars(args).items()
                                                             if k not in ("func", "out", "workers")}),
                         seed=getattr(args, "seed", None),
                         precision=getattr(args, "precision", None),
                         subcommand=args.cmd)

    def sidecar(self, path: Path, extra: dict | None = None):
        meta = dict(self.meta)
        if extra:
            meta.update(extra)
        Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True,
                                                             default=_jsonable))

    def csv(self, path, header, rows, extra=None):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                            for v in r])
        self.sidecar(path, extra)

    def json(self, path, obj, extra=None):
        text = json.dumps(obj, indent=1, sort_keys=True, default=_jsonable)
        if path is None:
            print(text)
            return
        path = Path(path)
        path.write_text(text + "\n")
        self.sidecar(path, extra)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(type(o))


def _require_out(args):
    if not args.out:
        raise ConfigError("--out is required")
    return Path(args.out)


def _load_measure(args):
    if not args.measure:
        raise ConfigError("--measure is required")
    cp = load_config(args.measure)
    return cp, build_measure(cp)


def _frame(spec, args):
    from .free_conv import AIRY_LEFT, AIRY_RIGHT, PEARCEY, classify

    frame = classify(spec)
    if args.regime:
        want = {"airy": (AIRY_RIGHT, AIRY_LEFT), "airyright": (AIRY_RIGHT,),
                "airyleft": (AIRY_LEFT,), "pearcey": (PEARCEY,)}.get(args.regime.lower())
        if want is None:
            raise ConfigError(f"unknown regime {args.regime!r}")
        if frame.regime not in want:
            raise ConfigError(f"--regime {args.regime} inconsistent with the measure "
                              f"({frame.regime})")
    return frame


# ---------------------------------------------------------------------------
# subcommands


def cmd_density(args):
    from .free_conv import BianeState

    cp, spec = _load_measure(args)
    out = _require_out(args)
    xs = parse_grid(args.grid) if args.grid else None
    st = BianeState.build(spec, args.t, n_grid=args.n_grid)
    dens = st.ys / (math.pi * args.t)
    if xs is None:
        xs = st.phis
        rows = list(zip(xs, dens))
    else:
        rows = [(x, st.density(x) if st.phis[0] <= x <= st.phis[-1] else 0.0) for x in xs]
    mass = st.mass()
    if abs(mass - 1.0) > 1e-2:
        raise ConsistencyError(f"density mass {mass:.6f} differs from 1")
    Writer(args, dump_config(cp)).csv(out, ["x", "psi_t"], rows, dict(t=args.t, mass=mass))


def cmd_critical(args):
    from .free_conv import classify

    cp, spec = _load_measure(args)
    frame = classify(spec)
    Writer(args, dump_config(cp)).json(args.out, frame.to_dict())


def cmd_kernel(args):
    from .kernels_finite import rescaled_kernel_grid

    cp, spec = _load_measure(args)
    out = _require_out(args)
    frame = _frame(spec, args)
    n = args.n[0]
    mn = initial_configuration(cp, spec, n)
    t1, t2 = parse_pair(args.tau[0] if args.tau else "0")
    us = parse_grid(args.grid)
    vs = parse_grid(args.vgrid) if args.vgrid else us
    diag = {}
    K = rescaled_kernel_grid(mn, frame, n, t1, t2, us, vs, args.precision, diag=diag)
    rows = [(u, v, K[i, j]) for i, u in enumerate(us) for j, v in enumerate(vs)]
    Writer(args, dump_config(cp)).csv(out, ["u", "v", "value"], rows,
                                      dict(frame=frame.to_dict(), n=n, tau1=t1, tau2=t2, **diag))


def cmd_limit_kernel(args):
    from .kernels_limit import airy_kernel, pearcey_kernel

    out = _require_out(args)
    reg = (args.regime or "airy").lower()
    fn = pearcey_kernel if reg.startswith("pearcey") else airy_kernel
    t1, t2 = parse_pair(args.tau[0] if args.tau else "0")
    us = parse_grid(args.grid)
    vs = parse_grid(args.vgrid) if args.vgrid else us
    rows = [(u, v, fn(t1, t2, u, v, check=True)) for u in us for v in vs]
    Writer(args).csv(out, ["u", "v", "value"], rows, dict(regime=reg, tau1=t1, tau2=t2))


def run_converge(spec, frame, ns, tau_pairs, us, policy="auto", init=None):
    """Max-abs error between the rescaled finite-n and the limit kernel, per n."""
    from .kernels_finite import rescaled_kernel_grid
    from .kernels_limit import limit_kernel

    rows = []
    limits = {tp: np.array([[limit_kernel(frame.regime, *tp, u, v) for v in us] for u in us])
              for tp in tau_pairs}
    for n in ns:
        mn = init(n)
        err = 0.0
        for tp in tau_pairs:
            try:
                K = rescaled_kernel_grid(mn, frame, n, *tp, us, us, policy)
            except NibmError as exc:
                raise type(exc)(f"n={n}, tau={tp}: {exc}") from exc
            err = max(err, float(np.max(np.abs(K - limits[tp]))))
        rows.append((n, err))
    errs = [e for _, e in rows]
    if len(rows) < 2:
        verdict = dict(decreasing=None, fitted_rate=None)
    else:
        slope = np.polyfit(np.log([n for n, _ in rows]), np.log(errs), 1)[0]
        verdict = dict(decreasing=bool(all(b < a for a, b in zip(errs, errs[1:]))),
                       fitted_rate=float(-slope))
    return rows, verdict


def cmd_converge(args):
    cp, spec = _load_measure(args)
    out = _require_out(args)
    frame = _frame(spec, args)
    ns = args.n
    es = ExperimentSpec("converge", args.measure, args.regime, ns, args.tau or ["0"],
                        [float(g) for g in parse_grid(args.grid)], out=str(out),
                        precision=args.precision)
    es.validate()
    taus = [parse_pair(t) for t in es.taus]
    rows, verdict = run_converge(spec, frame, ns, taus, np.array(es.grid), args.precision,
                                 init=lambda n: initial_configuration(cp, spec, n))
    w = Writer(args, dump_config(cp))
    w.csv(out, ["n", "max_abs_error"], rows, dict(verdict=verdict, taus=taus))
    w.json(Path(str(out) + ".verdict.json"), verdict)


def cmd_fredholm(args):
    from .fredholm import FredholmProblem, fredholm_report

    if not args.problem:
        raise ConfigError("--problem is required")
    try:
        spec = json.loads(Path(args.problem).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed problem JSON: {exc}") from exc
    try:
        b = spec.get("b")
        p = FredholmProblem(tuple(spec["taus"]), tuple(spec["a"]),
                            None if b is None else tuple(math.inf if v is None else v for v in b),
                            spec.get("source", "airy"), int(spec.get("q", 64)))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad Fredholm problem: {exc}") from exc
    rep = fredholm_report(p)
    if not -1e-10 <= rep.value <= 1 + 1e-10:
        raise ConsistencyError(f"determinant {rep.value} outside [0, 1]")
    Writer(args).json(args.out, rep.to_dict())


def cmd_tw2(args):
    from .fredholm import tw2_cdf

    out = _require_out(args)
    grid = parse_grid(args.grid or "-5:2:71")
    vals = [tw2_cdf(a, q=args.q) for a in grid]
    if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
        raise ConsistencyError("TW2 table is not monotone")
    Writer(args).csv(out, ["a", "F2"], zip(grid, vals), dict(q=args.q))


def cmd_simulate(args):
    from .free_conv import frame_maps
    from .sim import euler_sde, sample_matrix

    cp, spec = _load_measure(args)
    out = _require_out(args)
    n = args.n[0]
    mn = initial_configuration(cp, spec, n)
    if args.times:
        times = [float(v) for v in args.times.split(",")]
    else:
        frame = _frame(spec, args)
        times = [frame_maps(frame, n, float(t))[0] for t in (args.tau or ["0"])[0].split(",")]
    seed = 0 if args.seed is None else args.seed
    if args.sampler == "euler":
        ens = euler_sde(mn, times, args.dt, args.replicas, seed)
    else:
        ens = sample_matrix(mn, times, args.replicas, seed, workers=args.workers)
    npy = ens.save(out)
    Writer(args, dump_config(cp)).sidecar(npy, dict(n=n, times=list(map(float, times)),
                                                    replicas=args.replicas, sampler=ens.sampler))


def _ensemble_args(args):
    from .sim import PathEnsemble

    if not args.ensemble:
        raise ConfigError("--ensemble is required")
    cp, spec = _load_measure(args)
    frame = _frame(spec, args)
    ens = PathEnsemble.load(args.ensemble)
    return cp, frame, ens


def cmd_gap(args):
    from .sim import meso_gap_frequency

    cp, frame, ens = _ensemble_args(args)
    taus = [float(t) for t in (args.tau or ["0"])[0].split(",")]
    est = meso_gap_frequency(ens, frame, ens.n, args.eps, args.eps_prime, taus)
    Writer(args, dump_config(cp)).json(args.out, dict(taus=taus, eps=args.eps,
                                                      eps_prime=args.eps_prime, **est.to_dict()))


def cmd_xi(args):
    from .fredholm import airy2_fdd, tw2_cdf
    from .sim import empirical_cdf, xi_statistic

    cp, frame, ens = _ensemble_args(args)
    taus = [float(t) for t in (args.tau or ["0"])[0].split(",")]
    samples = [xi_statistic(ens, frame, ens.n, args.eps, t) for t in taus]
    th = parse_grid(args.grid or "-3:1:5")
    S = np.column_stack([s.values for s in samples])
    res = []
    for a in th:
        est = empirical_cdf(S, [np.full(len(taus), a)])[0]
        ref = tw2_cdf(a) if len(taus) == 1 else airy2_fdd(taus, [a] * len(taus),
                                                          convention="contour")
        res.append(dict(a=float(a), empirical=est.to_dict(), limit=ref,
                        deviation=abs(est.value - ref)))
    Writer(args, dump_config(cp)).json(args.out, dict(
        taus=taus, eps=args.eps, flagged=[s.flagged for s in samples], cdf=res,
        max_deviation=max(r["deviation"] for r in res)))


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nibm", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"nibmlab {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, measure=True):
        if measure:
            p.add_argument("--measure", help="INI config with a [measure] section")
        p.add_argument("--out", help="output path")
        p.add_argument("--workers", type=int, default=1)
        return p

    p = common(sub.add_parser("density", help="evolved density psi_t on a grid"))
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--grid")
    p.add_argument("--n-grid", type=int)
    p.set_defaults(func=cmd_density)

    p = common(sub.add_parser("critical", help="critical point, time and frame constants"))
    p.set_defaults(func=cmd_critical)

    for name, fn, help_ in (("kernel", cmd_kernel, "rescaled finite-n kernel"),
                            ("converge", cmd_converge, "finite-n vs limit kernel sweep")):
        p = common(sub.add_parser(name, help=help_))
        p.add_argument("--n", type=parse_ints, required=True)
        p.add_argument("--tau", action="append", help="tau1,tau2 (repeatable for converge)")
        p.add_argument("--grid", required=True)
        p.add_argument("--vgrid")
        p.add_argument("--regime")
        p.add_argument("--precision", default="auto",
                       choices=["double", "compensated", "extended", "auto"])
        p.set_defaults(func=fn)

    p = common(sub.add_parser("limit-kernel", help="extended Airy or Pearcey kernel"), False)
    p.add_argument("--regime", default="airy")
    p.add_argument("--tau", action="append")
    p.add_argument("--grid", required=True)
    p.add_argument("--vgrid")
    p.set_defaults(func=cmd_limit_kernel)

    p = common(sub.add_parser("fredholm", help="Fredholm determinant from a JSON problem"),
               False)
    p.add_argument("--problem")
    p.set_defaults(func=cmd_fredholm)

    p = common(sub.add_parser("tw2", help="Tracy-Widom CDF table"), False)
    p.add_argument("--grid")
    p.add_argument("--q", type=int, default=64)
    p.set_defaults(func=cmd_tw2)

    p = common(sub.add_parser("simulate", help="sample an NIBM ensemble"))
    p.add_argument("--n", type=parse_ints, required=True)
    p.add_argument("--times")
    p.add_argument("--tau", action="append", help="comma list of frame times")
    p.add_argument("--regime")
    p.add_argument("--replicas", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", choices=["matrix", "euler"], default="matrix")
    p.add_argument("--dt", type=float, default=1e-5)
    p.set_defaults(func=cmd_simulate)

    for name, fn in (("gap", cmd_gap), ("xi", cmd_xi)):
        p = common(sub.add_parser(name, help=f"{name} statistics of an ensemble dump"))
        p.add_argument("--ensemble", required=True)
        p.add_argument("--tau", action="append")
        p.add_argument("--regime")
        p.add_argument("--eps", type=float, default=0.05)
        if name == "gap":
            p.add_argument("--eps-prime", type=float, default=0.02)
        else:
            p.add_argument("--grid")
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"nibm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"nibm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConsistencyError as exc:
        print(f"nibm: consistency check failed: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except NibmError as exc:
        print(f"nibm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
