"""Command-line front end: ``losscurv <subcommand> [options]``.

Every subcommand writes ``<out>/<subcommand>.csv`` and/or ``.json`` (per
``--format``) and prints a one-line summary.  Exit status is 0 on success,
1 on a runtime failure and 2 on a usage error.
"""

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import LossCurvError
from .estimators import probe_samples, sc_min_estimate
from .experiments import minibatch_analysis, ou_escape, perturbation_sweep, saddle_grid
from .fields import (make_flat_field, make_paraboloid_field, make_quadratic_field,
                     make_random_smooth_field, make_saddle_field)
from .geometry import (QuadratureSpec, christoffel_at, metric_at, ricci_at, riemann_at,
                       scalar_curvature_at, volume_deficit_coefficient)
from .io import write_csv, write_json
from .nn import (MlpSpec, TrainConfig, dataset_from_config, load_model, make_sine_dataset,
                 minibatch_hessians, mlp_loss_field, save_model, train)

SUBCOMMANDS = ("curvature", "christoffel", "riemann", "saddle-grid", "ball-volume",
               "perturb", "escape", "minibatch", "train", "estimate")
GLOBAL_DEFAULTS = {"seed": 0, "out": ".", "threads": 1, "format": "both"}


# --- argument types ------------------------------------------------------------

def float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def matrix_arg(text):
    rows = [float_list(r) for r in text.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise argparse.ArgumentTypeError("matrix rows must have equal length")
    return rows


def range_arg(text):
    """``start:stop:count`` -> list of ``count`` evenly spaced values."""
    parts = text.split(":")
    try:
        if len(parts) != 3:
            raise ValueError
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:count, got {text!r}")
    if count < 1:
        raise argparse.ArgumentTypeError("count must be >= 1")
    return {"start": start, "stop": stop, "count": count}


def seed_arg(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _linspace(r):
    return np.linspace(r["start"], r["stop"], r["count"])


# --- parser ----------------------------------------------------------------------

def _global_flags(parser):
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=seed_arg, default=argparse.SUPPRESS, help="RNG seed (default 0)")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default .)")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help="worker threads for probe loops; results do not depend on it")
    g.add_argument("--format", choices=("csv", "json", "both"), default=argparse.SUPPRESS)


def _field_flags(parser, default="quadratic"):
    g = parser.add_argument_group("field selection")
    g.add_argument("--field", default=default,
                   choices=("quadratic", "paraboloid", "saddle", "flat", "random", "model"))
    g.add_argument("--diag", type=float_list, help="quadratic: diagonal of the Hessian")
    g.add_argument("--matrix", type=matrix_arg, help="quadratic: full matrix 'a,b;c,d'")
    g.add_argument("--center", type=float_list, help="quadratic: minimiser")
    g.add_argument("--dim", type=int, default=2, help="paraboloid/flat/random dimension")
    g.add_argument("--c", type=float, default=0.1, help="saddle decay constant")
    g.add_argument("--field-seed", type=int, default=0, help="random field seed")
    g.add_argument("--model", help="trained-model JSON snapshot (for --field model)")
    g.add_argument("--at", type=float_list, help="evaluation point (default: the field's centre)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="losscurv",
        description="Riemannian curvature of loss-function graphs and related experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True

    def add(name, help_text, field=True, field_default="quadratic"):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _global_flags(p)
        if field:
            _field_flags(p, field_default)
        return p

    add("curvature", "scalar curvature report at a point")
    add("christoffel", "Christoffel symbols at a point")
    add("riemann", "Riemann and Ricci tensors at a point")

    p = add("saddle-grid", "value, Hessian trace and scalar curvature of the saddle field on a grid",
            field=False)
    p.add_argument("--c", type=float, default=0.1)
    p.add_argument("--u", type=range_arg, default=range_arg("0:6:121"))
    p.add_argument("--v", type=range_arg, default=range_arg("0:6.283185307179586:121"))

    p = add("ball-volume", "scalar curvature from geodesic-ball volume deficits",
            field_default="paraboloid")
    p.add_argument("--r", type=range_arg, default=range_arg("0.05:0.3:6"))
    p.add_argument("--directions", type=int, help="direction count (default 256 for q=2, 4096 else)")
    p.add_argument("--fit", choices=("quartic", "quadratic"), default="quartic")

    p = add("perturb", "squared loss change under weight perturbations")
    p.add_argument("--mode", choices=("unit-sphere", "gaussian"), default="unit-sphere")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--directions", type=int, default=1000)

    p = add("escape", "Ornstein-Uhlenbeck escape from a minimum")
    p.add_argument("--t", type=float, default=0.005)
    p.add_argument("--dt", type=float, help="time step (default t/10)")
    p.add_argument("--paths", type=int, default=100_000)

    p = add("minibatch", "trace linearity and curvature non-additivity over minibatches",
            field=False)
    p.add_argument("--batch-diags", type=float_list, nargs="+",
                   help="one diagonal Hessian per batch, e.g. 2,0 0,2")
    p.add_argument("--batch-matrices", type=matrix_arg, nargs="+",
                   help="one full Hessian per batch, e.g. '2,0;0,0'")
    p.add_argument("--model", help="trained-model snapshot; batches are index strides of its data")
    p.add_argument("--batches", type=int, default=7)

    p = add("train", "train a small MLP on a noisy sine dataset", field=False)
    p.add_argument("--widths", type=int_list, default=[1, 16, 8, 1])
    p.add_argument("--activation", choices=("tanh", "relu", "identity"), default="tanh")
    p.add_argument("--n", type=int, default=70)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--log-every", type=int, default=100)

    p = add("estimate", "Hutchinson estimates of tr(H), tr(H^2) and critical-point curvature")
    p.add_argument("--probes", type=int, default=1000)
    return parser


# --- helpers ---------------------------------------------------------------------

def _build_field(args):
    """Return (field, default point, extra config)."""
    kind = args.field
    if kind == "quadratic":
        if args.matrix is not None:
            a = np.array(args.matrix)
        elif args.diag is not None:
            a = np.diag(args.diag)
        else:
            a = np.eye(args.dim)
        center = np.zeros(a.shape[0]) if args.center is None else np.array(args.center)
        return make_quadratic_field(a, center), center, {}
    if kind == "paraboloid":
        return make_paraboloid_field(args.dim), np.zeros(args.dim), {}
    if kind == "flat":
        return make_flat_field(args.dim), np.zeros(args.dim), {}
    if kind == "saddle":
        return make_saddle_field(args.c), np.array([np.pi / 2, np.pi / 2]), {}
    if kind == "random":
        return make_random_smooth_field(args.dim, args.field_seed), np.zeros(args.dim), {}
    if not args.model:
        raise argparse.ArgumentTypeError("--field model requires --model PATH")
    spec, params, payload = load_model(args.model)
    data = dataset_from_config(payload["data"])
    return mlp_loss_field(spec, data), params, {"model_spec": payload["spec"],
                                                "model_data": payload["data"]}


def _point(args, field, default):
    if args.at is None:
        return np.asarray(default, dtype=float)
    x = np.array(args.at, dtype=float)
    if x.shape != (field.dim,):
        raise argparse.ArgumentTypeError(f"--at needs {field.dim} coordinates")
    return x


def _config(args, **extra):
    cfg = {k: v for k, v in vars(args).items() if k not in ("out", "threads")}
    cfg.update(extra)
    return cfg


class Writer:
    def __init__(self, args):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.fmt = args.format
        self.written = []

    def csv(self, name, columns, config):
        if self.fmt in ("csv", "both"):
            self.written.append(write_csv(self.out / f"{name}.csv", columns, config))

    def json(self, name, payload, force=False):
        if force or self.fmt in ("json", "both"):
            self.written.append(write_json(self.out / f"{name}.json", payload))


def _g(x):
    return "%.12g" % x


# --- subcommands -----------------------------------------------------------------

def cmd_curvature(args, w):
    field, x0, extra = _build_field(args)
    x = _point(args, field, x0)
    rep = scalar_curvature_at(field, x)
    cfg = _config(args, **extra)
    d = rep.as_dict()
    w.csv("curvature", {k: [v] for k, v in d.items() if k != "point"}
          | {f"x{i}": [v] for i, v in enumerate(d["point"])}, cfg)
    w.json("curvature", {"config": cfg, "report": d})
    tag = "critical point" if rep.at_critical_point else f"|grad f| = {_g(rep.grad_norm)}"
    return f"Sc = {_g(rep.scalar_curvature)} (tr H = {_g(rep.trace_h)}, {tag})"


def _index_columns(arr, names):
    idx = np.array(list(np.ndindex(arr.shape)))
    cols = {n: idx[:, i] for i, n in enumerate(names)}
    cols["value"] = arr.ravel()
    return cols


def cmd_christoffel(args, w):
    field, x0, extra = _build_field(args)
    x = _point(args, field, x0)
    gam = christoffel_at(field, x)
    cfg = _config(args, **extra)
    w.csv("christoffel", _index_columns(gam, ["i", "k", "l"]), cfg)
    w.json("christoffel", {"config": cfg, "point": x, "christoffel": gam,
                           "convention": "christoffel[i][k][l] = Gamma^i_{kl}"})
    return f"christoffel: q={field.dim}, max |Gamma| = {_g(np.max(np.abs(gam)))}"


def cmd_riemann(args, w):
    field, x0, extra = _build_field(args)
    x = _point(args, field, x0)
    riem = riemann_at(field, x)
    ric = ricci_at(field, x)
    sc = float(np.sum(metric_at(field, x).g_inv * ric))
    cfg = _config(args, **extra)
    w.csv("riemann", _index_columns(riem, ["i", "j", "k", "m"]), cfg)
    w.json("riemann", {"config": cfg, "point": x, "riemann": riem, "ricci": ric,
                       "scalar_curvature": sc,
                       "convention": "riemann[i][j][k][m] = R^i_{jkm}; ricci_jm = R^i_{jim}"})
    return f"riemann: q={field.dim}, Sc = g^jm Ric_jm = {_g(sc)}"


def cmd_saddle_grid(args, w):
    grid = saddle_grid(args.c, (args.u["start"], args.u["stop"]), (args.v["start"], args.v["stop"]),
                       (args.u["count"], args.v["count"]))
    cfg = _config(args)
    w.csv("saddle-grid", grid.columns(), cfg)
    w.json("saddle-grid", {"config": cfg, "rows": int(grid.u.size),
                           "trace_range": [float(grid.trace.min()), float(grid.trace.max())],
                           "sc_range": [float(grid.sc.min()), float(grid.sc.max())]})
    return (f"saddle-grid: {grid.u.size} nodes, sc in [{_g(grid.sc.min())}, {_g(grid.sc.max())}],"
            f" trace in [{_g(grid.trace.min())}, {_g(grid.trace.max())}]")


def cmd_ball_volume(args, w):
    field, x0, extra = _build_field(args)
    x = _point(args, field, x0)
    quad = QuadratureSpec(n_directions=args.directions, seed=args.seed)
    fit = volume_deficit_coefficient(field, x, _linspace(args.r), quad, fit=args.fit)
    exact = scalar_curvature_at(field, x).scalar_curvature
    cfg = _config(args, **extra)
    w.csv("ball-volume", {"r": fit.radii, "ratio": fit.ratios, "std_error": fit.std_errors}, cfg)
    payload = fit.as_dict() | {"Sc_estimate": fit.sc_estimate, "Sc_closed_form": exact,
                               "rel_error": abs(fit.sc_estimate - exact) / abs(exact) if exact else None}
    w.json("ball-volume", {"config": cfg, "report": payload})
    return f"Sc_estimate = {_g(fit.sc_estimate)} (closed form {_g(exact)})"


def cmd_perturb(args, w):
    field, x0, extra = _build_field(args)
    x = _point(args, field, x0)
    rep = perturbation_sweep(field, x, args.epsilon, args.directions, args.mode, args.sigma,
                             seed=args.seed)
    cfg = _config(args, **extra)
    w.csv("perturb", {"index": np.arange(rep.deltas.size), "norm": rep.perturbation_norms,
                      "delta": rep.deltas}, cfg)
    w.json("perturb", {"config": cfg, "report": rep.as_dict()})
    return (f"perturb: mean delta = {_g(rep.mean_delta)}, bound = {_g(rep.bound)},"
            f" violations = {rep.violations}, failures = {rep.failures}")


def cmd_escape(args, w):
    field, x0, extra = _build_field(args)
    x = _point(args, field, x0)
    h = field.hessian(x)
    dt = args.dt if args.dt is not None else args.t / 10 if args.t > 0 else 1e-3
    rep = ou_escape(h, args.t, dt, args.paths, seed=args.seed, keep_paths=True)
    cfg = _config(args, **extra)
    w.csv("escape", {"path": np.arange(args.paths), "escape": rep.escapes}, cfg)
    w.json("escape", {"config": cfg, "report": rep.as_dict()})
    return (f"escape: empirical = {_g(rep.empirical_escape)} +- {_g(rep.std_error)},"
            f" predicted = {_g(rep.predicted)}, exact OU = {_g(rep.exact)}")


def cmd_minibatch(args, w):
    extra = {}
    if args.model:
        spec, params, payload = load_model(args.model)
        data = dataset_from_config(payload["data"])
        hs = minibatch_hessians(spec, data, params, args.batches)
        extra = {"model_spec": payload["spec"], "model_data": payload["data"]}
    elif args.batch_matrices:
        hs = [np.array(m) for m in args.batch_matrices]
    elif args.batch_diags:
        hs = [np.diag(d) for d in args.batch_diags]
    else:
        hs = [np.diag([2.0, 0.0]), np.diag([0.0, 2.0])]
    rep = minibatch_analysis(hs)
    cfg = _config(args, **extra)
    w.csv("minibatch", {"batch": np.arange(rep.k), "trace": rep.per_batch_traces,
                        "sc": rep.per_batch_sc}, cfg)
    w.json("minibatch", {"config": cfg, "report": rep.as_dict()})
    return (f"minibatch: k={rep.k}, trace_gap = {_g(rep.trace_gap)}, full Sc = {_g(rep.full_sc)},"
            f" mean batch Sc = {_g(rep.mean_batch_sc)}, sc_gap = {_g(rep.sc_gap)}")


def cmd_train(args, w):
    spec = MlpSpec(tuple(args.widths), args.activation)
    data_cfg = {"kind": "sine", "n": args.n, "noise_sigma": args.noise, "seed": args.data_seed}
    data = make_sine_dataset(args.n, args.noise, args.data_seed)
    cfg_train = TrainConfig(optimizer=args.optimizer, learning_rate=args.lr, steps=args.steps,
                            batch_size=args.batch_size, seed=args.seed, log_every=args.log_every)
    res = train(spec, data, cfg_train)
    cfg = _config(args)
    w.csv("train", {k: [row[k] for row in res.trace] for k in ("step", "loss", "grad_norm")}, cfg)
    model_path = w.out / "model.json"
    save_model(model_path, spec, res.params, seed=args.seed, metrics=res.final, data_config=data_cfg,
               extra={"config": cfg})
    w.written.append(model_path)
    return (f"train: q={spec.n_params}, final loss = {_g(res.final['loss'])},"
            f" grad norm = {_g(res.final['grad_norm'])} -> {model_path}")


def cmd_estimate(args, w):
    field, x0, extra = _build_field(args)
    x = _point(args, field, x0)
    est = sc_min_estimate(field, x, args.probes, args.seed, threads=args.threads)
    quad, sq = probe_samples(field, x, args.probes, args.seed, threads=args.threads)
    cfg = _config(args, **extra)
    w.csv("estimate", {"probe": np.arange(args.probes), "vHv": quad, "Hv_sq": sq}, cfg)
    w.json("estimate", {"config": cfg, "report": est.as_dict()})
    se = est.trace.std_error
    return (f"estimate: tr H = {_g(est.trace.mean)} +- {_g(se) if math.isfinite(se) else 'inf'},"
            f" tr H^2 = {_g(est.trace_sq.mean)}, Sc ~ {_g(est.sc)}")


COMMANDS = {
    "curvature": cmd_curvature, "christoffel": cmd_christoffel, "riemann": cmd_riemann,
    "saddle-grid": cmd_saddle_grid, "ball-volume": cmd_ball_volume, "perturb": cmd_perturb,
    "escape": cmd_escape, "minibatch": cmd_minibatch, "train": cmd_train,
    "estimate": cmd_estimate,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for key, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    try:
        writer = Writer(args)
        print(COMMANDS[args.command](args, writer))
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        print(f"losscurv: error: {exc}", file=sys.stderr)
        return 2
    except (LossCurvError, OSError) as exc:
        print(f"losscurv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
