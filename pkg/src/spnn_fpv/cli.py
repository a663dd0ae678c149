"""Command-line driver for map generation, training, design and the figure sweeps.

Every subcommand writes CSV or JSON into ``--out`` (a file) or the output
directory (``--out-dir``, else ``$SPNN_FPV_OUT``, else the working directory).
Settings resolve as command-line flag, then ``--config`` JSON, then built-in
defaults.  Exit codes: 0 success, 2 usage, 3 I/O, 4 numerical domain.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import mesh, metrics, optimizer, spnn
from . import photonics as ph
from .errors import DomainError, OutOfRangeError
from .varmap import VariationParams, generate_map, load_map, save_map

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DOMAIN = 0, 2, 3, 4
OUT_ENV = "SPNN_FPV_OUT"

log = logging.getLogger("spnn_fpv")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# readers / writers


def write_csv(path, rows) -> None:
    rows = list(rows)
    if not rows:
        raise UsageError("nothing to write")
    fields = list(rows[0])
    for r in rows[1:]:
        fields += [k for k in r if k not in fields]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def _num(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_csv(path) -> list[dict]:
    """Rows of a CSV written by :func:`write_csv`, numbers converted back."""
    with open(path, newline="") as fh:
        return [{k: _num(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2))


def read_json(path):
    return json.loads(Path(path).read_text())


# --------------------------------------------------------------------------
# shared helpers


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _words(text):
    return [x for x in text.split(",") if x]


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _out(args, default_name: str) -> Path:
    if args.out:
        p = Path(args.out)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p
    return _out_dir(args) / default_name


def _params(args) -> VariationParams:
    return VariationParams(args.sigma_w, args.sigma_t, args.corr_len, args.mesh, args.radial, args.seed)


def _model(args) -> spnn.SpnnModel:
    if args.weights:
        return spnn.SpnnModel.load(args.weights)
    if getattr(args, "train", False):
        if not args.mnist:
            raise UsageError("--train needs --mnist DIR")
        return _train(args)[0]
    raise UsageError("give --weights FILE (a trained model) or --train with --mnist DIR")


def _test_set(args, model):
    if not args.mnist:
        raise UsageError("--mnist DIR with the IDX files is required")
    _, _, Xte, yte = spnn.load_mnist(args.mnist)
    if args.limit:
        Xte, yte = Xte[:args.limit], yte[:args.limit]
    return model.features(Xte / 255.0), yte.astype(int)


def _train(args):
    Xtr, ytr, Xte, yte = spnn.load_mnist(args.mnist)
    dim = getattr(args, "dim", 16)
    model = spnn.init_model(dim, args.seed)
    Ftr = model.features(Xtr / 255.0)
    Fte = model.features(Xte / 255.0)
    cfg = spnn.TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    trained = spnn.train(model, Ftr, ytr.astype(int), cfg, Fte, yte.astype(int), log=log.info)
    return trained, Fte, yte.astype(int)


def _policies(names):
    return [ex.Policy.parse(p) for p in names]


# --------------------------------------------------------------------------
# subcommands


def cmd_genmap(args):
    p = _params(args)
    vmap = generate_map(p, args.width, args.height, (args.x0, args.y0))
    out = _out(args, "map.npz")
    save_map(vmap, out, "json" if out.suffix == ".json" else "npz")
    return {"map": str(out), "shape": list(vmap.shape),
            "sigma_w": float(vmap.width_dev.std()), "sigma_t": float(vmap.thick_dev.std())}


def cmd_train(args):
    if not args.mnist:
        raise UsageError("--mnist DIR with the IDX files is required")
    model, Fte, yte = _train(args)
    decs = spnn.decompose_model(model)
    model.meta["photonic_test_accuracy"] = spnn.evaluate(model, decs, Fte, yte)
    out = _out(args, "weights.json")
    model.save(out)
    return {"weights": str(out), "train_accuracy": model.meta["train_accuracy"],
            "test_accuracy": model.meta["test_accuracy"],
            "photonic_test_accuracy": model.meta["photonic_test_accuracy"]}


def cmd_decompose(args):
    model = _model(args)
    decs = spnn.decompose_model(model)
    residual = max(float(np.abs(d.nominal() - W).max()) for d, W in zip(decs, model.weights))
    out = _out(args, "decomposition.json")
    write_json(out, {"format": "spnn-fpv/decomposition", "layers": [d.to_dict() for d in decs],
                     "mzi_count": sum(d.mzi_count for d in decs),
                     "phase_shifters": spnn.phase_shifter_count(decs), "max_residual": residual})
    return {"decomposition": str(out), "mzi_count": sum(d.mzi_count for d in decs), "max_residual": residual}


def _network_variations(args, net):
    vmap = load_map(args.map) if args.map else net.die_map(_params(args))
    return ex.apply_mode(net.sample(vmap), args.mode)


def cmd_evaluate(args):
    model = _model(args)
    X, y = _test_set(args, model)
    net = ex.PhotonicNetwork.build(spnn.decompose_model(model))
    result = {"software_accuracy": spnn.evaluate(model, None, X, y),
              "nominal_photonic_accuracy": spnn.evaluate(model, net.decs, X, y)}
    if args.map or args.sigma_w or args.sigma_t:
        v = _network_variations(args, net)
        design = None
        if args.design:
            design = optimizer.TolerantDesign.from_dict(read_json(args.design))
            if len(design) != net.mzi_count:
                raise UsageError(f"design has {len(design)} MZIs, network has {net.mzi_count}")
        W = net.deviated_weights(v, ph.EimModel(), design)
        rep = metrics.network_rvd(net.nominal_weights(), W, net.phase_shifters)
        result.update(deviated_accuracy=spnn.evaluate(model, net.decs, X, y, weights=W),
                      layer_rvd=rep.layer_rvd, mean_rvd=rep.mean, normalized_rvd=rep.normalized)
    out = _out(args, "evaluation.json")
    write_json(out, result)
    return result


def cmd_optimize_region(args):
    eim = ph.EimModel()
    pol = ex.Policy.parse(f"{args.region}-{args.geometry}:{args.objective}")
    if args.unitary_size:
        pl = mesh.place_oiu(args.unitary_size)
        x0, y0, x1, y1 = pl.extent
        d = args.mesh
        vmap = load_map(args.map) if args.map else generate_map(
            _params(args), x1 - x0 + 2 * d, y1 - y0 + 2 * d, (x0 - d, y0 - d))
        v = ex.apply_mode(mesh.sample_mzi_vars(pl, vmap), args.mode)
        design = optimizer.region_optimize([pl], None, optimizer.RegionPolicy(args.region), args.geometry, eim,
                                           variations=v, objective=args.objective)
    else:
        model = _model(args)
        net = ex.PhotonicNetwork.build(spnn.decompose_model(model))
        v = _network_variations(args, net)
        design = net.design(pol, v, eim)
    out = _out(args, "design.json")
    write_json(out, design.to_dict())
    return {"design": str(out), "mzis": len(design), "regions": int(design.region.max()) + 1,
            "area_overhead": design.area_overhead}


def cmd_optimize_worstcase(args):
    design = optimizer.worst_case_optimize(args.budget, args.geometry)
    if args.count:
        design = design.fan_out(args.count)
    out = _out(args, "design.json")
    write_json(out, design.to_dict())
    w = float(design.widths[0, 0])
    return {"design": str(out), "width": w, "arm_length": float(ph.arm_length(w)),
            "area_overhead": design.area_overhead}


def cmd_sweep_fig5(args):
    eim = ph.EimModel()
    us = ex.haar_unitaries(args.size, args.count, args.seed)
    base = _params(args)
    rows = []
    for l in args.corr_lens:
        for name in args.policies:
            pol = ex.Policy.parse(name)
            stats, vals = ex.rvd_distribution(us, replace(base, corr_length=l), pol, eim, args.trials,
                                              args.mode, args.seed)
            iqr = np.percentile(vals, 75, axis=1) - np.percentile(vals, 25, axis=1) if args.trials > 1 else None
            row = {"corr_length": l, "policy": name, **asdict(stats), "iqr": stats.iqr}
            if iqr is not None:
                row["iqr_cv"] = float(iqr.std() / iqr.mean()) if iqr.mean() > 0 else 0.0
            rows.append(row)
            log.info("rvd l=%g %s median %.4g", l, name, stats.median)
    out = _out(args, "fig5_rvd.csv")
    write_csv(out, rows)
    return {"csv": str(out), "rows": len(rows)}


def cmd_sweep_fig6(args):
    model = _model(args)
    X, y = _test_set(args, model)
    eim = ph.EimModel()
    res = ex.run_network_trials(model, X, y, _policies(args.policies), eim, tuple(args.sigma_scales),
                                tuple(args.corr_lens), tuple(args.modes), args.trials, args.seed,
                                base_params=_params(args), progress=log.info)
    d = _out_dir(args)
    csv_path = Path(args.out) if args.out else d / "fig6_trials.csv"
    write_csv(csv_path, [r.row() for r in res])
    summary = ex.summarize(res)
    nominal = spnn.evaluate(model, None, X, y)
    points = [(r.normalized_rvd, r.accuracy) for r in res]
    try:
        r2 = metrics.rvd_accuracy_correlation(points)
    except (DomainError, ValueError):
        r2 = None
    write_json(csv_path.with_name("fig6_summary.json"),
               {"nominal_accuracy": nominal, "rvd_accuracy_r2": r2, "groups": summary})
    return {"csv": str(csv_path), "rows": len(res), "nominal_accuracy": nominal, "rvd_accuracy_r2": r2}


def cmd_sweep_table3(args):
    model = _model(args)
    X, y = _test_set(args, model)
    rows = ex.worst_case_table(model, X, y, ph.EimModel(), tuple(args.budgets), tuple(args.corr_lens),
                               args.trials, args.seed, _params(args))
    out = _out(args, "table3.csv")
    write_csv(out, rows)
    return {"csv": str(out), "rows": len(rows)}


# --------------------------------------------------------------------------
# parser


def _common(p, maps=True, model=False, data=False):
    p.add_argument("--config", help="JSON file of option defaults (keys as in --help, dashes or underscores)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV} or .)")
    p.add_argument("-v", "--verbose", action="store_true")
    if maps:
        p.add_argument("--sigma-w", type=float, default=5.0, help="width sigma, nm")
        p.add_argument("--sigma-t", type=float, default=2.0, help="thickness sigma, nm")
        p.add_argument("--corr-len", type=float, default=1000.0, help="correlation length, um")
        p.add_argument("--mesh", type=float, default=10.0, help="map cell size, um")
        p.add_argument("--radial", type=float, default=0.0, help="radial trend amplitude, nm")
    if model:
        p.add_argument("--weights", help="trained model JSON")
        p.add_argument("--train", action="store_true", help="train a model first (needs --mnist)")
        _train_opts(p)
    if data:
        p.add_argument("--mnist", help="directory holding the MNIST IDX files")
        p.add_argument("--limit", type=int, default=0, help="use only the first N test images")


def _train_opts(p):
    p.add_argument("--epochs", type=int, default=spnn.TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=spnn.TrainConfig.lr)
    p.add_argument("--batch-size", type=int, default=spnn.TrainConfig.batch_size)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spnn-fpv", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("genmap", help="generate a width/thickness variation map")
    _common(p)
    p.add_argument("--width", type=float, default=11220.0, help="map width, um")
    p.add_argument("--height", type=float, default=1560.0, help="map height, um")
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--y0", type=float, default=0.0)
    p.set_defaults(func=cmd_genmap)

    p = sub.add_parser("train", help="train an SPNN on FFT-compressed MNIST")
    _common(p, maps=False, data=True)
    _train_opts(p)
    p.add_argument("--dim", type=int, choices=spnn.FEATURE_DIMS, default=16)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decompose", help="decompose a model's layers into MZI meshes")
    _common(p, maps=False, model=True, data=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("evaluate", help="accuracy and RVD, nominal or under a variation map")
    _common(p, model=True, data=True)
    p.add_argument("--map", help="variation map file covering the network die")
    p.add_argument("--design", help="tolerant design JSON")
    p.add_argument("--mode", choices=ex.VARIATION_MODES, default="W+T")
    p.set_defaults(func=cmd_evaluate, sigma_w=0.0, sigma_t=0.0)

    p = sub.add_parser("optimize-region", help="region-based-tolerant design")
    _common(p, model=True, data=True)
    p.add_argument("--region", choices=list(optimizer.REGION_SIZES), default="R3")
    p.add_argument("--geometry", choices=ph.GEOMETRIES, default="strip")
    p.add_argument("--objective", choices=optimizer.OBJECTIVES, default="mse")
    p.add_argument("--map", help="variation map file")
    p.add_argument("--mode", choices=ex.VARIATION_MODES, default="W+T")
    p.add_argument("--unitary-size", type=int, default=0, help="design one Haar-random NxN mesh instead")
    p.set_defaults(func=cmd_optimize_region)

    p = sub.add_parser("optimize-worstcase", help="worst-case-tolerant width for an area budget")
    _common(p, maps=False)
    p.add_argument("--budget", type=float, required=True, help="area overhead fraction, e.g. 0.04")
    p.add_argument("--geometry", choices=ph.GEOMETRIES, default="strip")
    p.add_argument("--count", type=int, default=0, help="fan the design out to N MZIs")
    p.set_defaults(func=cmd_optimize_worstcase)

    p = sub.add_parser("sweep-fig5", help="RVD box statistics over random unitaries")
    _common(p)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--corr-lens", type=_floats, default=[100.0, 1000.0])
    p.add_argument("--policies", type=_words, default=[q.name for q in ex.FIG5_POLICIES])
    p.add_argument("--mode", choices=ex.VARIATION_MODES, default="W+T")
    p.set_defaults(func=cmd_sweep_fig5)

    p = sub.add_parser("sweep-fig6", help="network accuracy under variations, per policy")
    _common(p, model=True, data=True)
    p.add_argument("--sigma-scales", type=_floats, default=[0.5, 1.0, 2.0])
    p.add_argument("--corr-lens", type=_floats, default=[100.0, 1000.0])
    p.add_argument("--policies", type=_words, default=[q.name for q in ex.FIG6_POLICIES])
    p.add_argument("--modes", type=_words, default=list(ex.VARIATION_MODES))
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(func=cmd_sweep_fig6)

    p = sub.add_parser("sweep-table3", help="worst-case widening vs area budget")
    _common(p, model=True, data=True)
    p.add_argument("--budgets", type=_floats, default=[0.01, 0.02, 0.04, 0.08, 0.16, 0.32])
    p.add_argument("--corr-lens", type=_floats, default=[100.0, 1000.0])
    p.add_argument("--trials", type=int, default=5)
    p.set_defaults(func=cmd_sweep_table3)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv):
    """Re-parse with the ``--config`` file's values installed as defaults."""
    args = ap.parse_args(argv)
    if not args.config:
        return args
    cfg = read_json(args.config)
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    sub = ap._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "func", "help"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        action = known[dest]
        if isinstance(val, list) and action.type in (_floats, _words):
            val = ",".join(map(str, val))
        if isinstance(val, str) and action.type is not None:
            val = action.type(val)
        defaults[dest] = val
    sub.set_defaults(**defaults)
    return ap.parse_args(argv)


def _validate(args):
    for name, low in (("trials", 1), ("epochs", 1), ("batch_size", 1), ("count", 0), ("size", 2)):
        if getattr(args, name, low) < low:
            raise UsageError(f"--{name.replace('_', '-')} must be >= {low}")
    if hasattr(args, "policies"):
        try:
            _policies(args.policies)
        except ValueError as e:
            raise UsageError(str(e)) from None


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        _validate(args)
        result = args.func(args)
    except SystemExit as e:  # argparse usage errors and --help
        return int(e.code or 0)
    except UsageError as e:
        print(f"spnn-fpv: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, KeyError) as e:
        print(f"spnn-fpv: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, OutOfRangeError, spnn.TrainingError, ValueError, ArithmeticError) as e:
        print(f"spnn-fpv: domain error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    print(json.dumps(result))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
