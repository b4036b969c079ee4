"""Command-line entry point: ``qsnn <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure at run time.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config, dataio, experiments, fetch, svgplot
from .config import ConfigError
from .corrupt import KINDS, parse_number

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MODEL_FILE = "model.qsnn"

# flag dest -> RunConfig field, for flags that override config values
_OVERRIDES = {"seed": "seed", "dataset": "dataset", "threads": "threads", "data_dir": "data_dir",
              "hidden": "hidden", "epochs": "epochs", "batch_size": "batch_size", "eta": "eta",
              "n_train": "n_train", "n_test": "n_test", "measurement": "measurement",
              "shots": "shots"}
# command-specific arguments stored in the manifest
_CMD_ARGS = {"train": (), "sweep": ("model", "noise", "grid"), "baseline": ("noise", "grid"),
             "eval": ("model", "noise", "param"), "encode_demo": ("index", "theta", "json"),
             "plot": ("results", "title")}


def _say(msg: str) -> None:
    print(msg, flush=True)


def _shared(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("shared")
    g.add_argument("--config", help="INI config file")
    g.add_argument("--seed", type=int)
    g.add_argument("--profile", choices=sorted(config.PROFILES))
    g.add_argument("--out", default="qsnn-out", help="output directory (default: qsnn-out)")
    g.add_argument("--dataset", choices=("mnist", "fashion"))
    g.add_argument("--threads", type=int)
    g.add_argument("--data-dir", help="dataset root (default: $QSNN_DATA_DIR or ~/.cache/qsnn)")
    g.add_argument("--from-manifest", metavar="PATH", help="rerun exactly as recorded in a manifest")
    o = p.add_argument_group("config overrides")
    o.add_argument("--hidden", type=int)
    o.add_argument("--epochs", type=int)
    o.add_argument("--batch-size", type=int)
    o.add_argument("--eta", type=float)
    o.add_argument("--n-train", type=int)
    o.add_argument("--n-test", type=int)
    o.add_argument("--measurement", choices=("exact", "sampled"))
    o.add_argument("--shots", type=int)


def _noise_args(p, default=None, multi=False):
    choices = KINDS + (("all",) if multi else ())
    p.add_argument("--noise", choices=choices, default=default)
    p.add_argument("--grid", help="a:b:step, inclusive (e.g. 0:pi/2:pi/16); default per noise kind")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsnn", description="Quantum-superposition spiking network experiments.")
    ap.add_argument("--version", action="version", version=f"qsnn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="download a dataset (pinned URLs and checksums)")
    _shared(p)
    p.add_argument("--source", choices=("auto", "official", "npm"), default="auto")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("train", help="train on clean encodings, write model + log")
    _shared(p)

    p = sub.add_parser("sweep", help="evaluate a model over a noise grid")
    _shared(p)
    p.add_argument("--model", help=f"model file (default: OUT/{MODEL_FILE})")
    _noise_args(p, default="invert")

    p = sub.add_parser("baseline", help="train the fully connected baseline and sweep it")
    _shared(p)
    _noise_args(p, default="all", multi=True)

    p = sub.add_parser("eval", help="accuracy of a model at one noise setting")
    _shared(p)
    p.add_argument("--model", help=f"model file (default: OUT/{MODEL_FILE})")
    p.add_argument("--noise", choices=KINDS, default="invert")
    p.add_argument("--param", default="0", help="theta, r or std (accepts pi, e.g. pi/4)")

    p = sub.add_parser("plot", help="SVG chart from results files")
    _shared(p)
    p.add_argument("results", nargs="+", help="results CSV/JSON files")
    p.add_argument("--title", default="")

    p = sub.add_parser("encode-demo", help="show the encoding of one test image")
    _shared(p)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--theta", default="0")
    p.add_argument("--json", action="store_true")
    return ap


def _resolve(args) -> config.RunConfig:
    overrides = {field: getattr(args, dest) for dest, field in _OVERRIDES.items()}
    return config.resolve(args.profile, args.config, overrides)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_args(args) -> dict:
    return {k: getattr(args, k) for k in _CMD_ARGS.get(args.command.replace("-", "_"), ())}


def _grid(args, kind):
    return experiments.parse_grid(args.grid) if args.grid else experiments.default_grid(kind)


def _model_path(args, out: Path) -> Path:
    return Path(args.model) if args.model else out / MODEL_FILE


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_fetch(args, cfg, out):
    names = [args.dataset] if args.dataset else ["mnist", "fashion"]
    for name in names:
        paths = fetch.fetch(name, cfg.data_dir or None, source=args.source, force=args.force)
        _say(f"{name}: {paths['train_images'].parent}")
    return []


def _write_log(logs, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "train_accuracy"])
        for e in logs:
            w.writerow([e.epoch, repr(e.loss), repr(e.train_accuracy)])


def cmd_train(args, cfg, out):
    data = experiments.load_data(cfg, "train")
    _say(f"training {cfg.hidden} hidden units on {len(data)} {cfg.dataset} samples, {cfg.epochs} epochs")
    t0 = time.perf_counter()

    def log(e):
        _say(f"epoch {e.epoch + 1}/{cfg.epochs}  loss {e.loss:.6g}  train acc {e.train_accuracy:.4f}"
             f"  ({time.perf_counter() - t0:.0f}s)")

    net, logs = experiments.train_qsnn(cfg, data, log)
    model = out / MODEL_FILE
    dataio.save_model(net, model)
    _write_log(logs, out / "train_log.csv")
    _say(f"model written to {model}")
    return [model, out / "train_log.csv"]


def cmd_sweep(args, cfg, out):
    net = dataio.load_model(_model_path(args, out))
    data = experiments.load_data(cfg, "test")
    records = experiments.sweep_qsnn(net, data, args.noise, _grid(args, args.noise), cfg, cfg.threads)
    for r in records:
        _say(f"{r.noise_kind} {r.noise_param:.4f}  acc {r.accuracy:.4f}")
    path = dataio.write_results(records, out / f"results_{args.noise}.csv")
    return [path]


def cmd_baseline(args, cfg, out):
    kinds = KINDS if args.noise == "all" else (args.noise,)
    if args.grid and len(kinds) > 1:
        raise ConfigError("--grid needs a single --noise kind")
    train = experiments.load_data(cfg, "train")
    test = experiments.load_data(cfg, "test")
    _say(f"training baseline ({cfg.baseline_hidden} hidden) on {len(train)} samples")
    model = experiments.train_baseline(
        cfg, train, log=lambda ep, m: _say(f"epoch {ep + 1}/{cfg.baseline_epochs}  train acc {m.accuracy:.4f}"))
    paths = []
    for kind in kinds:
        records = experiments.sweep_baseline(model, test, kind, _grid(args, kind), cfg, cfg.threads)
        for r in records:
            _say(f"{r.noise_kind} {r.noise_param:.4f}  acc {r.accuracy:.4f}")
        paths.append(dataio.write_results(records, out / f"baseline_{kind}.csv"))
    return paths


def cmd_eval(args, cfg, out):
    try:
        param = parse_number(args.param)
    except ValueError as exc:
        raise ConfigError(f"bad --param {args.param!r}") from exc
    net = dataio.load_model(_model_path(args, out))
    data = experiments.load_data(cfg, "test")
    records = experiments.sweep_qsnn(net, data, args.noise, [param], cfg)
    _say(f"{args.noise} {param:.6g}: accuracy {records[0].accuracy:.4f} on {records[0].n_samples} samples")
    return [dataio.write_results(records, out / f"eval_{args.noise}.csv")]


def cmd_plot(args, cfg, out):
    records = [r for path in args.results for r in dataio.read_results(path)]
    if not records:
        raise dataio.DataError("results files contain no rows")
    path = svgplot.write_svg(records, out / "plot.svg", args.title)
    _say(f"chart written to {path}")
    return [path]


def _raster_text(train) -> str:
    return "".join("|" if s else "." for s in train)


def cmd_encode_demo(args, cfg, out):
    data = experiments.load_data(cfg.replace(n_test=0), "test")
    if not 0 <= args.index < len(data):
        raise ConfigError(f"--index must lie in [0, {len(data)})")
    try:
        theta = parse_number(args.theta)
    except ValueError as exc:
        raise ConfigError(f"bad --theta {args.theta!r}") from exc
    image = data.images[args.index]
    # a handful of ink pixels plus background, for a readable table
    ink = np.flatnonzero(image > 0.5)[:6].tolist()
    bg = np.flatnonzero(image == 0)[:2].tolist()
    rows, spikes = experiments.demo_rows(image, theta, cfg, cfg.seed, sorted(ink + bg))
    show = int(ink[0]) if ink else 0
    if args.json:
        doc = {"index": args.index, "label": int(data.labels[args.index]), "theta": theta, "pixels": rows,
               "raster_pixel": show, "raster": spikes.trains[show].tolist()}
        _say(json.dumps(doc, indent=2))
        return []
    _say(f"test image {args.index}, label {data.labels[args.index]}, theta {theta:.6g}")
    _say(f"{'pixel':>5} {'x':>6} {'theta':>7} {'P':>7} {'Q':>7} {'phi':>7} {'rate':>6} {'t0':>4}")
    for r in rows:
        _say(f"{r['pixel']:>5} {r['x']:>6.3f} {r['theta']:>7.4f} {r['P']:>7.4f} {r['Q']:>7.4f} "
             f"{r['phi']:>7.4f} {r['rate']:>6.3f} {r['t0'] * cfg.dt:>4.0f}")
    _say(f"spike train of pixel {show} ({cfg.T:g} ms, dt {cfg.dt:g} ms):")
    _say(_raster_text(spikes.trains[show]))
    return []


COMMANDS = {"fetch": cmd_fetch, "train": cmd_train, "sweep": cmd_sweep, "baseline": cmd_baseline,
            "eval": cmd_eval, "plot": cmd_plot, "encode-demo": cmd_encode_demo}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.from_manifest:
            doc = config.read_manifest(args.from_manifest, args.command)
            if doc["command"] != args.command:
                raise ConfigError(f"manifest records `{doc['command']}`, not `{args.command}`")
            cfg = doc["config"]
            for k, v in doc["args"].items():
                setattr(args, k, v)
        else:
            cfg = _resolve(args)
        out = _out_dir(args)
        outputs = COMMANDS[args.command](args, cfg, out)
        if args.command not in ("fetch", "encode-demo"):
            config.write_manifest(out, args.command, cfg, _cmd_args(args), outputs)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except dataio.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:  # range checks inside the library
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
