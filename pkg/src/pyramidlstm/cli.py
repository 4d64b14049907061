"""Command-line entry point: ``pyramidlstm <command> [--config FILE] ...``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 runtime error. On
failure a single line ``pyramidlstm: error kind=<kind> field=<field>: <msg>``
is written to stderr.
"""

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import config as config_mod
from .bench import bench_forward, write_bench_csv
from .datapipe import assemble_channels, stitch, tile_origins
from .errors import BoundsError, ConfigError, CoverageError, FormatError, ShapeError
from .metrics import evaluate, labels_from_probs
from .network import Network, init_uniform, layer_param_counts, load_checkpoint, predict
from .parallel import set_num_threads
from .train import resume, train_loop
from .volume import LabelVolume, read_labels, read_vol, write_labels, write_vol

log = logging.getLogger("pyramidlstm")

EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 2, 3, 4


def _out_path(cfg, value, default_name):
    if value:
        return value
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, default_name)


def _echo_config(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    config_mod.dump(cfg, os.path.join(cfg.out, "resolved_config.ini"))


def cmd_preprocess(cfg, args):
    if not cfg.dataset.modalities:
        raise ConfigError("no modalities listed", field="preprocess.modalities")
    raw = {}
    for m in cfg.dataset.modalities:
        path = cfg.modality_paths.get(m.name)
        if not path:
            raise ConfigError(f"no path for modality {m.name!r}", field=f"preprocess.{m.name}")
        raw[m.name] = read_vol(path)
    vol = assemble_channels(raw, cfg.dataset)
    out = _out_path(cfg, cfg.get("preprocess", "output"), "preprocessed.vol")
    write_vol(out, vol)
    _echo_config(cfg)
    print(f"wrote {out} shape={vol.shape}")


def _load_training_data(cfg):
    if not cfg.train_inputs:
        raise ConfigError("no training inputs listed", field="data.train_inputs")
    data = []
    for xp, lp in zip(cfg.train_inputs, cfg.train_labels):
        x, lab = read_vol(xp), read_labels(lp)
        if x.shape[:3] != lab.shape:
            raise ShapeError(f"{xp} has shape {x.shape[:3]} but {lp} has {lab.shape}")
        if x.shape[3] != cfg.input_channels:
            raise ConfigError(f"{xp} has {x.shape[3]} channels, arch expects {cfg.input_channels}",
                              field="arch.input_channels")
        if lab.num_classes != cfg.num_classes:
            raise ConfigError(f"{lp} declares {lab.num_classes} classes, arch has {cfg.num_classes}",
                              field="arch.num_classes")
        data.append((x, lab))
    return data


def cmd_train(cfg, args):
    data = _load_training_data(cfg)
    ckpt = os.path.join(cfg.out, "checkpoint.pnet")
    expect = Network(cfg.input_channels, cfg.layers)
    if args.resume:
        net, opt, start, seed = resume(args.resume, expect=expect)
        if seed != cfg.seed:
            raise ConfigError(f"checkpoint was trained with seed {seed}, config has {cfg.seed}",
                              field="run.seed")
    else:
        net, opt, start, seed = init_uniform(expect, cfg.seed), None, 0, cfg.seed
    _echo_config(cfg)
    net, opt, rows = train_loop(
        net, data, cfg.schedule, seed, augment=cfg.dataset.augment, opt=opt, start_epoch=start,
        stop_epoch=args.stop_epoch, log_path=os.path.join(cfg.out, "loss.csv"),
        checkpoint_path=ckpt, checkpoint_every=cfg.checkpoint_every)
    last = rows[-1][3] if rows else float("nan")
    print(f"trained epochs {start}..{start + len(rows)} final loss {last:.6g}; checkpoint {ckpt}")


def predict_volume(net, x, tile, overlap=0.5, sigma_frac=0.25):
    """Tile ``x``, run the network on every tile and stitch the probabilities."""
    tile = tuple(min(t, n) for t, n in zip(tile, x.shape[:3]))
    preds = []
    for (x0, y0, z0) in tile_origins(x.shape[:3], tile, overlap):
        sub = np.ascontiguousarray(x[x0:x0 + tile[0], y0:y0 + tile[1], z0:z0 + tile[2]])
        preds.append((predict(sub, net), (x0, y0, z0)))
    return stitch(preds, x.shape[:3], sigma_frac)


def cmd_predict(cfg, args):
    ckpt = cfg.get("predict", "checkpoint") or os.path.join(cfg.out, "checkpoint.pnet")
    net = load_checkpoint(ckpt)[0]
    inp = cfg.get("predict", "input")
    if not inp:
        raise ConfigError("no input volume given", field="predict.input")
    x = read_vol(inp)
    if x.shape[3] != net.input_channels:
        raise ShapeError(f"{inp} has {x.shape[3]} channels, network expects {net.input_channels}")
    tile = cfg.dims("predict", "tile") if cfg.get("predict", "tile") else cfg.schedule.stages[-1][1]
    probs = predict_volume(net, x, tile, cfg.dataset.overlap, cfg.dataset.sigma_frac)
    p_out = _out_path(cfg, cfg.get("predict", "output_probs"), "probs.vol")
    l_out = _out_path(cfg, cfg.get("predict", "output_labels"), "labels.lab")
    write_vol(p_out, probs)
    write_labels(l_out, LabelVolume(labels_from_probs(probs), probs.shape[3]))
    _echo_config(cfg)
    print(f"wrote {p_out} and {l_out}")


def _fmt(v):
    return "empty" if v is None else repr(float(v))


def cmd_evaluate(cfg, args):
    pp, rp = cfg.get("evaluate", "prediction"), cfg.get("evaluate", "reference")
    if not pp or not rp:
        raise ConfigError("prediction and reference are required", field="evaluate.prediction")
    pred, ref = read_labels(pp), read_labels(rp)
    if pred.shape != ref.shape:
        raise ShapeError(f"prediction {pred.shape} and reference {ref.shape} differ")
    classes_s = config_mod._list(cfg.get("evaluate", "classes"))
    try:
        classes = [int(c) for c in classes_s] or list(range(1, ref.num_classes))
        spacing = tuple(float(s) for s in config_mod._list(cfg.get("evaluate", "spacing")))
    except ValueError:
        raise ConfigError("classes must be integers and spacing numbers",
                          field="evaluate.classes") from None
    if len(spacing) != 3:
        raise ConfigError("spacing needs three values", field="evaluate.spacing")
    rows = evaluate(pred, ref, classes, spacing, cfg.getint("evaluate", "foreground"),
                    cfg.getbool("evaluate", "per_slice"))
    out = _out_path(cfg, cfg.get("evaluate", "output"), "metrics.csv")
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class", "metric", "value"])
        for k, name, v in rows:
            w.writerow([k, name, _fmt(v)])
    _echo_config(cfg)
    print(f"{'class':>5}  {'metric':<12} {'value':>12}")
    for k, name, v in rows:
        print(f"{k:>5}  {name:<12} {'empty' if v is None else f'{v:12.6f}':>12}")
    print(f"wrote {out}")


def cmd_bench(cfg, args):
    dims = cfg.dims("bench", "dims")
    try:
        counts = [int(t) for t in config_mod._list(cfg.get("bench", "threads"))]
    except ValueError:
        raise ConfigError("threads must be integers", field="bench.threads") from None
    dtype = {"float64": np.float64, "float32": np.float32}.get(cfg.get("bench", "dtype"))
    if dtype is None:
        raise ConfigError("dtype must be float64 or float32", field="bench.dtype")
    rows, identical = bench_forward(dims, cfg.getint("bench", "channels"), cfg.layers, counts,
                                    cfg.getint("bench", "repeats"), cfg.seed, dtype)
    out = _out_path(cfg, None, "bench.csv")
    write_bench_csv(out, rows)
    _echo_config(cfg)
    print(f"{'threads':>7} {'wall_ms':>12} {'speedup':>8}")
    for n, ms, sp in rows:
        print(f"{n:>7} {ms:12.1f} {sp:8.2f}")
    print(f"outputs bit-identical across thread counts: {identical}")
    if not identical:
        raise RuntimeError("outputs differ across thread counts")


def cmd_param_count(cfg, args):
    net = Network(cfg.input_channels, cfg.layers)
    for desc, n in layer_param_counts(net):
        print(f"{desc:<32} {n:>12d}")
    print(f"{'total':<32} {net.params.size:>12d}")


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "param-count": cmd_param_count,
}


def build_parser():
    p = argparse.ArgumentParser(prog="pyramidlstm", description="PyraMiD-LSTM volumetric segmentation")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue training from a checkpoint")
    p.add_argument("--stop-epoch", type=int, help="stop training after this global epoch")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(kind, field, msg, code):
    msg = " ".join(str(msg).split())
    print(f"pyramidlstm: error kind={kind} field={field or '-'}: {msg}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    overrides = {}
    if args.seed is not None:
        overrides[("run", "seed")] = args.seed
    if args.threads is not None:
        overrides[("run", "threads")] = args.threads
    if args.out is not None:
        overrides[("run", "out")] = args.out
    try:
        cfg = config_mod.load(args.config, overrides)
        set_num_threads(cfg.threads)
        COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        return _fail("config", e.field, e, EXIT_CONFIG)
    except FormatError as e:
        return _fail("data", e.field, e, EXIT_DATA)
    except (ShapeError, CoverageError, BoundsError) as e:
        return _fail("data", None, e, EXIT_DATA)
    except Exception as e:  # noqa: BLE001 - every other failure maps to one exit code
        log.debug("runtime failure", exc_info=True)
        return _fail("runtime", None, f"{type(e).__name__}: {e}", EXIT_RUNTIME)
    return 0


if __name__ == "__main__":
    sys.exit(main())
