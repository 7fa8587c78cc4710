"""Command-line entry point.

Machine-readable JSON goes to stdout; ``--pretty`` switches to tables.
Exit codes: 0 ok, 1 operation failed (one JSON line on stderr), 2 usage.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import data
from .dcp import DEFAULT_THRESHOLDS, DcpConfig, classify_haze, dcp_dehaze, haze_density
from .errors import DehazeKitError
from .rng import default_seed

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(obj, pretty=False):
    if pretty and isinstance(obj, dict):
        width = max((len(k) for k in obj), default=0)
        for k, v in obj.items():
            if isinstance(v, float):
                v = f"{v:.6g}"
            print(f"{k:<{width}}  {v}")
    else:
        print(json.dumps(obj, sort_keys=False))


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


# ------------------------------------------------------------------ dehaze

def _pad4(img):
    h, w = img.shape[:2]
    ph, pw = (-h) % 4, (-w) % 4
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="edge"), (h, w)


def cmd_dehaze(a):
    img = data.load_image(a.input)
    info = {"input": str(a.input), "output": str(a.output), "method": a.method}
    if a.method == "dcp":
        res = dcp_dehaze(img, DcpConfig(radius=a.radius))
        out = res.image
        info.update(mean_dark_channel=res.density, atmosphere=[float(v) for v in res.atmosphere])
    else:
        from .imageops import from_batch, to_batch
        from .model import ModelConfig, init_params, mcafnet_forward
        from .model.weights import load_weights
        cfg = ModelConfig.from_text(Path(a.config).read_text()) if a.config else None
        if a.weights:
            params, cfg = load_weights(a.weights, cfg)
        else:
            cfg = cfg or ModelConfig()
            params = init_params(cfg, a.seed)
        padded, (h, w) = _pad4(img)
        pred, _ = mcafnet_forward(to_batch(padded), params, cfg)
        out = from_batch(pred)[:h, :w]
    data.save_image(out, a.output)
    return info


# ------------------------------------------------------------------ analyze

def _report(path, radius, thresholds):
    d = haze_density(data.load_image(path), radius)
    return {"path": str(path), "mean_dark_channel": d, "class": classify_haze(d, thresholds),
            "thresholds": list(thresholds)}


def _fan_out(fn, items, jobs, *extra):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items, *[[e] * len(items) for e in extra]))
    return [fn(i, *extra) for i in items]


def cmd_analyze(a):
    th = tuple(a.thresholds)
    return _fan_out(_report, a.inputs, a.jobs, a.radius, th)


# ------------------------------------------------------------------ stratify

def cmd_stratify(a):
    m = data.build_manifest(a.hazy, a.clear, seed=a.seed, thresholds=tuple(a.thresholds),
                            radius=a.radius, jobs=a.jobs)
    m.save(a.out)
    return {"manifest": str(a.out), "records": len(m.records), "counts": m.counts(), "unmatched": m.unmatched}


# ------------------------------------------------------------------ tile

def cmd_tile(a):
    img = data.load_image(a.input)
    if a.bands:
        if any(not 0 <= b < img.shape[2] for b in a.bands):
            raise ValueError(f"band indices must lie in [0, {img.shape[2]})")
        img = img[..., a.bands]
    meta = None
    if a.geo:
        meta = data.GeoMeta.load(a.geo)
        if a.region:
            lon0, lat0, lon1, lat1 = a.region
            img, meta = data.geo_crop(img, meta, data.GeoMeta((lon0, lat0), (lon1, lat1)))
    elif a.region:
        raise ValueError("--region needs --geo")
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(a.input).stem
    names = []
    for tile, (r, c) in data.tile_image(img, a.size):
        name = out / f"{stem}_r{r}_c{c}.png"
        data.save_image(tile, name)
        names.append(str(name))
    info = {"input": str(a.input), "tiles": len(names), "size": a.size, "files": names}
    if meta is not None:
        info["geo"] = meta.to_json()
    return info


# ------------------------------------------------------------------ metrics

def _metric_pair(pair, niqe_path):
    from .metrics import full_report
    from .niqe import NiqeModel
    ref, test = pair
    model = NiqeModel.load(niqe_path) if niqe_path else None
    rep = full_report(data.load_image(ref), data.load_image(test), model).to_json()
    return {"ref": str(ref), "test": str(test), **rep}


def cmd_metrics(a):
    ref, test = Path(a.ref), Path(a.test)
    if ref.is_dir() and test.is_dir():
        rs, ts = data._list_images(ref), data._list_images(test)
        pairs = [(rs[n], ts[n]) for n in sorted(set(rs) & set(ts))]
    else:
        pairs = [(ref, test)]
    out = _fan_out(_metric_pair, pairs, a.jobs, a.niqe_model)
    return out[0] if len(out) == 1 and not ref.is_dir() else out


def cmd_niqe_fit(a):
    from .niqe import niqe_fit
    model = niqe_fit([data.load_image(p) for p in a.images], patch=a.patch)
    model.save(a.out)
    return {"model": str(a.out), "features": int(model.mean.size), "regularized": model.regularized}


# ------------------------------------------------------------------ model-info

def cmd_model_info(a):
    from .model import ModelConfig, model_cost
    from .tensor import FLOPS_PER_MAC
    cfg = ModelConfig.from_text(Path(a.config).read_text()) if a.config else ModelConfig()
    cost = model_cost(cfg, a.height, a.width)
    info = {"params": cost.params, "flops": cost.flops, "macs": cost.macs, "flops_per_mac": FLOPS_PER_MAC,
            "height": a.height, "width": a.width, "config": cfg.to_text()}
    if a.pretty:
        print(cfg.to_text(), end="")
        print()
        print(f"{'part':<10} {'params':>10} {'MACs':>16}")
        for k, (p, m) in cost.parts.items():
            print(f"{k:<10} {p:>10,} {m:>16,}")
        print(f"{'total':<10} {cost.params:>10,} {cost.macs:>16,}")
        print(f"params {cost.params / 1e3:.1f}K  FLOPs {cost.flops / 1e9:.2f}G at {a.height}x{a.width}")
        return None
    info["parts"] = {k: {"params": p, "macs": m} for k, (p, m) in cost.parts.items()}
    return info


# ------------------------------------------------------------------ gradcheck

def cmd_gradcheck(a):
    from .gradcheck import grad_check, random_op_graph
    from .rng import Rng
    rng = Rng(a.seed).split("cli-gradcheck")
    worst, checked, failures = 0.0, 0, []
    for i in range(a.graphs):
        builder, params, ops = random_op_graph(rng.split(f"graph{i}"))
        r = grad_check(builder, params, step=a.step, tol=a.tol, raise_on_fail=False, rng=rng.split(f"sample{i}"))
        worst = max(worst, r.max_rel_error)
        checked += r.checked
        if not r.ok:
            m = r.worst[0]
            failures.append({"graph": i, "ops": ops, "param": m.name, "index": list(m.index),
                             "rel_error": m.rel_error})
    out = {"graphs": a.graphs, "checked": checked, "max_rel_error": worst, "tol": a.tol,
           "ok": not failures, "failures": failures}
    if failures:
        raise _Failed("GradCheckError", f"{len(failures)} of {a.graphs} graphs exceed tol {a.tol}", out)
    return out


# ------------------------------------------------------------------ train-toy

def cmd_train_toy(a):
    from .model import ModelConfig
    from .model.weights import save_weights
    from .tensorfile import atomic_write
    from .train import TrainConfig, train_overfit
    hazy, clear = data.load_image(a.hazy), data.load_image(a.clear)
    cfg = ModelConfig.from_text(Path(a.config).read_text()) if a.config else ModelConfig.toy()
    res = train_overfit(hazy, clear, cfg, TrainConfig(steps=a.steps, lr=a.lr, seed=a.seed))
    save_weights(a.out, res.params, cfg)
    if a.trace:
        atomic_write(a.trace, res.to_jsonl().encode("utf-8"))
    return {"weights": str(a.out), "steps": a.steps, "params": res.params.num_elements(),
            "initial_psnr": _jsonable(res.initial_psnr), "final_psnr": _jsonable(res.final_psnr)}


# ------------------------------------------------------------------ plumbing

class _Failed(Exception):
    def __init__(self, kind, message, payload=None):
        super().__init__(message)
        self.kind, self.payload = kind, payload


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dehazekit", description="Remote-sensing haze removal toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.add_argument("--pretty", action="store_true", help="human-readable output")
        sp.set_defaults(func=fn)
        return sp

    seed_kw = dict(type=int, default=default_seed(), help="random seed (default from DEHAZEKIT_SEED)")
    th_kw = dict(type=float, nargs=2, default=list(DEFAULT_THRESHOLDS), metavar=("T1", "T2"))

    s = add("dehaze", cmd_dehaze, help="remove haze from one image")
    s.add_argument("--method", choices=["dcp", "mcafnet"], required=True)
    s.add_argument("--weights")
    s.add_argument("--config")
    s.add_argument("--radius", type=int, default=7)
    s.add_argument("--seed", **seed_kw)
    s.add_argument("input")
    s.add_argument("output")

    s = add("analyze", cmd_analyze, help="haze density and class per image")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--radius", type=int, default=7)
    s.add_argument("--thresholds", **th_kw)
    s.add_argument("--jobs", type=int, default=1)

    s = add("stratify", cmd_stratify, help="build a stratified dataset manifest")
    s.add_argument("--hazy", required=True)
    s.add_argument("--clear", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", **seed_kw)
    s.add_argument("--radius", type=int, default=7)
    s.add_argument("--thresholds", **th_kw)
    s.add_argument("--jobs", type=int, default=1)

    s = add("tile", cmd_tile, help="optional geo crop and band pick, then fixed-size tiles")
    s.add_argument("input")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--bands", type=int, nargs=3, metavar=("R", "G", "B"), help="channel indices to keep, in order")
    s.add_argument("--geo", help="JSON sidecar with tl/br lon,lat of the input")
    s.add_argument("--region", type=float, nargs=4, metavar=("LON0", "LAT0", "LON1", "LAT1"))

    s = add("metrics", cmd_metrics, help="quality metrics for an image pair (or two directories)")
    s.add_argument("--ref", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--niqe-model")
    s.add_argument("--jobs", type=int, default=1)

    s = add("niqe-fit", cmd_niqe_fit, help="fit a naturalness model from pristine images")
    s.add_argument("--out", required=True)
    s.add_argument("--patch", type=int, default=96)
    s.add_argument("images", nargs="+")

    s = add("model-info", cmd_model_info, help="parameter and FLOP counts")
    s.add_argument("--config")
    s.add_argument("--height", type=int, default=256)
    s.add_argument("--width", type=int, default=256)

    s = add("gradcheck", cmd_gradcheck, help="verify autodiff on random op graphs")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--step", type=float, default=1e-4)
    s.add_argument("--graphs", type=int, default=20)
    s.add_argument("--seed", **seed_kw)

    s = add("train-toy", cmd_train_toy, help="overfit the small network on one pair")
    s.add_argument("--hazy", required=True)
    s.add_argument("--clear", required=True)
    s.add_argument("--steps", type=int, default=200)
    s.add_argument("--out", required=True)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--config")
    s.add_argument("--trace")
    s.add_argument("--seed", **seed_kw)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        out = a.func(a)
    except _Failed as e:
        print(json.dumps({"error": e.kind, "message": str(e), "detail": e.payload}), file=sys.stderr)
        return EXIT_FAIL
    except (DehazeKitError, OSError, ValueError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return EXIT_FAIL
    if out is not None:
        if isinstance(out, list):
            for row in out:
                _emit(row, a.pretty)
        else:
            _emit(out, a.pretty)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
