"""Command-line surface: synth | train | eval | ablate.

Every experiment is driven by one JSON config with sections "train",
"model", and "data"; any leaf is overridable with a dotted flag such as
`--train.alpha 0.0`. The merged config is echoed into the run directory
so a run can be reproduced by feeding it back via --config.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data as D
from . import metrics as M
from . import training as TR
from .errors import ConfigError, DataError, NumericError


def default_config():
    return {
        "train": asdict(TR.TrainConfig()),
        "model": {"base_width": 16, "depth": 2, "blocks_per_stage": 1, "d_state": 8},
        "data": {"dir": "", "crf": ""},
        "out": "run",
    }


def _coerce(value, like):
    if isinstance(like, bool):
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(like, int) and not isinstance(like, bool):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def apply_overrides(config, tokens):
    """Apply dotted --section.key value pairs; unknown keys are rejected."""
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"expected a --key, got {tok!r}")
        if i + 1 >= len(tokens):
            raise ConfigError(f"missing value for {tok}")
        key, value = tok[2:], tokens[i + 1]
        node = config
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError(f"unknown config key: {key}")
            node = node[p]
        leaf = parts[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"unknown config key: {key}")
        node[leaf] = _coerce(value, node[leaf])
        i += 2
    return config


def load_config(path=None, overrides=()):
    config = default_config()
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise DataError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}")
        for section, values in user.items():
            if section == "out":
                config["out"] = values
                continue
            if section not in config or not isinstance(values, dict):
                raise ConfigError(f"unknown config key: {section}")
            for k, v in values.items():
                if k not in config[section]:
                    raise ConfigError(f"unknown config key: {section}.{k}")
                config[section][k] = v
    return apply_overrides(config, list(overrides))


def _run_dir(config):
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "ckpt").mkdir(exist_ok=True)
    (out / "img").mkdir(exist_ok=True)
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True))
    return out


def load_scene_dir(path):
    """Aligned (cube, rgb) pairs from a directory of FRNC files.

    RGB companions are <stem>_rgb.frnc; scenes without one are projected
    through the directory's crf.csv.
    """
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"data directory not found: {path}")
    cubes = sorted(p for p in path.glob("*.frnc") if not p.stem.endswith("_rgb"))
    if not cubes:
        raise DataError(f"no .frnc cubes in {path}")
    crf = None
    scenes = []
    for p in cubes:
        cube = D.load_cube(p)
        companion = p.with_name(p.stem + "_rgb.frnc")
        if companion.exists():
            rgb = D.load_cube(companion).data
        else:
            if crf is None:
                crf_path = path / "crf.csv"
                if not crf_path.exists():
                    raise DataError(f"{p.name} has no RGB companion and {crf_path} is missing")
                crf = D.load_crf_csv(crf_path)
            rgb = D.crf_project(cube, crf)
        scenes.append((cube.data, rgb))
    return scenes


def _save_pgm(path, img):
    """Binary 16-bit PGM of a [H,W] image already in [0,1]."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    q = np.round(arr * 65535.0).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{q.shape[1]} {q.shape[0]}\n65535\n".encode())
        f.write(q.tobytes())


def _build_from_config(config):
    tcfg = TR.TrainConfig(**config["train"])
    plan, gens = TR.build_model(tcfg, config["model"])
    return tcfg, plan, gens


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    crf = D.gaussian_crf(args.bands)
    D.save_crf_csv(crf, out / "crf.csv")
    for i in range(args.scenes):
        spec = D.make_scene_spec(E=args.endmembers, L=args.bands, H=args.size, W=args.size, seed=args.seed + i)
        cube = D.synth_scene(spec)
        D.save_cube(cube, out / f"scene_{i:03d}.frnc")
        rgb = D.crf_project(cube, crf)
        D.save_cube(D.SpectralCube(data=rgb), out / f"scene_{i:03d}_rgb.frnc")
    print(f"wrote {args.scenes} scenes ({args.bands}x{args.size}x{args.size}) to {out}")
    return 0


def _train_once(config, scenes, log_path=None, ckpt_path=None):
    tcfg, plan, gens = _build_from_config(config)
    for cube, _ in scenes:
        if cube.shape[0] != tcfg.bands:
            raise DataError(f"scene has {cube.shape[0]} bands but config expects {tcfg.bands}")
    TR.train_loop(tcfg, scenes, plan, gens, log_path=log_path, ckpt_path=ckpt_path, config_snapshot=config)
    return tcfg, plan, gens


def cmd_train(args, overrides):
    config = load_config(args.config, overrides)
    out = _run_dir(config)
    scenes = load_scene_dir(config["data"]["dir"])
    tcfg, plan, gens = _train_once(
        config, scenes, log_path=out / "log.jsonl", ckpt_path=out / "ckpt" / "final.frnw"
    )
    agg, _ = TR.evaluate(plan, gens, scenes, S=tcfg.refs, use_rgb=tcfg.use_rgb, alpha=tcfg.alpha)
    (out / "report.json").write_text(agg.to_json(indent=2))
    print(f"final training-set psnr_db={agg.psnr_db:.2f}; run dir: {out}")
    return 0


def _probe_pixels(H, W):
    return [(H // 2, W // 2), (H // 4, W // 4), (3 * H // 4, 3 * W // 4)]


def cmd_eval(args):
    step, blobs, _, config = TR.load_checkpoint(args.checkpoint)
    if config is None:
        raise DataError(f"missing config sidecar for {args.checkpoint}")
    if "train" in config:  # nested experiment config from the CLI
        tcfg = TR.TrainConfig(**config["train"])
        model_kw = config.get("model", default_config()["model"])
    else:  # flat TrainConfig snapshot written by train_loop directly
        tcfg = TR.TrainConfig(**{k: v for k, v in config.items() if k in asdict(TR.TrainConfig())})
        model_kw = default_config()["model"]
    plan, gens = TR.build_model(tcfg, model_kw)
    TR.load_params_into(gens, blobs)
    scenes = load_scene_dir(args.data)
    for cube, _ in scenes:
        if cube.shape[0] != tcfg.bands:
            raise DataError(f"checkpoint reconstructs {tcfg.bands} bands but data has {cube.shape[0]}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    img_dir = out / "img"
    img_dir.mkdir(exist_ok=True)
    wavelengths = np.linspace(400.0, 700.0, tcfg.bands)
    rows = []
    for s, (cube, rgb) in enumerate(scenes):
        pred = TR.predict_cube(rgb, plan, gens, S=tcfg.refs, use_rgb=tcfg.use_rgb, alpha=tcfg.alpha)
        rep = M.compute_report(pred, cube)
        rows.append(rep.to_dict())
        clipped = np.clip(pred, 0.0, 1.0)
        for b in range(tcfg.bands):
            _save_pgm(img_dir / f"scene{s:02d}_band{b:02d}_pred.pgm", clipped[b])
            _save_pgm(img_dir / f"scene{s:02d}_band{b:02d}_gt.pgm", cube[b])
            _save_pgm(img_dir / f"scene{s:02d}_band{b:02d}_residual.pgm", np.abs(clipped[b] - cube[b]))
        for y, x in _probe_pixels(cube.shape[1], cube.shape[2]):
            lines = ["wavelength_nm,gt,pred"]
            for b in range(tcfg.bands):
                lines.append(f"{wavelengths[b]:.4f},{cube[b, y, x]:.8f},{clipped[b, y, x]:.8f}")
            (out / f"curve_s{s:02d}_y{y}_x{x}.csv").write_text("\n".join(lines) + "\n")
    agg, _ = TR.evaluate(plan, gens, scenes, S=tcfg.refs, use_rgb=tcfg.use_rgb, alpha=tcfg.alpha)
    report = {"aggregate": json.loads(agg.to_json()), "per_scene": rows, "checkpoint_step": step}
    (out / "report.json").write_text(json.dumps(report, indent=2))
    print(json.dumps(report["aggregate"]))
    return 0


_ABLATION_AXES = ("alpha", "levels", "refs")


def ablation_rows(axis, values, base_config):
    """Run configs for one ablation axis, including its 'w/o' row."""
    if axis not in _ABLATION_AXES:
        raise ConfigError(f"invalid ablation axis {axis!r}; choose from {_ABLATION_AXES}")
    rows = []
    for v in values:
        cfg = copy.deepcopy(base_config)
        if axis == "alpha":
            cfg["train"]["alpha"] = float(v)
        elif axis == "levels":
            cfg["train"]["levels"] = int(v)
        else:
            cfg["train"]["refs"] = int(v)
        rows.append((f"{axis}={v}", cfg))
    wo = copy.deepcopy(base_config)
    if axis == "alpha":
        wo["train"]["alpha"] = 0.0
        rows.append(("w/o mask", wo))
    elif axis == "levels":
        wo["train"]["levels"] = 1
        rows.append(("one-shot", wo))
    else:
        wo["train"]["use_rgb"] = False
        rows.append(("w/o RGB", wo))
    return rows


def _format_table(results):
    header = ["setting", "psnr_db", "rmse_255", "ssim", "uiqi"]
    md = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    csv = [",".join(header)]
    for name, rep in results:
        vals = [f"{rep.psnr_db:.2f}", f"{rep.rmse_255:.2f}", f"{rep.ssim:.4f}", f"{rep.uiqi:.4f}"]
        md.append("| " + " | ".join([name] + vals) + " |")
        csv.append(",".join([name] + vals))
    return "\n".join(md) + "\n", "\n".join(csv) + "\n"


def cmd_ablate(args, overrides):
    base = load_config(args.config, overrides)
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise ConfigError("--values must list at least one setting")
    rows = ablation_rows(args.axis, values, base)
    out = Path(base["out"])
    out.mkdir(parents=True, exist_ok=True)
    scenes = load_scene_dir(base["data"]["dir"])
    results = []
    for name, cfg in rows:
        tcfg, plan, gens = _train_once(cfg, scenes)
        agg, _ = TR.evaluate(plan, gens, scenes, S=tcfg.refs, use_rgb=tcfg.use_rgb, alpha=tcfg.alpha)
        results.append((name, agg))
        print(f"{name}: psnr_db={agg.psnr_db:.2f}")
    md, csv = _format_table(results)
    (out / "ablation.md").write_text(md)
    (out / "ablation.csv").write_text(csv)
    print(md)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="specrecon", description="Recursive spectral reconstruction experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate synthetic spectral scenes")
    p_synth.add_argument("--scenes", type=int, default=10)
    p_synth.add_argument("--bands", type=int, default=32)
    p_synth.add_argument("--size", type=int, default=96)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--endmembers", type=int, default=4)
    p_synth.add_argument("--out", required=True)

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--config", default=None)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out", required=True)

    p_ablate = sub.add_parser("ablate", help="run an ablation sweep")
    p_ablate.add_argument("--axis", required=True)
    p_ablate.add_argument("--values", required=True)
    p_ablate.add_argument("--config", default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "synth":
            if extra:
                raise ConfigError(f"unknown argument: {extra[0]}")
            return cmd_synth(args)
        if args.command == "train":
            return cmd_train(args, extra)
        if args.command == "eval":
            if extra:
                raise ConfigError(f"unknown argument: {extra[0]}")
            return cmd_eval(args)
        return cmd_ablate(args, extra)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
