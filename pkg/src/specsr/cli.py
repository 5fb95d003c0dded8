"""Command-line entry point.

Subcommands: simulate, train, predict, evaluate, unmix, verify.
Exit codes: 0 ok, 1 check/run failure, 2 usage or IO error.
All tabular outputs are CSV; report commands also render PNG figures next to
them. Every run writes a resolved-config snapshot beside its outputs.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import figures
from .cube import (HsiCube, apply_illumination, image_cube, load_cube,
                   load_illumination, load_srf, save_cube, simulate_input)
from .errors import (ConfigError, ExtractionError, FormatError, InputError,
                     MetricError, ParameterError, ShapeError, SimulationError,
                     TrainingError)
from .metrics import compute_report, write_report_csv
from .network import NetworkSpec, build_network, predict_tiled
from .optim import TrainConfig, checkpoint_sha256, load_checkpoint, load_checkpoint_into
from .sampling import load_split_file
from .trainer import train, write_loss_log
from .unmixing import fcls_abundances, save_endmembers_csv, vca_extract
from .verify import FAULT_KINDS, run_all

log = logging.getLogger("specsr")

# ---------------------------------------------------------------------------
# Config handling: `key = value` lines, `#` comments, unknown keys rejected.
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS: dict[str, str] = {
    "network.in_channels": "3",
    "network.out_channels": "31",
    "network.num_scales": "5",
    "network.layers_per_block": "4",
    "network.growth_filters": "16",
    "network.stem_filters": "32",
    "network.dropout_rate": "0.5",
    "train.lr_schedule": "100:0.002,200:0.0002",
    "train.l2_coeff": "1e-06",
    "train.beta1": "0.9",
    "train.beta2": "0.999",
    "train.epsilon": "1e-08",
    "train.batch_size": "16",
    "train.rng_seed": "0",
    "train.patches_per_image": "200",
    "train.augment": "true",
    "data.cubes": "",
    "data.inputs": "",
    "data.split": "",
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {ln}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def resolve_train_config(args) -> dict[str, str]:
    resolved = dict(TRAIN_DEFAULTS)

    def apply(updates: dict[str, str], source: str) -> None:
        for key, val in updates.items():
            if key not in resolved:
                raise ConfigError(f"{source}: unknown config key {key!r}")
            resolved[key] = val

    if args.config:
        apply(parse_config_text(Path(args.config).read_text(), args.config), args.config)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        overrides[key.strip()] = val.strip()
    apply(overrides, "--set")
    if args.cubes:
        resolved["data.cubes"] = args.cubes
    if args.inputs:
        resolved["data.inputs"] = args.inputs
    if args.split:
        resolved["data.split"] = args.split
    if args.seed is not None:
        resolved["train.rng_seed"] = str(args.seed)
    return resolved


def _parse_schedule(text: str) -> list[tuple[int, float]]:
    phases = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ConfigError(f"lr_schedule phase must be 'epochs:lr', got {part!r}")
        epochs, _, lr = part.partition(":")
        try:
            phases.append((int(epochs), float(lr)))
        except ValueError as e:
            raise ConfigError(f"bad lr_schedule phase {part!r}: {e}") from e
    if not phases:
        raise ConfigError(f"empty lr_schedule: {text!r}")
    return phases


def _parse_bool(val: str, key: str) -> bool:
    if val.lower() in ("true", "1", "yes"):
        return True
    if val.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key} must be true/false, got {val!r}")


def config_objects(resolved: dict[str, str]) -> tuple[NetworkSpec, TrainConfig]:
    try:
        spec = NetworkSpec(
            in_channels=int(resolved["network.in_channels"]),
            out_channels=int(resolved["network.out_channels"]),
            num_scales=int(resolved["network.num_scales"]),
            layers_per_block=int(resolved["network.layers_per_block"]),
            growth_filters=int(resolved["network.growth_filters"]),
            stem_filters=int(resolved["network.stem_filters"]),
            dropout_rate=float(resolved["network.dropout_rate"]),
        )
        cfg = TrainConfig(
            lr_schedule=_parse_schedule(resolved["train.lr_schedule"]),
            l2_coeff=float(resolved["train.l2_coeff"]),
            dropout_rate=float(resolved["network.dropout_rate"]),
            beta1=float(resolved["train.beta1"]),
            beta2=float(resolved["train.beta2"]),
            epsilon=float(resolved["train.epsilon"]),
            batch_size=int(resolved["train.batch_size"]),
            rng_seed=int(resolved["train.rng_seed"]),
            patches_per_image=int(resolved["train.patches_per_image"]),
            augment=_parse_bool(resolved["train.augment"], "train.augment"),
        )
    except ValueError as e:
        raise ConfigError(f"bad config value: {e}") from e
    spec.validate()
    cfg.validate()
    return spec, cfg


def write_snapshot(path: Path, values: dict[str, str]) -> None:
    lines = [f"{k} = {v}" for k, v in values.items()]
    path.write_text("\n".join(lines) + "\n")


def _cube_ids(directory: Path) -> list[str]:
    return sorted(p.stem for p in directory.glob("*.json"))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cube_dir, out_dir = Path(args.cubes), Path(args.out)
    srf_path = Path(args.srf)
    if not srf_path.exists():
        print(f"error: SRF file not found: {srf_path}", file=sys.stderr)
        return 2
    srf = load_srf(srf_path)
    ids = _cube_ids(cube_dir)
    if not ids:
        print(f"error: no cubes found in {cube_dir}", file=sys.stderr)
        return 2
    out_dir.mkdir(parents=True, exist_ok=True)
    write_snapshot(out_dir / "resolved_config_simulate.txt",
                   {"cubes": str(cube_dir), "srf": str(srf_path), "out": str(out_dir)})
    failures = 0
    for image_id in ids:
        try:
            cube = load_cube(cube_dir / image_id)
            sim = simulate_input(cube, srf)
            save_cube(image_cube(sim, scale=cube.scale), out_dir / image_id)
            print(f"simulated {image_id}: {srf.out_channels} channels "
                  f"{cube.height}x{cube.width}")
        except (FormatError, SimulationError) as e:
            print(f"error: {image_id}: {e}", file=sys.stderr)
            failures += 1
    return 2 if failures else 0


def cmd_train(args) -> int:
    resolved = resolve_train_config(args)
    spec, cfg = config_objects(resolved)
    if not resolved["data.cubes"] or not resolved["data.inputs"]:
        raise ConfigError("train needs data.cubes and data.inputs (or --cubes/--inputs)")
    cube_dir = Path(resolved["data.cubes"])
    input_dir = Path(resolved["data.inputs"])
    ids = _cube_ids(cube_dir)
    if resolved["data.split"]:
        train_ids, _ = load_split_file(resolved["data.split"])
    else:
        train_ids = ids
    if not train_ids:
        raise InputError("train split is empty")
    missing = [i for i in train_ids if i not in set(ids)]
    if missing:
        raise InputError(f"split ids not found under {cube_dir}: {missing}")

    dataset = []
    for image_id in train_ids:
        target = load_cube(cube_dir / image_id)
        inp = load_cube(input_dir / image_id)
        if inp.bands != spec.in_channels:
            raise ConfigError(
                f"{image_id}: input has {inp.bands} channels, network expects "
                f"{spec.in_channels}"
            )
        dataset.append((image_id, inp.data, target))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_snapshot(out_dir / "resolved_config_train.txt", resolved)
    (out_dir / "network_spec.txt").write_text(spec.to_config_text())

    init_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.rng_seed, 0xA1]).generate_state(4)
    )
    net = build_network(spec, init_rng)
    log.info("training %d images, %d parameters", len(dataset), net.num_params)
    result = train(net, dataset, cfg, out_dir=out_dir)
    write_loss_log(out_dir / "loss_log.csv", result.history)
    figures.loss_curve(result.history, out_dir / "loss_curve.png")
    print(f"trained {result.steps} steps over {result.epochs} epochs; "
          f"checkpoints: {[str(p) for p in result.checkpoints]}")
    return 0


def _reflect_pad_to_tiles(image: np.ndarray, tile: int) -> tuple[np.ndarray, int, int]:
    c, h, w = image.shape
    ph = (tile - h % tile) % tile if h >= tile else tile - h
    pw = (tile - w % tile) % tile if w >= tile else tile - w
    if ph or pw:
        image = np.pad(image, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    return image, h, w


def cmd_predict(args) -> int:
    ckpt_path = Path(args.checkpoint)
    header, _ = load_checkpoint(ckpt_path)
    if "spec_config" not in header:
        raise FormatError(f"{ckpt_path}: checkpoint does not embed a network spec")
    spec = NetworkSpec.from_config_text(header["spec_config"])
    net = build_network(spec, np.random.default_rng(0))
    load_checkpoint_into(ckpt_path, net.store, expected_hash=spec.spec_hash())

    inp = load_cube(args.input)
    if inp.bands != spec.in_channels:
        raise ConfigError(
            f"checkpoint expects {spec.in_channels} input channels, "
            f"{args.input} has {inp.bands}"
        )
    padded, h, w = _reflect_pad_to_tiles(inp.data, args.tile)
    pred = predict_tiled(net, padded, tile=args.tile, overlap=args.overlap,
                         threads=args.threads)[:, :h, :w]

    if args.wavelengths_from:
        wavelengths = load_cube(args.wavelengths_from).wavelengths
        if wavelengths.size != spec.out_channels:
            raise ConfigError(
                f"--wavelengths-from cube has {wavelengths.size} bands, "
                f"network emits {spec.out_channels}"
            )
    elif spec.out_channels == 31:
        wavelengths = 400.0 + 10.0 * np.arange(31)
    else:
        wavelengths = np.arange(spec.out_channels, dtype=np.float64)

    out_cube = HsiCube(
        data=pred,
        wavelengths=wavelengths,
        scale=inp.scale,
        meta={"checkpoint_sha256": checkpoint_sha256(ckpt_path), "step": header["step"]},
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_cube(out_cube, out_path)
    write_snapshot(out_path.with_suffix(".config.txt"), {
        "checkpoint": str(ckpt_path), "input": str(args.input), "out": str(out_path),
        "tile": str(args.tile), "overlap": str(args.overlap),
        "wavelengths_from": str(args.wavelengths_from or ""),
    })
    print(f"predicted {spec.out_channels} bands for {h}x{w} image -> {out_path}")
    return 0


def cmd_evaluate(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    out_dir = Path(args.out)
    gt_ids = _cube_ids(gt_dir)
    if not gt_ids:
        print(f"error: no ground-truth cubes in {gt_dir}", file=sys.stderr)
        return 2
    pred_ids = set(_cube_ids(pred_dir))
    missing = [i for i in gt_ids if i not in pred_ids]
    if missing:
        for image_id in missing:
            print(f"error: missing prediction for id '{image_id}'", file=sys.stderr)
        return 2
    rows = []
    for image_id in gt_ids:
        rep = compute_report(load_cube(pred_dir / image_id), load_cube(gt_dir / image_id))
        rows.append((image_id, rep))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_snapshot(out_dir / "resolved_config_evaluate.txt",
                   {"pred": str(pred_dir), "gt": str(gt_dir), "out": str(out_dir)})
    write_report_csv(out_dir / "metrics.csv", rows)
    wavelengths = load_cube(gt_dir / gt_ids[0]).wavelengths
    figures.per_band_rmse(rows, wavelengths, out_dir / "per_band_rmse.png")
    figures.metric_bars(rows, out_dir / "metrics_by_image.png")

    print(f"{'image':<20} {'RMSE':>10} {'RMSERel':>10} {'SAM[deg]':>10}")
    for image_id, rep in rows:
        print(f"{image_id:<20} {rep.rmse:>10.4f} {rep.rmse_rel:>10.4f} {rep.sam_deg:>10.4f}")
    print(f"{'aggregate':<20} {np.mean([r.rmse for _, r in rows]):>10.4f} "
          f"{np.mean([r.rmse_rel for _, r in rows]):>10.4f} "
          f"{np.mean([r.sam_deg for _, r in rows]):>10.4f}")
    return 0


def cmd_unmix(args) -> int:
    cube = load_cube(args.cube)
    rng = np.random.default_rng(args.seed)
    ems = vca_extract(cube, args.k, rng)
    ab = fcls_abundances(cube, ems)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_snapshot(out_dir / "resolved_config_unmix.txt", {
        "cube": str(args.cube), "k": str(args.k), "seed": str(args.seed),
        "out": str(out_dir),
    })
    save_endmembers_csv(out_dir / "endmembers.csv", ems)
    save_cube(
        HsiCube(ab.maps.astype(np.float32), np.arange(args.k, dtype=np.float64)),
        out_dir / "abundances",
    )
    figures.endmember_spectra(ems, out_dir / "endmembers.png")
    figures.abundance_grid(ab.maps, out_dir / "abundances.png")
    print(f"extracted {args.k} endmembers from {cube.height}x{cube.width}x{cube.bands} cube")
    return 0


def cmd_illum(args) -> int:
    cube = load_cube(args.cube)
    illum = load_illumination(args.illumination)
    out = apply_illumination(cube, illum, args.mode)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_cube(out, out_path)
    write_snapshot(out_path.with_suffix(".config.txt"), {
        "cube": str(args.cube), "illumination": str(args.illumination),
        "mode": args.mode, "out": str(out_path),
    })
    print(f"{args.mode} by illumination: {cube.bands} bands -> {out_path}")
    return 0


def cmd_verify(args) -> int:
    results = run_all(seed=args.seed, fault=args.inject_fault)
    for r in results:
        print(r.line())
    n_fail = sum(not r.passed for r in results)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_snapshot(out_dir / "resolved_config_verify.txt",
                       {"seed": str(args.seed), "out": str(out_dir),
                        "inject_fault": str(args.inject_fault or "")})
        lines = ["check,measured,tolerance,passed,seconds"]
        for r in results:
            lines.append(f"{r.name},{r.measured:.9g},{r.tolerance:.9g},{int(r.passed)},{r.seconds:.3f}")
        (out_dir / "verify_report.csv").write_text("\n".join(lines) + "\n")
        figures.verify_chart(results, out_dir / "verify_report.png")
    if n_fail:
        print(f"{n_fail} check(s) FAILED", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specsr",
        description="Spectral super-resolution: simulate broad-band inputs, train, "
                    "predict hyperspectral cubes, evaluate, unmix, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate cubes into broad-band images via an SRF")
    p.add_argument("--cubes", required=True, help="directory of hyperspectral cubes")
    p.add_argument("--srf", required=True, help="spectral response CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the network")
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key")
    p.add_argument("--cubes", help="directory of target cubes (data.cubes)")
    p.add_argument("--inputs", help="directory of input images (data.inputs)")
    p.add_argument("--split", help="split file; its train: section is used")
    p.add_argument("--seed", type=int, help="rng seed (train.rng_seed)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict a hyperspectral cube from an input image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="input image (cube container)")
    p.add_argument("--out", required=True, help="output cube path")
    p.add_argument("--tile", type=int, default=64)
    p.add_argument("--overlap", type=int, default=8)
    p.add_argument("--threads", type=int, default=1, help="tile prediction workers")
    p.add_argument("--wavelengths-from", help="cube whose wavelengths label the output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="compare predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("unmix", help="extract endmembers and abundance maps")
    p.add_argument("--cube", required=True)
    p.add_argument("--k", type=int, default=15, help="endmember count (>= 2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("illum", help="reflectance <-> radiance: multiply or divide "
                                     "a cube by a per-band illumination vector")
    p.add_argument("--cube", required=True)
    p.add_argument("--illumination", required=True,
                   help="CSV with header wavelength_nm,value")
    p.add_argument("--mode", choices=("multiply", "divide"), required=True)
    p.add_argument("--out", required=True, help="output cube path")
    p.set_defaults(func=cmd_illum)

    p = sub.add_parser("verify", help="run the self-check battery")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write verify_report.csv + figure here")
    p.add_argument("--inject-fault", choices=FAULT_KINDS,
                   help="testing hook: corrupt a kernel to exercise failure paths")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InputError, FormatError, ParameterError, ShapeError,
            SimulationError, FileNotFoundError, NotADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (TrainingError, ExtractionError, MetricError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
