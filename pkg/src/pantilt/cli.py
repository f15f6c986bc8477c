"""Command-line entry points: ``pantilt {calibrate,simulate,register,evaluate}``.

Exit codes: 0 success, 2 I/O or parse error, 3 numerical failure, 4 bad
configuration. Diagnostics go to stderr; stdout carries only the payload.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import dataset_io as dio
from .calibration import calibrate_rig
from .errors import ConfigError, NumericalError, ParseError
from .evaluation import rmse_n_closest
from .geometry import apply, pan_tilt_transform
from .registration import (
    CorrespondenceSet,
    Frame,
    RegistrationConfig,
    register_sequence,
    seed_pose,
)
from .synthetic import (
    PAN_STEP_DEG,
    PRESET_FRAME_COUNTS,
    RNG_NAME,
    generate_corner_tracks,
    generate_dataset,
)

log = logging.getLogger("pantilt")

EXIT_OK = 0
EXIT_IO = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4


@dataclass
class RunConfig:
    tolerance_sigma_deg: float | None = None
    alternations: int = 1
    rmse_n: int | None = None
    seed: int = 0
    seed_only: bool = False
    verbosity: int = 0

    def __post_init__(self):
        if self.alternations < 1:
            raise ConfigError(f"--alternations must be >= 1, got {self.alternations}")
        if self.tolerance_sigma_deg is not None and self.tolerance_sigma_deg < 0:
            raise ConfigError(f"--tolerance-sigma-deg must be >= 0, got {self.tolerance_sigma_deg}")
        if self.rmse_n is not None and self.rmse_n < 1:
            raise ConfigError(f"--rmse-n must be >= 1, got {self.rmse_n}")


@dataclass
class SimulationConfig:
    n_frames: int = 30
    pan_step_deg: float = PAN_STEP_DEG
    tilt_range_deg: float = 10.0
    sigma_deg: float = 0.2
    outlier_fraction: float = 0.2
    n_points: int = 2000
    n_correspondences: int = 100
    corner_noise_m: float = 0.0005

    @classmethod
    def from_sources(cls, preset: str | None, config_path: str | None) -> SimulationConfig:
        values = {}
        if preset is not None:
            if preset not in PRESET_FRAME_COUNTS:
                raise ConfigError(
                    f"unknown preset {preset!r}; choose from {', '.join(PRESET_FRAME_COUNTS)}"
                )
            values["n_frames"] = PRESET_FRAME_COUNTS[preset]
        if config_path is not None:
            with open(config_path, encoding="utf-8") as fh:
                try:
                    loaded = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON: {exc.msg}", config_path, exc.lineno) from None
            unknown = set(loaded) - set(cls.__dataclass_fields__)
            if unknown:
                raise ConfigError(f"unknown simulation keys: {', '.join(sorted(unknown))}")
            values.update(loaded)
        cfg = cls(**values)
        if cfg.n_frames < 1 or cfg.n_points < 1 or cfg.n_correspondences < 1:
            raise ConfigError("n_frames, n_points and n_correspondences must be >= 1")
        if not 0.0 <= cfg.outlier_fraction < 1.0:
            raise ConfigError(f"outlier_fraction must be in [0, 1), got {cfg.outlier_fraction}")
        if cfg.sigma_deg < 0 or cfg.corner_noise_m < 0:
            raise ConfigError("noise levels must be >= 0")
        return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _write_record(out_dir: Path, command: str, config: dict, seeds: dict | None = None) -> None:
    record = {
        "command": command,
        "config": config,
        "seeds": seeds or {},
        "rng": RNG_NAME,
        "versions": {
            "pantilt": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    text = json.dumps(record, indent=2, sort_keys=True) + "\n"
    (out_dir / "run.json").write_text(text, encoding="utf-8")


def _load_frames(manifest_path) -> list[Frame]:
    entries = dio.read_manifest(manifest_path)
    return [
        Frame(
            frame_id=e.frame_id,
            points=dio.read_ply(dio.resolve_cloud_path(manifest_path, e)),
            pan_pulse=e.pan_pulse,
            tilt_pulse=e.tilt_pulse,
        )
        for e in entries
    ]


def _collect_corr_files(paths) -> list[Path]:
    files = []
    for p in map(Path, paths or []):
        if p.is_dir():
            files.extend(sorted(p.glob("corr_*.txt")))
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(f"correspondence path not found: {p}")
    return files


def _chain_correspondences(frames, corr_sets) -> list[CorrespondenceSet]:
    by_pair = {}
    for corr in corr_sets:
        key = (corr.frame_l, corr.frame_r)
        if key in by_pair:
            raise ConfigError(f"duplicate correspondences for frames {key}")
        by_pair[key] = corr
    chained = []
    for prev, cur in zip(frames, frames[1:]):
        key = (prev.frame_id, cur.frame_id)
        if key not in by_pair:
            log.warning("no correspondences for frames %s; frame %d keeps its seed", key, cur.frame_id)
            by_pair[key] = CorrespondenceSet(np.zeros((0, 3)), np.zeros((0, 3)), frame_l=key[0], frame_r=key[1])
        chained.append(by_pair.pop(key))
    for key in by_pair:
        log.warning("ignoring correspondences for non-consecutive frames %s", key)
    return chained


def cmd_calibrate(args) -> int:
    rig = calibrate_rig(
        dio.read_tracks(args.pan_tracks),
        dio.read_tracks(args.tilt_tracks),
        dio.read_samples(args.pan_samples),
        dio.read_samples(args.tilt_samples),
    )
    out = dio.ensure_dir(args.out)
    dio.write_calibration(out / "calibration.txt", rig)
    _write_record(
        out,
        "calibrate",
        {
            "pan_tracks": str(args.pan_tracks),
            "tilt_tracks": str(args.tilt_tracks),
            "pan_samples": str(args.pan_samples),
            "tilt_samples": str(args.tilt_samples),
        },
    )
    print(out / "calibration.txt")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = SimulationConfig.from_sources(args.preset, args.config)
    data = generate_dataset(
        args.seed,
        n_frames=cfg.n_frames,
        sigma_deg=cfg.sigma_deg,
        outlier_fraction=cfg.outlier_fraction,
        n_points=cfg.n_points,
        n_correspondences=cfg.n_correspondences,
        pan_step_deg=cfg.pan_step_deg,
        tilt_range_deg=cfg.tilt_range_deg,
    )
    spec, scans = data.spec, data.scans

    out = dio.ensure_dir(args.out)
    frames_dir = dio.ensure_dir(out / "frames")
    corr_dir = dio.ensure_dir(out / "corr")
    truth_dir = dio.ensure_dir(out / "truth")
    calib_dir = dio.ensure_dir(out / "calib")

    entries = []
    for frame, truth in zip(scans.frames, scans.true_poses):
        name = f"frame_{frame.frame_id:04d}.ply"
        dio.write_ply(frames_dir / name, frame.points)
        entries.append(
            dio.ManifestEntry(
                frame.frame_id, f"frames/{name}", frame.pan_pulse, frame.tilt_pulse, *truth.degrees()
            )
        )
    dio.write_manifest(out / "manifest.txt", entries)
    for corr, labels in zip(scans.correspondences, scans.inlier_labels):
        stem = f"{corr.frame_l:04d}_{corr.frame_r:04d}"
        dio.write_correspondences(corr_dir / f"corr_{stem}.txt", corr)
        dio.write_labels(truth_dir / f"labels_{stem}.txt", corr.frame_l, corr.frame_r, labels)
    dio.write_calibration(truth_dir / "calibration.txt", spec.calibration())

    for k, axis in enumerate(("pan", "tilt")):
        tracks, samples = generate_corner_tracks(
            spec, axis, seed=data.seeds["tracks"] + k, corner_noise=cfg.corner_noise_m
        )
        dio.write_tracks(calib_dir / f"{axis}_tracks.txt", tracks)
        dio.write_samples(calib_dir / f"{axis}_samples.txt", samples)

    _write_record(
        out,
        "simulate",
        {"preset": args.preset, "simulation": asdict(cfg)},
        data.seeds,
    )
    print(out)
    return EXIT_OK


def cmd_register(args) -> int:
    run = RunConfig(
        tolerance_sigma_deg=args.tolerance_sigma_deg,
        alternations=args.alternations,
        seed_only=args.seed_only,
    )
    rig = dio.read_calibration(args.calib)
    frames = _load_frames(args.manifest)
    corr_sets = [dio.read_correspondences(p) for p in _collect_corr_files(args.corr)]
    chained = _chain_correspondences(frames, corr_sets)

    config = RegistrationConfig(run.tolerance_sigma_deg, run.alternations, run.seed_only)
    results = register_sequence(rig, frames, chained, config)

    out = dio.ensure_dir(args.out)
    dio.write_poses(out / "poses.txt", results)
    merged = [
        apply(pan_tilt_transform(rig, res.pose), frame.points) for frame, res in zip(frames, results)
    ]
    dio.write_ply(out / "merged.ply", np.concatenate(merged) if merged else np.zeros((0, 3)))
    _write_record(
        out,
        "register",
        {
            "calib": str(args.calib),
            "manifest": str(args.manifest),
            "corr": [str(p) for p in args.corr or []],
            "run": asdict(run),
        },
    )
    fallbacks = sum(r.fallback for r in results)
    if fallbacks:
        log.warning("%d frame(s) kept their seed pose", fallbacks)
    print(out / "poses.txt")
    print(out / "merged.ply")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run = RunConfig(rmse_n=args.rmse_n, seed=args.seed, seed_only=args.seed_only)
    rig = dio.read_calibration(args.calib)
    frames = _load_frames(args.manifest)
    if args.poses:
        results = {r.frame_id: r for r in dio.read_poses(args.poses)}
        missing = [f.frame_id for f in frames if f.frame_id not in results]
        if missing:
            raise ConfigError(f"poses file lacks frames {missing}")
        poses = [
            results[f.frame_id].seed_pose if run.seed_only else results[f.frame_id].pose
            for f in frames
        ]
    else:
        poses = [seed_pose(rig, f) for f in frames]

    clouds = [apply(pan_tilt_transform(rig, p), f.points) for f, p in zip(frames, poses)]
    reports = []
    for (fl, cl), (fr, cr) in zip(zip(frames, clouds), zip(frames[1:], clouds[1:])):
        n = None if run.rmse_n is None else min(run.rmse_n, len(cr))
        seed = run.seed if n is not None and n < len(cr) else None
        reports.append(rmse_n_closest(cl, cr, n=n, seed=seed, frame_ids=(fl.frame_id, fr.frame_id)))

    out = dio.ensure_dir(args.out)
    dio.write_rmse_csv(out / "rmse.csv", reports)
    _write_record(
        out,
        "evaluate",
        {"calib": str(args.calib), "manifest": str(args.manifest), "poses": args.poses,
         "run": asdict(run)},
        {"seed": run.seed},
    )  # fmt: skip

    print(f"{'frame_l':>8} {'frame_r':>8} {'n_points':>9} {'rmse_mm':>12}")
    for rep in reports:
        l, r = rep.frame_ids
        print(f"{l:>8d} {r:>8d} {rep.n_points:>9d} {rep.rmse:>12.3f}")
    if reports:
        print(f"{'mean':>8} {'':>8} {'':>9} {np.mean([r.rmse for r in reports]):>12.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pantilt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="fit rotation axes and servo maps")
    p.add_argument("--pan-tracks", required=True)
    p.add_argument("--tilt-tracks", required=True)
    p.add_argument("--pan-samples", required=True)
    p.add_argument("--tilt-samples", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="write a synthetic dataset with ground truth")
    p.add_argument("--preset", choices=sorted(PRESET_FRAME_COUNTS), default=None)
    p.add_argument("--config", default=None, help="JSON file overriding simulation settings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("register", help="register a frame sequence")
    p.add_argument("--calib", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--corr", action="append", help="correspondence file or directory (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tolerance-sigma-deg", type=float, default=None)
    p.add_argument("--alternations", type=int, default=1)
    p.add_argument("--seed-only", action="store_true", help="skip refinement, keep servo poses")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("evaluate", help="N-closest-points RMSE between consecutive frames")
    p.add_argument("--calib", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--poses", default=None, help="poses.txt from register; default: seed poses")
    p.add_argument("--rmse-n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seed-only", action="store_true", help="evaluate the seed poses of --poses")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="level=%(levelname)s logger=%(name)s msg=%(message)s",
    )
    try:
        return args.func(args)
    except (ParseError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (NumericalError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
