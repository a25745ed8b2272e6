"""Command-line surface: generate / train / predict / eval.

Every command is a pure function of its config file and input files: rerun
with the same seed and inputs, get bit-identical output bytes.  All
randomness flows from the single seed in the config (or --seed override).
Config keys can also be overridden through environment variables with the
``MNNTRAJ_`` prefix, using ``__`` for nesting, e.g.
``MNNTRAJ_LEARNING__EPOCHS=10``.

Epoch wall times are real measurements and therefore nondeterministic; the
training log written by `train` zeroes them unless --log-timings is given,
keeping the default outputs reproducible byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio, synth
from .errors import MNNError
from .evaluation import (
    config_fingerprint,
    emit_overlay,
    emit_report,
    horizon_table,
    parse_overlay,
)
from .network import Topology, load_parameters, save_parameters
from .pipeline import (
    PredictionRequest,
    Trajectory,
    differentiate,
    predict,
    predicted_positions,
)
from .training import LearningConfig, train_dataset

ENV_PREFIX = "MNNTRAJ_"


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run, loadable from one JSON file."""

    seed: int = 0
    dataset: dict = field(default_factory=dict)
    topology: Topology = field(default_factory=Topology)
    learning: LearningConfig = field(default_factory=LearningConfig)
    prediction: PredictionRequest = field(default_factory=PredictionRequest)
    split: dataio.SplitSpec | None = None
    adaptation: LearningConfig | None = None  # online adaptation during history feeding
    per_vehicle_networks: bool = False
    weight_scale: float = 0.1
    epochs_override: int | None = None  # raw "epochs" value, kept for the 0-epoch resume path

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        learning_dict = dict(d.get("learning", {}))
        raw_epochs = int(learning_dict.get("epochs", LearningConfig().epochs))
        if raw_epochs == 0:
            # "train for 0 epochs" is a valid CLI resume request; LearningConfig
            # itself enforces epochs >= 1, so keep the raw value on the side.
            learning_dict["epochs"] = 1
        adaptation = None
        if d.get("adaptation"):
            adaptation = LearningConfig.from_dict(
                dict(d["adaptation"], epochs=1, warmup_zero_steps=0)
            )
        return cls(
            seed=int(d.get("seed", 0)),
            dataset=dict(d.get("dataset", {})),
            topology=Topology.from_dict(d.get("topology", {})) if d.get("topology") else Topology(),
            learning=LearningConfig.from_dict(learning_dict),
            prediction=PredictionRequest.from_dict(d.get("prediction", {})),
            split=dataio.SplitSpec.from_dict(d["split"]) if d.get("split") else None,
            adaptation=adaptation,
            per_vehicle_networks=bool(d.get("per_vehicle_networks", False)),
            weight_scale=float(d.get("weight_scale", 0.1)),
            epochs_override=raw_epochs,
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "dataset": self.dataset,
            "topology": self.topology.to_dict(),
            "learning": dict(self.learning.to_dict(), epochs=self.epochs_override
                             if self.epochs_override is not None else self.learning.epochs),
            "prediction": self.prediction.to_dict(),
            "split": self.split.to_dict() if self.split else None,
            "adaptation": {"eta": self.adaptation.eta, "eta_prime": self.adaptation.eta_prime}
                          if self.adaptation else None,
            "per_vehicle_networks": self.per_vehicle_networks,
            "weight_scale": self.weight_scale,
        }

    def fingerprint(self) -> str:
        return config_fingerprint(self.to_dict())


def _load_json(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise MNNError(f"{p}: file not found")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise MNNError(f"{p}:{exc.lineno}: invalid JSON ({exc.msg})") from exc


def load_config(path: str | Path, seed_override: int | None = None) -> ExperimentConfig:
    doc = _apply_env_overrides(_load_json(path))
    try:
        cfg = ExperimentConfig.from_dict(doc)
    except MNNError as exc:
        raise MNNError(f"{path}: {exc}") from exc
    if seed_override is not None:
        cfg.seed = seed_override
    return cfg


def _apply_env_overrides(doc: dict) -> dict:
    for key, raw in sorted(os.environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = value
    return doc


def _load_database(cfg: ExperimentConfig, data_path: str | None = None) -> dataio.TrajectoryDatabase:
    ds = dict(cfg.dataset)
    if data_path:
        ds["csv"] = data_path
    if "csv" in ds:
        return dataio.load_csv(
            ds["csv"],
            schema=ds.get("schema"),
            rate_hz=float(ds.get("rate_hz", 10.0)),
            unit_to_m=float(ds.get("unit_to_m", 1.0)),
            provenance=str(ds.get("provenance", "ngsim-csv")),
        )
    if "scenario" in ds:
        return _fleet_from_scenario(_load_json(ds["scenario"]), default_seed=cfg.seed)
    raise MNNError("config.dataset needs either a 'csv' path or a 'scenario' file")


def _fleet_from_scenario(scenario: dict, default_seed: int = 0) -> dataio.TrajectoryDatabase:
    return synth.generate_fleet(
        count=int(scenario.get("count", 20)),
        mix=scenario.get("mix"),
        seed=int(scenario.get("seed", default_seed)),
        duration_s=float(scenario.get("duration_s", 60.0)),
        rate_hz=float(scenario.get("rate_hz", 20.0)),
        noise_sigma=float(scenario.get("noise_sigma", 0.05)),
    )


# --- subcommands -------------------------------------------------------------


def cmd_generate(args) -> int:
    scenario = _load_json(args.spec)
    if args.seed is not None:
        scenario["seed"] = args.seed
    try:
        db = _fleet_from_scenario(scenario)
    except MNNError as exc:
        raise MNNError(f"{args.spec}: {exc}") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_csv(db, out / "fleet.csv")
    dataio.save_manifest(db, out / "manifest.json")
    print(f"wrote {len(db)} vehicles to {out / 'fleet.csv'}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fp = cfg.fingerprint()

    db = _load_database(cfg)
    if cfg.split is not None:
        train_db, test_db = dataio.split(db, cfg.split)
        (out / "split.json").write_text(json.dumps({
            "train": train_db.vehicle_ids(), "test": test_db.vehicle_ids(),
        }, indent=2, sort_keys=True) + "\n")
    else:
        train_db = db

    initial = load_parameters(args.params) if args.params else None

    if cfg.epochs_override == 0:
        if initial is None:
            raise MNNError("epochs=0 requires --params to resume from")
        save_parameters(initial, out / "params.json", extra={"config_fingerprint": fp})
        (out / "training_log.jsonl").write_text("")
        print(f"config fingerprint: {fp}")
        return 0

    sequences = dataio.to_differentials(train_db)
    meta = {"config_fingerprint": fp}
    if cfg.per_vehicle_networks:
        for seq in sequences:
            params, log = train_dataset(
                [seq], cfg.learning, topology=cfg.topology, seed=cfg.seed,
                weight_scale=cfg.weight_scale, params=initial,
            )
            save_parameters(params, out / f"params_{seq.vehicle_id}.json", extra=meta)
            _append_log(out / "training_log.jsonl", log, args.log_timings)
    else:
        params, log = train_dataset(
            sequences, cfg.learning, topology=cfg.topology, seed=cfg.seed,
            weight_scale=cfg.weight_scale, params=initial,
        )
        save_parameters(params, out / "params.json", extra=meta)
        (out / "training_log.jsonl").write_text(log.to_jsonl(include_timing=args.log_timings))

    print(f"config fingerprint: {fp}")
    return 0


def _append_log(path: Path, log, include_timing: bool) -> None:
    with path.open("a") as fh:
        fh.write(log.to_jsonl(include_timing=include_timing))


def cmd_predict(args) -> int:
    cfg = load_config(args.config, args.seed)
    params = load_parameters(args.params)
    db = _load_database(cfg, data_path=args.data)
    out = Path(args.out) / "overlays"
    out.mkdir(parents=True, exist_ok=True)

    req = cfg.prediction
    rate = db.sample_rate_hz
    n_hist = req.history_steps(rate)
    n_horizon = req.horizon_steps(rate)
    written = 0
    for traj in db:
        if len(traj) < n_hist + n_horizon + 1:
            print(
                f"skipping {traj.vehicle_id}: {len(traj)} points < "
                f"{n_hist + n_horizon + 1} needed for history+horizon",
                file=sys.stderr,
            )
            continue
        history_window = Trajectory(traj.vehicle_id, rate, traj.points[: n_hist + 1])
        truth = Trajectory(traj.vehicle_id, rate, traj.points[n_hist + 1 : n_hist + 1 + n_horizon])
        pred_diff = predict(params, req, differentiate(history_window), adapt=cfg.adaptation)
        prediction = Trajectory(traj.vehicle_id, rate, predicted_positions(pred_diff))
        shown_history = Trajectory(traj.vehicle_id, rate, history_window.points[1:])
        (out / f"{traj.vehicle_id}.csv").write_text(
            emit_overlay(prediction, truth, shown_history)
        )
        written += 1
    print(f"wrote {written} overlay files to {out}")
    return 0 if written else 1


def cmd_eval(args) -> int:
    overlay_dir = Path(args.overlays)
    files = sorted(overlay_dir.glob("*.csv"))
    if not files:
        raise MNNError(f"no overlay files in {overlay_dir}")

    predictions, truths = [], []
    rate = None
    for f in files:
        vid, _, pred, truth, t_pred = parse_overlay(f.read_text())
        if pred.shape[0] == 0:
            continue
        if np.isnan(truth).any():
            raise MNNError(f"{f}: ground truth missing; prediction/truth sets do not match")
        if len(t_pred) > 1:
            step = t_pred[1] - t_pred[0]
            rate = rate or (1.0 / step)
        predictions.append(Trajectory(vid, rate or 1.0, pred))
        truths.append(Trajectory(vid, rate or 1.0, truth))
    if rate is None:
        raise MNNError("could not infer the sample rate from overlay files")

    horizons = [float(h) for h in args.horizons.split(",")]
    echo = {"files": [f.name for f in files], "horizons": horizons,
            "sample_rate_hz": rate}
    report = horizon_table(predictions, truths, rate, horizons, config_echo=echo)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format in ("structured", "both"):
        (out / "report.json").write_text(emit_report(report, "structured"))
    if args.format in ("table-text", "both"):
        (out / "report.txt").write_text(emit_report(report, "table-text"))
    print(emit_report(report, "table-text"), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mnntraj",
        description="Memory neuron network toolkit for look-ahead trajectory prediction",
        epilog="Config keys can be overridden via environment variables with the "
               "MNNTRAJ_ prefix, using __ for nesting (MNNTRAJ_LEARNING__EPOCHS=10). "
               "All commands are deterministic for fixed configs, inputs and seeds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic fleet CSV from a scenario file")
    p.add_argument("--spec", required=True, help="scenario JSON (count, mix, duration_s, rate_hz, noise_sigma, seed)")
    p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a network per the experiment config")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--params", default=None, help="resume from a saved parameter file")
    p.add_argument("--log-timings", action="store_true",
                   help="write real epoch wall times (makes the log nondeterministic)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="closed-loop prediction, one overlay file per vehicle")
    p.add_argument("--config", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--data", default=None, help="trajectory CSV (defaults to config dataset)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="horizon RMSE report from overlay files")
    p.add_argument("--overlays", required=True, help="directory of overlay CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--horizons", default="1,2,3,4,5", help="comma-separated horizons in seconds")
    p.add_argument("--format", choices=["structured", "table-text", "both"], default="both")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
