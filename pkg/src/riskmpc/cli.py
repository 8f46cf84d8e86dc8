"""Command-line pipeline: gen-data | train | eval | simulate | plot.

All numeric defaults reproduce the reference experiment; a JSON config file
can override any of them, and command-line flags win over the config file.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import lanegen, neuralnet, plotting
from .dynamics import BicycleParams, VehicleState
from .mpc import OcpConfig, SafetyEllipse
from .simulator import SimConfig, run_closed_loop, save_predictions, save_simlog


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "corpus": {
        "v_min": 10.0, "v_max": 40.0, "v_step": 0.1,
        "y_origin": 2.625, "y_target": 7.875,
        "t_prep": 2.0, "t_change": 4.0, "t_finish": 2.0, "dt": 0.1,
    },
    "dataset": {"window_size": 30, "train_ratio": 0.6, "seed": 42},
    "train": {"epochs": 30, "batch_size": 132, "learning_rate": 0.01,
              "seed": 0, "input_norm": "zscore"},
    "sim": {
        "steps": 11,
        "ev_initial": [28.0, 7.875, 0.0, 20.0],
        "tv_initial": [36.0, 2.625, 0.0, 18.0],
        "ev_v_ref": 20.0, "tv_v_ref": 20.0,
        "ev_lane_y": 7.875, "tv_target_lane_y": 7.875,
        "ev_y_bounds": [7.25, 8.5], "tv_merge_duration": 2.0,
        "data_dt": 0.1, "seed": 0,
        "bicycle": {"lf": 1.5, "lr": 1.5},
        "ellipse": {"a": 7.0, "b": 2.2},
        "mpc": {
            "N": 10, "T": 0.2,
            "Q": [0.0, 0.1, 0.001, 1.0], "R": [3.0, 0.5],
            "S": [0.0, 0.1, 0.001, 1.0],
            "y_bounds": [2.0, 13.75], "psi_bounds": [-1.2, 1.2],
            "v_bounds": [0.0, 70.0], "a_bounds": [-9.0, 6.0],
            "delta_bounds": [-0.52, 0.52],
            "slack_weight": 1e5, "scp_max_iterations": 10,
            "scp_tolerance": 1e-3,
        },
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {here} must be an object")
            out[key] = _merge(base[key], val, here)
        else:
            out[key] = val
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return _merge(DEFAULT_CONFIG, raw)


def _sim_config(cfg: dict) -> SimConfig:
    sim = cfg["sim"]
    mpc = sim["mpc"]
    return SimConfig(
        steps=int(sim["steps"]),
        mpc=OcpConfig(N=int(mpc["N"]), T=float(mpc["T"]),
                      Q=np.array(mpc["Q"], dtype=float),
                      R=np.array(mpc["R"], dtype=float),
                      S=np.array(mpc["S"], dtype=float),
                      y_bounds=tuple(mpc["y_bounds"]),
                      psi_bounds=tuple(mpc["psi_bounds"]),
                      v_bounds=tuple(mpc["v_bounds"]),
                      a_bounds=tuple(mpc["a_bounds"]),
                      delta_bounds=tuple(mpc["delta_bounds"]),
                      slack_weight=float(mpc["slack_weight"]),
                      scp_max_iterations=int(mpc["scp_max_iterations"]),
                      scp_tolerance=float(mpc["scp_tolerance"])),
        ellipse=SafetyEllipse(semi_axis_x=float(sim["ellipse"]["a"]),
                              semi_axis_y=float(sim["ellipse"]["b"])),
        ev_initial=VehicleState(*sim["ev_initial"]),
        tv_initial=VehicleState(*sim["tv_initial"]),
        ev_v_ref=float(sim["ev_v_ref"]), tv_v_ref=float(sim["tv_v_ref"]),
        ev_lane_y=float(sim["ev_lane_y"]),
        tv_target_lane_y=float(sim["tv_target_lane_y"]),
        ev_y_bounds=tuple(sim["ev_y_bounds"]),
        tv_merge_duration=float(sim["tv_merge_duration"]),
        bicycle=BicycleParams(lf=float(sim["bicycle"]["lf"]),
                              lr=float(sim["bicycle"]["lr"])),
        data_dt=float(sim["data_dt"]),
        seed=int(sim["seed"]))


def build_default_dataset(cfg: dict) -> tuple[ds.SplitDataset, int]:
    """Corpus -> windows -> calibration -> shuffled split, per config."""
    c = cfg["corpus"]
    geom = lanegen.LaneChangeGeometry(
        y_origin=c["y_origin"], y_target=c["y_target"],
        t_prep=c["t_prep"], t_change=c["t_change"], t_finish=c["t_finish"])
    corpus = lanegen.build_corpus(c["v_min"], c["v_max"], c["v_step"], geom, c["dt"])
    M = int(cfg["dataset"]["window_size"])
    windows = [ds.calibrate(w) for p in corpus for w in ds.segment_path(p, M)]
    split = ds.split_and_shuffle(windows, cfg["dataset"]["train_ratio"],
                                 int(cfg["dataset"]["seed"]))
    return split, len(corpus)


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    if args.v_min is not None:
        cfg["corpus"]["v_min"] = args.v_min
    if args.v_max is not None:
        cfg["corpus"]["v_max"] = args.v_max
    if args.v_step is not None:
        cfg["corpus"]["v_step"] = args.v_step
    if args.seed is not None:
        cfg["dataset"]["seed"] = args.seed
    split, n_paths = build_default_dataset(cfg)
    ds.save_dataset(split, args.out, int(cfg["dataset"]["window_size"]))
    total = len(split.train) + len(split.test)
    print(f"{n_paths} paths, {total} samples, "
          f"{len(split.train)} train, {len(split.test)} test")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    t = cfg["train"]
    if args.epochs is not None:
        t["epochs"] = args.epochs
    if args.batch_size is not None:
        t["batch_size"] = args.batch_size
    if args.lr is not None:
        t["learning_rate"] = args.lr
    if args.seed is not None:
        t["seed"] = args.seed
    split = ds.load_dataset(args.data)
    hist = ds.histories_array(split.train)
    fut = ds.futures_array(split.train)
    model = neuralnet.init_model(int(t["seed"]), hist,
                                 input_norm_kind=t["input_norm"])
    config = neuralnet.TrainConfig(epochs=int(t["epochs"]),
                                   batch_size=int(t["batch_size"]),
                                   learning_rate=float(t["learning_rate"]),
                                   seed=int(t["seed"]))
    model, curve = neuralnet.train(model, hist, fut, config)
    neuralnet.save_weights(model, args.out)
    with open(args.log, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "epoch", "batch_rmse"])
        for it, epoch, r in curve:
            writer.writerow([it, epoch, repr(r)])
    print(f"trained {len(curve)} iterations, final batch RMSE {curve[-1][2]:.4f}")
    return 0


def cmd_eval(args) -> int:
    model = neuralnet.load_weights(args.weights)
    split = ds.load_dataset(args.data)
    if not split.test:
        raise ConfigError("test set is empty")
    hist = ds.histories_array(split.test)
    fut = ds.futures_array(split.test)
    overall, per_sample = neuralnet.evaluate(model, hist, fut)
    with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample", "rmse"])
        for i, r in enumerate(per_sample):
            writer.writerow([i, repr(float(r))])
    edges = np.arange(0.0, 31.0, 1.0)
    counts, _ = np.histogram(per_sample, bins=edges)
    with open(args.hist, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(c)])
    print(f"overall test RMSE {overall:.4f} over {len(per_sample)} samples")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.steps is not None:
        cfg["sim"]["steps"] = args.steps
    if args.seed is not None:
        cfg["sim"]["seed"] = args.seed
    model = neuralnet.load_weights(args.weights)
    sim_cfg = _sim_config(cfg)
    log = run_closed_loop(sim_cfg, model)
    save_simlog(log, args.out)
    save_predictions(log, args.pred_out)
    min_v = min(r.ev.v for r in log.rows)
    min_margin = min(r.margin for r in log.rows)
    print(f"{len(log)} steps, min EV speed {min_v:.3f} m/s, "
          f"min margin {min_margin:.4f}")
    return 0


def cmd_plot(args) -> int:
    plotting.render_scenario_svg(args.log, args.pred, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskmpc",
        description="Risk-aware MPC with a learned lane-change predictor")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the lane-change dataset")
    p.add_argument("--config")
    p.add_argument("--out", default="data")
    p.add_argument("--seed", type=int)
    p.add_argument("--v-min", type=float)
    p.add_argument("--v-max", type=float)
    p.add_argument("--v-step", type=float)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the trajectory predictor")
    p.add_argument("--config")
    p.add_argument("--data", default="data")
    p.add_argument("--out", default="weights.npz")
    p.add_argument("--log", default="training_log.csv")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate the predictor on the test set")
    p.add_argument("--config")
    p.add_argument("--data", default="data")
    p.add_argument("--weights", default="weights.npz")
    p.add_argument("--report", default="eval_report.csv")
    p.add_argument("--hist", default="eval_hist.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="run the closed-loop scenario")
    p.add_argument("--config")
    p.add_argument("--weights", default="weights.npz")
    p.add_argument("--out", default="simlog.csv")
    p.add_argument("--pred-out", default="predictions.csv")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot", help="render the scenario figure as SVG")
    p.add_argument("--log", default="simlog.csv")
    p.add_argument("--pred", default="predictions.csv")
    p.add_argument("--out", default="scenario.svg")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ds.DatasetFormatError, neuralnet.WeightsFormatError,
            plotting.PlotDataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
