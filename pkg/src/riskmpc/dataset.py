"""Windowing, calibration, shuffling, and CSV persistence of trajectory data.

Each sample pairs a 30-point history with its 30-point future; calibration
subtracts the future's first longitudinal coordinate from every x so the
splitting point sits at x=0.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lanegen import LanePath

WINDOW_SIZE = 30


class DatasetFormatError(ValueError):
    """Raised when a persisted dataset file fails validation."""


@dataclass(frozen=True)
class TrajectoryWindow:
    history: np.ndarray  # (M, 2)
    future: np.ndarray   # (M, 2)
    split_x: float
    split_y: float
    source_v: float

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryWindow):
            return NotImplemented
        return (np.array_equal(self.history, other.history)
                and np.array_equal(self.future, other.future)
                and self.split_x == other.split_x
                and self.split_y == other.split_y
                and self.source_v == other.source_v)


@dataclass(frozen=True)
class SplitDataset:
    train: list[TrajectoryWindow]
    test: list[TrajectoryWindow]
    seed: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, SplitDataset):
            return NotImplemented
        return (self.seed == other.seed and self.train == other.train
                and self.test == other.test)


def segment_path(path: LanePath, M: int = WINDOW_SIZE) -> list[TrajectoryWindow]:
    """All runs of 2M consecutive points; first half history, second future."""
    n = len(path)
    if n <= 2 * M:
        raise ValueError(f"path of size {n} too short for window size {M}")
    windows = []
    for i in range(n - 2 * M):
        seg = path.points[i:i + 2 * M]
        history = seg[:M].copy()
        future = seg[M:].copy()
        windows.append(TrajectoryWindow(
            history=history, future=future,
            split_x=float(future[0, 0]), split_y=float(future[0, 1]),
            source_v=path.v))
    return windows


def calibrate(window: TrajectoryWindow) -> TrajectoryWindow:
    """Shift all longitudinal coordinates so the splitting point is at x=0."""
    s = float(window.future[0, 0])
    shift = np.array([s, 0.0])
    return TrajectoryWindow(
        history=window.history - shift,
        future=window.future - shift,
        split_x=s,
        split_y=float(window.future[0, 1]),
        source_v=window.source_v)


def split_and_shuffle(windows: list[TrajectoryWindow], ratio: float,
                      seed: int) -> SplitDataset:
    """Deterministic shuffle, then a floor(ratio*L) / rest train/test split."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(windows))
    shuffled = [windows[i] for i in perm]
    n_train = math.floor(ratio * len(windows))
    return SplitDataset(train=shuffled[:n_train], test=shuffled[n_train:], seed=seed)


_FIXED_COLS = ["source_v", "split_x", "split_y"]


def _header(M: int) -> list[str]:
    cols = list(_FIXED_COLS)
    for tag in ("hist", "fut"):
        for i in range(M):
            cols += [f"{tag}_x_{i}", f"{tag}_y_{i}"]
    return cols


def _window_row(w: TrajectoryWindow) -> list[str]:
    vals = [w.source_v, w.split_x, w.split_y]
    vals += [v for p in w.history for v in p]
    vals += [v for p in w.future for v in p]
    return [repr(float(v)) for v in vals]


def _write_windows(path: Path, windows: list[TrajectoryWindow], M: int) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_header(M))
        for w in windows:
            writer.writerow(_window_row(w))


def _read_windows(path: Path, M: int) -> list[TrajectoryWindow]:
    windows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        if header != _header(M):
            raise DatasetFormatError(f"{path}: line 1: unexpected header")
        expected = len(_FIXED_COLS) + 4 * M
        for lineno, row in enumerate(reader, start=2):
            if len(row) != expected:
                raise DatasetFormatError(
                    f"{path}: line {lineno}: expected {expected} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from None
            pts = np.array(vals[3:]).reshape(2 * M, 2)
            windows.append(TrajectoryWindow(
                history=pts[:M], future=pts[M:],
                split_x=vals[1], split_y=vals[2], source_v=vals[0]))
    return windows


def save_dataset(ds: SplitDataset, location: str | Path, M: int = WINDOW_SIZE) -> None:
    """Write train.csv, test.csv and meta.json under `location`."""
    loc = Path(location)
    loc.mkdir(parents=True, exist_ok=True)
    _write_windows(loc / "train.csv", ds.train, M)
    _write_windows(loc / "test.csv", ds.test, M)
    meta = {"seed": ds.seed, "window_size": M,
            "n_train": len(ds.train), "n_test": len(ds.test)}
    (loc / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def load_dataset(location: str | Path) -> SplitDataset:
    loc = Path(location)
    try:
        meta = json.loads((loc / "meta.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetFormatError(f"{loc}: missing meta.json") from None
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{loc}/meta.json: {exc}") from None
    M = int(meta["window_size"])
    train = _read_windows(loc / "train.csv", M)
    test = _read_windows(loc / "test.csv", M)
    if len(train) != meta["n_train"] or len(test) != meta["n_test"]:
        raise DatasetFormatError(f"{loc}: record counts disagree with meta.json")
    return SplitDataset(train=train, test=test, seed=int(meta["seed"]))


def histories_array(windows: list[TrajectoryWindow]) -> np.ndarray:
    return np.stack([w.history for w in windows])


def futures_array(windows: list[TrajectoryWindow]) -> np.ndarray:
    return np.stack([w.future for w in windows])
