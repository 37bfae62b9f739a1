"""Tidy CSV exports from a run's artifact directory, shaped for external
plotting tools (one observation per row)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .pushforward import PriorNetwork

FIGURE_IDS = ("mi_trace", "prior_hist", "posterior_hist", "ecdf", "scatter")


def _read_samples(artifact_dir: Path) -> np.ndarray:
    path = artifact_dir / "samples.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} missing (run had no posterior block?)")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        q = len(header) - 2
        rows = [[float(v) for v in row[2:]] for row in reader]
    return np.array(rows, dtype=float).reshape(-1, q)


def emit_plot_data(artifact_dir, figure_id: str, out_dir=None) -> Path:
    """Write one tidy CSV for the requested figure; returns its path."""
    artifact_dir = Path(artifact_dir)
    out_dir = Path(out_dir) if out_dir else artifact_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    if not (artifact_dir / "manifest.json").exists():
        raise FileNotFoundError(f"no manifest in {artifact_dir}")

    if figure_id == "mi_trace":
        src = artifact_dir / "mi_trace.csv"
        if not src.exists():
            raise FileNotFoundError(f"{src} missing")
        dest = out_dir / "plot_mi_trace.csv"
        dest.write_bytes(src.read_bytes())
        return dest

    if figure_id in ("prior_hist",):
        net = PriorNetwork.load(artifact_dir / "network.json")
        with open(artifact_dir / "manifest.json") as fh:
            seed = json.load(fh)["seed"]
        samples = net.sample_prior(20_000, seed + 29)
        dest = out_dir / "plot_prior_hist.csv"
        _write_tidy(dest, samples)
        return dest

    if figure_id == "posterior_hist":
        samples = _read_samples(artifact_dir)
        dest = out_dir / "plot_posterior_hist.csv"
        _write_tidy(dest, samples)
        return dest

    if figure_id == "ecdf":
        samples = _read_samples(artifact_dir)
        dest = out_dir / "plot_ecdf.csv"
        with open(dest, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["component", "value", "cdf"])
            for j in range(samples.shape[1]):
                curve = ev.ecdf(samples[:, j])
                for x, f in zip(curve.x, curve.f):
                    writer.writerow([j + 1, repr(float(x)), repr(float(f))])
        return dest

    if figure_id == "scatter":
        samples = _read_samples(artifact_dir)
        dest = out_dir / "plot_scatter.csv"
        with open(dest, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"theta{j + 1}" for j in range(samples.shape[1])])
            for row in samples:
                writer.writerow([repr(float(v)) for v in row])
        return dest

    raise ValueError(f"unknown figure id {figure_id!r}; known: {FIGURE_IDS}")


def _write_tidy(dest, samples) -> None:
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "value"])
        for j in range(samples.shape[1]):
            for v in samples[:, j]:
                writer.writerow([j + 1, repr(float(v))])
