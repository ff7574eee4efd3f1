"""File formats: WAV signals, CSV feature tables, kernel banks, reports.

Loader errors always name the offending file, row and column so broken
datasets can be fixed without guesswork.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np
from scipy.io import wavfile

from .augment import RawSignal, SourceDomain, build_source_domain
from .pipeline import FeatureTable, TargetDataset
from .search import Report
from .svm import METRICS_CSV_HEADER, Metrics, metrics_csv_line

TRIALS_CSV_HEADER = "kernel_count,featuremap_index,seed,q,a1_accuracy"


class DataError(ValueError):
    """A dataset file failed validation."""


def read_wav(path: str) -> RawSignal:
    """Load a mono PCM WAV (16-bit integer or float) as a float signal."""
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise DataError(f"{path}: cannot read WAV file ({exc})") from exc
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, got {data.ndim} channels per frame")
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(float)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}, expected int16 or float")
    return RawSignal(samples, int(rate))


def write_wav(path: str, signal: RawSignal) -> None:
    wavfile.write(path, signal.sample_rate, signal.samples.astype(np.float32))


def _read_csv_rows(path: str):
    try:
        with open(path, newline="") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc})") from exc


def _parse_float(path: str, row_no: int, col_name: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise DataError(f"{path}: row {row_no}, column {col_name}: not a number: {text!r}") from exc
    if not math.isfinite(value):
        raise DataError(f"{path}: row {row_no}, column {col_name}: non-finite value {text!r}")
    return value


def write_feature_rows_csv(rows: np.ndarray, path: str) -> None:
    """Feature rows with header f1..fN."""
    rows = np.asarray(rows, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j + 1}" for j in range(rows.shape[1])])
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def read_feature_rows_csv(path: str) -> np.ndarray:
    raw = _read_csv_rows(path)
    if not raw:
        raise DataError(f"{path}: empty file, expected a f1..fN header")
    header = raw[0]
    if not header or header[0] != "f1":
        raise DataError(f"{path}: row 1: expected feature header starting with 'f1', got {header[:3]}")
    width = len(header)
    rows = []
    for r, row in enumerate(raw[1:], start=2):
        if len(row) != width:
            raise DataError(f"{path}: row {r}: has {len(row)} cells, expected {width}")
        rows.append([_parse_float(path, r, header[j], cell) for j, cell in enumerate(row)])
    if not rows:
        raise DataError(f"{path}: no data rows after the header")
    return np.asarray(rows)


def load_source_features(path: str, h0: int) -> SourceDomain:
    """Read feature rows and block them into an unlabeled source domain."""
    rows = read_feature_rows_csv(path)
    try:
        return build_source_domain(list(rows), h0)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def load_target_csv(path: str) -> TargetDataset:
    """Read a labeled target dataset: subject_id,label,f1..fN.

    Every subject must contribute exactly H0 rows (inferred from the
    first subject), carry a consistent label in {0, 1}, and all feature
    cells must be finite.
    """
    raw = _read_csv_rows(path)
    if not raw:
        raise DataError(f"{path}: empty file")
    header = raw[0]
    if len(header) < 3 or header[0] != "subject_id" or header[1] != "label":
        raise DataError(f"{path}: row 1: expected header subject_id,label,f1.., got {header[:3]}")
    width = len(header)
    per_subject: dict[str, list[np.ndarray]] = {}
    subject_label: dict[str, int] = {}
    order: list[str] = []
    for r, row in enumerate(raw[1:], start=2):
        if len(row) != width:
            raise DataError(f"{path}: row {r}: has {len(row)} cells, expected {width}")
        sid = row[0]
        if row[1] not in ("0", "1"):
            raise DataError(f"{path}: row {r}, column label: expected 0 or 1, got {row[1]!r}")
        label = int(row[1])
        feats = np.asarray([_parse_float(path, r, header[j + 2], cell) for j, cell in enumerate(row[2:])])
        if sid not in per_subject:
            per_subject[sid] = []
            subject_label[sid] = label
            order.append(sid)
        elif subject_label[sid] != label:
            raise DataError(f"{path}: row {r}: subject {sid} has conflicting labels")
        per_subject[sid].append(feats)
    if not order:
        raise DataError(f"{path}: no data rows after the header")
    h0 = len(per_subject[order[0]])
    for sid in order:
        if len(per_subject[sid]) != h0:
            raise DataError(
                f"{path}: subject {sid} has {len(per_subject[sid])} rows, expected {h0} like subject {order[0]}"
            )
    blocks = np.stack([np.stack(per_subject[sid]) for sid in order])
    labels = np.asarray([subject_label[sid] for sid in order])
    return TargetDataset(blocks, labels, order)


def write_target_csv(target: TargetDataset, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "label"] + [f"f{j + 1}" for j in range(target.n)])
        for i, sid in enumerate(target.subject_ids):
            for row in target.blocks[i]:
                writer.writerow([sid, int(target.labels[i])] + [repr(float(v)) for v in row])


def write_feature_table_csv(table: FeatureTable, path: str) -> None:
    """Exported expanded rows: subject_id,label,g1..gN0."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "label"] + [f"g{j + 1}" for j in range(table.rows.shape[1])])
        for sid, label, row in zip(table.subject_ids, table.labels, table.rows):
            writer.writerow([sid, int(label)] + [repr(float(v)) for v in row])


def write_json(obj, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def trials_csv_lines(trials) -> list[str]:
    lines = [TRIALS_CSV_HEADER]
    for t in trials:
        acc = "" if t.a1_accuracy is None else f"{100.0 * t.a1_accuracy:.1f}"
        lines.append(f"{t.kernel_count},{t.featuremap_index},{t.seed},{t.q},{acc}")
    return lines


def write_report(report: Report, out_dir: str) -> dict[str, str]:
    """Write report.json, trials.csv and metrics.csv; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, "report.json"),
        "trials": os.path.join(out_dir, "trials.csv"),
        "metrics": os.path.join(out_dir, "metrics.csv"),
    }
    write_json(report.to_dict(), paths["report"])
    with open(paths["trials"], "w") as fh:
        fh.write("\n".join(trials_csv_lines(report.trials)) + "\n")
    write_metrics_csv(report.metrics, paths["metrics"])
    return paths


def write_metrics_csv(metrics: Metrics, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(METRICS_CSV_HEADER + "\n")
        fh.write(metrics_csv_line(metrics) + "\n")
