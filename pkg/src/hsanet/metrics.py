"""Image-quality metrics and multi-run aggregation.

PSNR, SSIM and RMSE follow the usual restoration conventions: metrics are
computed on [0, 1] images with data_range 1; CT images are display-windowed
to [-160, 240] HU first and RMSE is additionally reported in display units.
Aggregates use the population standard deviation. Raw per-run values can be
exported to CSV for violin plots and re-ingested.
"""

import csv
import math
import resource
from dataclasses import dataclass

import numpy as np
import torch
from scipy.ndimage import convolve1d

from . import data as data_mod
from .errors import DataError


def _check_pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return pred, target


def psnr(pred, target, data_range=1.0):
    """10*log10(data_range^2 / MSE); returns +inf for identical images."""
    pred, target = _check_pair(pred, target)
    mse = float(np.mean((pred - target) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range * data_range / mse)


def rmse(pred, target, scale=1.0):
    """sqrt(MSE) times ``scale`` (1 for normalized units, 400 for CT display HU)."""
    pred, target = _check_pair(pred, target)
    return float(np.sqrt(np.mean((pred - target) ** 2)) * scale)


def _gaussian_kernel(size, sigma):
    half = (size - 1) / 2
    x = np.arange(size) - half
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _windowed_mean(img, kernel):
    half = (len(kernel) - 1) // 2
    out = convolve1d(img, kernel, axis=0, mode="nearest")
    out = convolve1d(out, kernel, axis=1, mode="nearest")
    return out[half:-half, half:-half]


def ssim(pred, target, data_range=1.0, k1=0.01, k2=0.03, sigma=1.5, window_size=11):
    """Mean local SSIM with a Gaussian window (size 11, sigma 1.5)."""
    pred, target = _check_pair(pred, target)
    if pred.ndim != 2:
        raise ValueError(f"expected 2-D images, got {pred.ndim}-D")
    if min(pred.shape) < window_size:
        raise ValueError(
            f"image {pred.shape} smaller than the {window_size}x{window_size} SSIM window"
        )
    kernel = _gaussian_kernel(window_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    mu1 = _windowed_mean(pred, kernel)
    mu2 = _windowed_mean(target, kernel)
    s11 = _windowed_mean(pred * pred, kernel) - mu1 * mu1
    s22 = _windowed_mean(target * target, kernel) - mu2 * mu2
    s12 = _windowed_mean(pred * target, kernel) - mu1 * mu2

    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


@dataclass
class SliceMetrics:
    patient: str
    slice_index: int
    psnr: float
    ssim: float
    rmse: float
    rmse_display: float


@dataclass
class AggregateStat:
    mean: float
    std: float
    count: int


def aggregate(values):
    """Per-metric mean and population standard deviation.

    ``values`` maps metric name to a sequence of floats (one per run or
    patient); raises on empty input.
    """
    if not values:
        raise ValueError("nothing to aggregate")
    stats = {}
    for name, seq in values.items():
        arr = np.asarray(list(seq), dtype=np.float64)
        if arr.size == 0:
            raise ValueError(f"metric {name!r} has no values to aggregate")
        stats[name] = AggregateStat(float(arr.mean()), float(arr.std()), int(arr.size))
    return stats


def display_views(pair, index, pred_norm):
    """Map one slice triple to the display domain used for metric computation.

    CT volumes are de-normalized to HU and windowed to [-160, 240]; other
    modalities are evaluated on their [0, 1] normalization directly. Returns
    (pred, full, low, display_scale).
    """
    low = pair.low[index]
    full = pair.full[index]
    if pair.modality == "ct":
        window = pair.normalization["window"]
        pred = data_mod.display_window_ct(data_mod.denormalize_ct(pred_norm, window))
        full = data_mod.display_window_ct(data_mod.denormalize_ct(full, window))
        low = data_mod.display_window_ct(data_mod.denormalize_ct(low, window))
        scale = float(data_mod.CT_DISPLAY_WINDOW[1] - data_mod.CT_DISPLAY_WINDOW[0])
    else:
        bounds = pair.normalization.get("bounds")
        pred, full, low = pred_norm, full, low
        scale = float(bounds[1] - bounds[0]) if bounds else 1.0
    return pred, full, low, scale


def slice_metrics(pred, full, scale, patient, index):
    return SliceMetrics(
        patient=patient,
        slice_index=index,
        psnr=psnr(pred, full),
        ssim=ssim(pred, full),
        rmse=rmse(pred, full),
        rmse_display=rmse(pred, full, scale=scale),
    )


def evaluate_pair(model, pair, patient="volume", device="cpu"):
    """Run the model slice by slice and score against the full-dose volume."""
    model = model.to(device).eval()
    rows = []
    with torch.no_grad():
        for i in range(pair.low.shape[0]):
            x = torch.from_numpy(np.ascontiguousarray(pair.low[i], dtype=np.float32))
            x = x.unsqueeze(0).unsqueeze(0).to(device)
            pred = model(x).squeeze(0).squeeze(0).cpu().numpy().astype(np.float64)
            view_pred, view_full, _, scale = display_views(pair, i, pred)
            rows.append(slice_metrics(view_pred, view_full, scale, patient, i))
    return rows


def baseline_pair(pair, patient="volume"):
    """Score the low-dose input itself against the full-dose volume."""
    rows = []
    for i in range(pair.low.shape[0]):
        _, view_full, view_low, scale = display_views(pair, i, pair.low[i].astype(np.float64))
        rows.append(slice_metrics(view_low, view_full, scale, patient, i))
    return rows


def per_patient_means(rows):
    """Average slice metrics per patient; returns {patient: {metric: value}}."""
    grouped = {}
    for row in rows:
        grouped.setdefault(row.patient, []).append(row)
    out = {}
    for patient, group in grouped.items():
        out[patient] = {
            "psnr": float(np.mean([r.psnr for r in group])),
            "ssim": float(np.mean([r.ssim for r in group])),
            "rmse": float(np.mean([r.rmse for r in group])),
            "rmse_display": float(np.mean([r.rmse_display for r in group])),
        }
    return out


METRIC_NAMES = ("psnr", "ssim", "rmse", "rmse_display")

SLICE_CSV_HEADER = ("run", "patient", "slice", "psnr", "ssim", "rmse", "rmse_display")
PATIENT_CSV_HEADER = ("run", "patient", "psnr", "ssim", "rmse", "rmse_display")
VIOLIN_CSV_HEADER = ("metric", "run", "patient", "value")
AGGREGATE_CSV_HEADER = ("metric", "mean", "std", "count")


def write_slice_csv(path, rows, run="run0"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SLICE_CSV_HEADER)
        for r in rows:
            writer.writerow([run, r.patient, r.slice_index, r.psnr, r.ssim, r.rmse,
                             r.rmse_display])


def write_patient_csv(path, patient_means, run="run0"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PATIENT_CSV_HEADER)
        for patient, metrics in patient_means.items():
            writer.writerow([run, patient] + [metrics[m] for m in METRIC_NAMES])


def write_violin_csv(path, patient_means, run="run0"):
    """One row per (metric, run, patient) raw value, for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(VIOLIN_CSV_HEADER)
        for metric in METRIC_NAMES:
            for patient, metrics in patient_means.items():
                writer.writerow([metric, run, patient, metrics[metric]])


def read_violin_csv(path):
    """Re-ingest a violin CSV into {metric: [values...]}."""
    values = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != VIOLIN_CSV_HEADER:
            raise DataError(f"{path} is not a violin export (header {header})")
        for metric, _run, _patient, value in reader:
            values.setdefault(metric, []).append(float(value))
    return values


def write_aggregate_csv(path, stats):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_CSV_HEADER)
        for metric, stat in stats.items():
            writer.writerow([metric, stat.mean, stat.std, stat.count])


def peak_memory_mb():
    """Coarse peak memory of this process in MiB (CUDA allocator if active)."""
    if torch.cuda.is_available():
        return torch.cuda.max_memory_allocated() / 2**20
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
