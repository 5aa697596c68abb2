"""Grayscale heatmap rendering: binary P5 graymaps plus CSV twins.

Pixel quantization is floor(255 * v + 0.5) on values already normalized to
[0, 1].  The difference map uses a logarithmic colormap,
log10(max(v, 1e-10)), rescaled so the floor maps to black and 1.0 to
white; a perfect output therefore renders uniformly black.
"""

import os

import numpy as np

LOG_FLOOR = 1e-10


def quantize(values):
    """Map [0, 1] values to uint8 pixels: floor(255 v + 0.5), clipped."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * v + 0.5).astype(np.uint8)


def log_normalize(values, floor=LOG_FLOOR):
    """log10(max(v, floor)) rescaled to [0, 1] for values in [0, 1]."""
    scale = -np.log10(floor)
    v = np.log10(np.maximum(np.asarray(values, dtype=np.float64), floor))
    return (v + scale) / scale


def write_pgm(path, values):
    """Write a [rows x cols] matrix of [0, 1] values as a binary P5 graymap."""
    pixels = quantize(values)
    if pixels.ndim != 2:
        raise ValueError("graymap values must be 2-d, got %r" % (pixels.shape,))
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (cols, rows))
        fh.write(pixels.tobytes())


def write_csv(path, values):
    with open(path, "w") as fh:
        for row in np.atleast_2d(values):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def render_trace(instance, outputs, trace, out_dir):
    """Emit the standard heatmap set for one evaluated sequence.

    Files written to ``out_dir`` (each .pgm with a full-precision .csv twin):
      target        target channels over time (rows = channels)
      output        output probabilities over time (rows = channels)
      difference    |output - target|, logarithmic colormap
      read_weighting, write_weighting
                    head weightings, rows = time, cols = memory location
    """
    os.makedirs(out_dir, exist_ok=True)
    outputs = np.asarray(outputs, dtype=np.float64)
    target = np.asarray(instance.target, dtype=np.float64)
    diff = np.abs(outputs - target)
    read_w = np.stack([step.read_weighting for step in trace])
    write_w = np.stack([step.write_weighting for step in trace])

    paths = {}
    for name, values, image in (
        ("target", target.T, target.T),
        ("output", outputs.T, outputs.T),
        ("difference", diff.T, log_normalize(diff.T)),
        ("read_weighting", read_w, read_w),
        ("write_weighting", write_w, write_w),
    ):
        pgm = os.path.join(out_dir, name + ".pgm")
        csv = os.path.join(out_dir, name + ".csv")
        write_pgm(pgm, image)
        write_csv(csv, values)
        paths[name] = pgm
    return paths
