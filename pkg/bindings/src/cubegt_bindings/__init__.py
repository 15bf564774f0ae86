"""Array-based batch entry points over the cubegt core for ML pipelines.

Boxes are rows of a float array ``(cx, cy, cz, l, w, h, yaw)`` in the
gravity-aligned frame (meters/radians). Every function is a stateless
wrapper: conversion in, one core call per element, conversion out, so the
numbers are exactly the core's. Heavy lifting happens inside the core's
numpy/compiled kernels, which release the interpreter lock.
"""

from __future__ import annotations

import numpy as np

import cubegt
from cubegt import (
    CameraFrame,
    DepthMap,
    DepthStats,
    EvalConfig,
    GravityBox,
    RawPrediction,
)
from cubegt import io as _io
from cubegt.decode import decode as _decode
from cubegt.decode import depth_stats as _depth_stats
from cubegt.evaluation import evaluate as _evaluate
from cubegt.geometry import enclosing_gravity_box as _enclosing_gravity_box
from cubegt.metrics3d import chamfer_corner_distance as _chamfer
from cubegt.metrics3d import iou_gravity as _iou_gravity
from cubegt.metrics3d import iou_monte_carlo as _iou_monte_carlo

__version__ = cubegt.__version__

__all__ = [
    "boxes_from_array",
    "boxes_to_array",
    "pairwise_iou",
    "pairwise_chamfer",
    "monte_carlo_iou",
    "enclose_gravity_aligned",
    "depth_statistics",
    "decode_predictions",
    "evaluate_py",
]


def boxes_from_array(batch):
    """Rows (cx, cy, cz, l, w, h, yaw) -> list of core GravityBox values."""
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 7:
        raise ValueError(f"batch must have shape (n, 7), got {arr.shape}")
    if np.any(arr[:, 3:6] <= 0.0):
        raise ValueError("box dimensions (columns 3:6) must be strictly positive")
    return [GravityBox(row[:3], row[3:6], row[6]) for row in arr]


def boxes_to_array(boxes):
    """Inverse of boxes_from_array."""
    out = np.empty((len(boxes), 7))
    for i, box in enumerate(boxes):
        out[i, :3] = box.center
        out[i, 3:6] = box.dims
        out[i, 6] = box.yaw
    return out


def pairwise_iou(a, b):
    """(n, 7) x (m, 7) -> (n, m) exact gravity-aligned IoU matrix."""
    boxes_a = boxes_from_array(a)
    boxes_b = boxes_from_array(b)
    out = np.empty((len(boxes_a), len(boxes_b)))
    for i, box_a in enumerate(boxes_a):
        for j, box_b in enumerate(boxes_b):
            out[i, j] = _iou_gravity(box_a, box_b)
    return out


def pairwise_chamfer(a, b):
    """(n, 7) x (m, 7) -> (n, m) symmetric mean corner distances, meters."""
    boxes_a = boxes_from_array(a)
    boxes_b = boxes_from_array(b)
    out = np.empty((len(boxes_a), len(boxes_b)))
    for i, box_a in enumerate(boxes_a):
        for j, box_b in enumerate(boxes_b):
            out[i, j] = _chamfer(box_a, box_b)
    return out


def monte_carlo_iou(a, b, samples=1_000_000, seed=0):
    """Monte Carlo IoU of two (7,) box rows; seed-deterministic."""
    (box_a,) = boxes_from_array(np.asarray(a, dtype=np.float64)[None, :])
    (box_b,) = boxes_from_array(np.asarray(b, dtype=np.float64)[None, :])
    return _iou_monte_carlo(box_a, box_b, samples, seed=seed)


def enclose_gravity_aligned(centers, dims, rotations, gravity_rotation=None):
    """Batch gravity-aligned enclosing boxes for 9-DOF inputs.

    centers (n, 3), dims (n, 3), rotations (n, 3, 3); returns (n, 7) rows.
    ``gravity_rotation`` maps the input frame into the gravity frame
    (identity when omitted).
    """
    from cubegt import Box3D

    centers = np.asarray(centers, dtype=np.float64)
    dims = np.asarray(dims, dtype=np.float64)
    rotations = np.asarray(rotations, dtype=np.float64)
    gravity = np.eye(3) if gravity_rotation is None else np.asarray(gravity_rotation)
    enclosed = [
        _enclosing_gravity_box(Box3D(c, d, r), gravity)
        for c, d, r in zip(centers, dims, rotations)
    ]
    return boxes_to_array(enclosed)


def depth_statistics(depth):
    """(h, w) metric depth array (0 = invalid) -> (mu, sigma)."""
    stats = _depth_stats(DepthMap(np.asarray(depth, dtype=np.float64)))
    return stats.mu, stats.sigma


def decode_predictions(predictions, camera, depth=None):
    """Decode raw prediction rows (u, v, z, l, w, h, yaw, score) to boxes.

    ``camera`` is a core CameraFrame; ``depth`` an optional metric depth
    array whose affine statistics rescale depth and dimensions. Returns
    (boxes (k, 7), scores (k,), kept (k,) input row indices); rejected
    predictions (non-positive rescaled depth) are dropped.
    """
    arr = np.asarray(predictions, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 8:
        raise ValueError(f"predictions must have shape (n, 8), got {arr.shape}")
    stats = None
    if depth is not None:
        stats = _depth_stats(DepthMap(np.asarray(depth, dtype=np.float64)))

    boxes, scores, kept = [], [], []
    for i, row in enumerate(arr):
        box = _decode(
            RawPrediction(u=row[0], v=row[1], z=row[2], dims=row[3:6], yaw=row[6],
                          score=row[7]),
            camera,
            stats,
        )
        if box is None:
            continue
        boxes.append(box)
        scores.append(row[7])
        kept.append(i)
    return boxes_to_array(boxes), np.asarray(scores), np.asarray(kept, dtype=np.int64)


def evaluate_py(gt_path, det_path, config=None):
    """Evaluate a detections file against a ground-truth file/directory.

    Same semantics and numbers as the CLI ``eval`` subcommand. ``config`` is
    a mapping of EvalConfig field overrides; the result is a plain mapping:
    {"metrics": {...}, "classes": [...], "cells": {"class|threshold|bucket":
    {"ap": ..., "ar": ..., "tp": ..., "fp": ..., "fn": ..., "n_gt": ...}}}.
    """
    eval_config = EvalConfig(**dict(config or {}))
    report = _evaluate(_io.load_detections(det_path), _io.load_frame_gt(gt_path),
                       eval_config)
    return {
        "metrics": dict(report.metrics),
        "classes": list(report.classes),
        "cells": {
            "|".join(key): {
                "ap": cell.ap,
                "ar": cell.ar,
                "tp": cell.tp,
                "fp": cell.fp,
                "fn": cell.fn,
                "n_gt": cell.n_gt,
            }
            for key, cell in report.cells.items()
        },
    }
