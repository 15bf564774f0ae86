import math

import numpy as np
import pytest

from cubegt.evaluation import Detection, EvalConfig, ap_from_pr, bucket_of, evaluate
from cubegt.geometry import GravityBox
from cubegt.pipeline import FrameGroundTruth, GroundTruthInstance

from conftest import random_gravity_box


def gbox(center, dims=(1.0, 1.0, 1.0), yaw=0.0):
    return GravityBox(np.asarray(center, dtype=np.float64), np.asarray(dims, dtype=np.float64), yaw)


def gt_instance(box_id, box, class_id=None, box2d=(0.0, 0.0, 10.0, 10.0)):
    return GroundTruthInstance(
        box_id=box_id,
        box=box,
        box2d=box2d,
        visible_pixel_fraction=1.0,
        cut_volume_ratio=1.0,
        class_id=class_id,
    )


def frame_gt(frame_id, boxes, classes=None, box2ds=None):
    instances = tuple(
        gt_instance(
            f"{frame_id}_{i}",
            box,
            None if classes is None else classes[i],
            (0.0, 0.0, 10.0, 10.0) if box2ds is None else box2ds[i],
        )
        for i, box in enumerate(boxes)
    )
    return FrameGroundTruth(frame_id=frame_id, instances=instances)


def det(frame_id, box, score=1.0, class_id=None, box2d=None):
    return Detection(frame_id=frame_id, score=score, box=box, class_id=class_id, box2d=box2d)


AGNOSTIC = EvalConfig(class_agnostic=True)


class TestApFromPr:
    def test_constant_perfect(self):
        assert ap_from_pr([(1.0, 1.0)]) == 1.0

    def test_half_recall_perfect_precision(self):
        # Envelope is 1 up to recall 0.5 and 0 beyond: exactly half the
        # positive-recall grid nodes.
        assert ap_from_pr([(0.5, 1.0)]) == pytest.approx(0.5, abs=1e-12)

    def test_all_zero_precision(self):
        assert ap_from_pr([(0.3, 0.0), (0.6, 0.0), (1.0, 0.0)]) == 0.0

    def test_empty(self):
        assert ap_from_pr([]) == 0.0

    def test_envelope_monotone(self):
        # Precision dip at recall 0.4 is lifted by the later 0.8 point.
        value = ap_from_pr([(0.2, 1.0), (0.4, 0.3), (0.8, 0.9), (1.0, 0.1)])
        dense = ap_from_pr([(0.2, 1.0), (0.4, 0.9), (0.8, 0.9), (1.0, 0.1)])
        assert value == pytest.approx(dense, abs=1e-12)

    def test_rejects_decreasing_recall(self):
        with pytest.raises(ValueError, match="non-decreasing"):
            ap_from_pr([(0.5, 1.0), (0.3, 1.0)])


class TestBucketOf:
    BUCKETS = ((0.0, 2.0), (2.0, 4.0), (4.0, 5.0))

    def test_near(self):
        assert bucket_of(gbox([0, 0, 1.5]), self.BUCKETS) == 0

    def test_medium(self):
        assert bucket_of(gbox([0, 0, 3.0]), self.BUCKETS) == 1

    def test_beyond_all(self):
        # |(3, 0, 4.5)| ~ 5.41 > 5
        assert bucket_of(gbox([3, 0, 4.5]), self.BUCKETS) is None

    def test_half_open_boundary(self):
        assert bucket_of(gbox([0, 0, 2.0]), self.BUCKETS) == 1
        assert bucket_of(gbox([0, 0, 5.0]), self.BUCKETS) is None


class TestEvaluate:
    def test_perfect_detections(self):
        gt = {
            "f0": frame_gt("f0", [gbox([0, 0, 1.0]), gbox([2, 0, 3.0])]),
            "f1": frame_gt("f1", [gbox([0, 1, 4.2])]),
        }
        dets = {
            fid: [det(fid, inst.box, score=1.0) for inst in frame.instances]
            for fid, frame in gt.items()
        }
        report = evaluate(dets, gt, AGNOSTIC)
        for name in ("AP25", "AR25", "AP50", "AR50"):
            assert report.metrics[name] == pytest.approx(1.0, abs=1e-12)

    def test_zero_detections(self):
        gt = {"f0": frame_gt("f0", [gbox([0, 0, 1.0]), gbox([2, 0, 3.0])])}
        report = evaluate({}, gt, AGNOSTIC)
        assert report.metrics["AP25"] == 0.0
        assert report.metrics["AR25"] == 0.0
        cell = report.cells[("all", "25", "all")]
        assert cell.fn == 2 and cell.tp == 0

    def test_hand_built_half_fixture(self):
        # 2 GT; one TP at IoU 1.0 (score 0.9), one disjoint FP (score 0.8):
        # precision sequence (1/1, 1/2), recall tops out at 0.5.
        gt = {"f0": frame_gt("f0", [gbox([0, 0, 1.0]), gbox([3, 0, 1.0])])}
        dets = {
            "f0": [
                det("f0", gbox([0, 0, 1.0]), score=0.9),
                det("f0", gbox([0, 0, 40.0]), score=0.8),
            ]
        }
        report = evaluate(dets, gt, AGNOSTIC)
        assert report.metrics["AP25"] == pytest.approx(0.5, abs=1e-12)
        assert report.metrics["AR25"] == pytest.approx(0.5, abs=1e-12)
        cell = report.cells[("all", "25", "all")]
        assert (cell.tp, cell.fp, cell.fn) == (1, 1, 1)

    def test_monotone_in_threshold(self, rng):
        gt = {}
        dets = {}
        for f in range(4):
            fid = f"f{f}"
            boxes = [random_gravity_box(rng, center_scale=1.5) for _ in range(4)]
            gt[fid] = frame_gt(fid, boxes)
            noisy = []
            for box in boxes[:3]:
                noisy.append(
                    det(fid, GravityBox(box.center + rng.normal(scale=0.08, size=3),
                                        box.dims, box.yaw),
                        score=float(rng.uniform(0.3, 1.0)))
                )
            noisy.append(det(fid, random_gravity_box(rng), score=float(rng.uniform(0.3, 1.0))))
            dets[fid] = noisy
        config = EvalConfig(iou_thresholds=(0.1, 0.25, 0.5, 0.75), class_agnostic=True)
        report = evaluate(dets, gt, config)
        aps = [report.metrics[f"AP{int(t * 100)}"] for t in config.iou_thresholds]
        ars = [report.metrics[f"AR{int(t * 100)}"] for t in config.iou_thresholds]
        assert aps == sorted(aps, reverse=True)
        assert ars == sorted(ars, reverse=True)

    def test_removing_fp_never_decreases_ap(self):
        gt = {"f0": frame_gt("f0", [gbox([0, 0, 1.0]), gbox([3, 0, 1.0])])}
        with_fp = {
            "f0": [
                det("f0", gbox([0, 0, 1.0]), score=0.9),
                det("f0", gbox([0, 0, 40.0]), score=0.95),
                det("f0", gbox([3, 0, 1.0]), score=0.5),
            ]
        }
        without_fp = {"f0": [d for d in with_fp["f0"] if d.score != 0.95]}
        ap_with = evaluate(with_fp, gt, AGNOSTIC).metrics["AP25"]
        ap_without = evaluate(without_fp, gt, AGNOSTIC).metrics["AP25"]
        assert ap_without >= ap_with

    def test_self_eval_every_bucket(self):
        gt = {
            "f0": frame_gt("f0", [gbox([0, 0, 1.0]), gbox([0, 0, 3.0]), gbox([0, 0, 4.5])]),
        }
        dets = {"f0": [det("f0", inst.box, score=1.0) for inst in gt["f0"].instances]}
        report = evaluate(dets, gt, AGNOSTIC)
        for bucket in ("0-2m", "2-4m", "4-5m"):
            assert report.cells[("all", "25", bucket)].ap == pytest.approx(1.0, abs=1e-12)
            assert report.cells[("all", "50", bucket)].ar == pytest.approx(1.0, abs=1e-12)

    def test_detection_cap(self):
        gt = {"f0": frame_gt("f0", [gbox([0, 0, 1.0])])}
        spam = [det("f0", gbox([5, 5, 40.0]), score=0.99) for _ in range(30)]
        good = [det("f0", gbox([0, 0, 1.0]), score=0.5)]
        config = EvalConfig(max_detections_per_frame=10, class_agnostic=True)
        report = evaluate({"f0": spam + good}, gt, config)
        # The low-scored true detection is truncated away by the cap.
        assert report.metrics["AR25"] == 0.0
        report_full = evaluate({"f0": spam + good}, gt, AGNOSTIC)
        assert report_full.metrics["AR25"] == 1.0

    def test_unknown_frame_rejected(self):
        gt = {"f0": frame_gt("f0", [gbox([0, 0, 1.0])])}
        with pytest.raises(ValueError, match="unknown frame_id"):
            evaluate({"f9": [det("f9", gbox([0, 0, 1.0]))]}, gt, AGNOSTIC)

    def test_empty_gt_rejected(self):
        gt = {"f0": FrameGroundTruth(frame_id="f0", instances=())}
        with pytest.raises(ValueError, match="no instances"):
            evaluate({}, gt, AGNOSTIC)

    def test_order_invariance(self, rng):
        gt = {}
        dets = {}
        for f in range(3):
            fid = f"f{f}"
            boxes = [random_gravity_box(rng, center_scale=1.0) for _ in range(3)]
            gt[fid] = frame_gt(fid, boxes)
            dets[fid] = [
                det(fid, GravityBox(b.center + rng.normal(scale=0.05, size=3), b.dims, b.yaw),
                    score=0.7)
                for b in boxes
            ]
            for i, d in enumerate(dets[fid]):
                object.__setattr__(d, "det_id", i)
        base = evaluate(dets, gt, AGNOSTIC).metrics
        shuffled = {fid: list(reversed(ds)) for fid, ds in dets.items()}
        assert evaluate(shuffled, gt, AGNOSTIC).metrics == base

    def test_class_averaging(self):
        gt = {
            "f0": frame_gt(
                "f0",
                [gbox([0, 0, 1.0]), gbox([3, 0, 1.0])],
                classes=[1, 2],
            )
        }
        dets = {
            "f0": [
                det("f0", gbox([0, 0, 1.0]), score=1.0, class_id=1),
                det("f0", gbox([9, 9, 1.0]), score=1.0, class_id=2),
            ]
        }
        report = evaluate(dets, gt, EvalConfig())
        assert report.classes == ("1", "2")
        assert report.cells[("1", "25", "all")].ap == pytest.approx(1.0)
        assert report.cells[("2", "25", "all")].ap == 0.0
        assert report.metrics["AP25"] == pytest.approx(0.5)

    def test_class_agnostic_ignores_labels(self):
        gt = {"f0": frame_gt("f0", [gbox([0, 0, 1.0])], classes=[1])}
        dets = {"f0": [det("f0", gbox([0, 0, 1.0]), score=1.0, class_id=2)]}
        report = evaluate(dets, gt, AGNOSTIC)
        assert report.metrics["AP25"] == pytest.approx(1.0)

    def test_box2d_ar(self):
        gt = {
            "f0": frame_gt(
                "f0",
                [gbox([0, 0, 1.0]), gbox([3, 0, 1.0])],
                box2ds=[(0.0, 0.0, 10.0, 10.0), (20.0, 0.0, 30.0, 10.0)],
            )
        }
        dets = {
            "f0": [
                det("f0", gbox([0, 0, 1.0]), score=0.9, box2d=(0.0, 0.0, 10.0, 10.0)),
                det("f0", gbox([3, 0, 1.0]), score=0.8, box2d=(25.0, 0.0, 35.0, 10.0)),
            ]
        }
        config = EvalConfig(class_agnostic=True, box2d_ar=True)
        report = evaluate(dets, gt, config)
        # First 2D box matches exactly; second overlaps IoU = 5/15 < 0.5.
        assert report.metrics["AR50_2D"] == pytest.approx(0.5)
        assert report.metrics["AR75_2D"] == pytest.approx(0.5)
        assert report.metrics["AR25"] == pytest.approx(1.0)

    def test_removing_tp_never_increases_ar(self):
        gt = {"f0": frame_gt("f0", [gbox([0, 0, 1.0]), gbox([3, 0, 1.0])])}
        dets = {
            "f0": [
                det("f0", gbox([0, 0, 1.0]), score=0.9),
                det("f0", gbox([3, 0, 1.0]), score=0.7),
            ]
        }
        full = evaluate(dets, gt, AGNOSTIC).metrics["AR25"]
        dropped = evaluate({"f0": dets["f0"][:1]}, gt, AGNOSTIC).metrics["AR25"]
        assert dropped <= full

    def test_detection_beyond_buckets_not_bucketed_fp(self):
        # GT in the near bucket; a far-away detection (outside every bucket)
        # is an FP overall but must not pollute any bucketed cell.
        gt = {"f0": frame_gt("f0", [gbox([0, 0, 1.0])])}
        dets = {
            "f0": [
                det("f0", gbox([0, 0, 1.0]), score=0.9),
                det("f0", gbox([0, 0, 40.0]), score=0.95),
            ]
        }
        report = evaluate(dets, gt, AGNOSTIC)
        assert report.cells[("all", "25", "all")].fp == 1
        assert report.cells[("all", "25", "0-2m")].fp == 0
        assert report.cells[("all", "25", "0-2m")].ap == pytest.approx(1.0)

    def test_tp_plus_fn_equals_gt_everywhere(self, rng):
        gt = {}
        dets = {}
        for f in range(3):
            fid = f"f{f}"
            boxes = [random_gravity_box(rng, center_scale=2.0) for _ in range(5)]
            gt[fid] = frame_gt(fid, boxes)
            dets[fid] = [
                det(fid, random_gravity_box(rng, center_scale=2.0), score=float(rng.random()))
                for _ in range(4)
            ]
        report = evaluate(dets, gt, AGNOSTIC)
        for cell in report.cells.values():
            assert cell.tp + cell.fn == cell.n_gt
