"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines alongside the pytest verdicts.
"""

import itertools
import time

import numpy as np
import pytest
import scipy.linalg

import flowcut as fc
from flowcut.affinity import AffinityMatrix
from flowcut.cli import main
from flowcut.evaluation import predictions_from_dataset, write_predictions
from flowcut.spectral import mean_split, solve_fiedler

from conftest import random_affinity


def _announce(k: int, text: str) -> None:
    print(f"\nACCEPTANCE {k} PASS: {text}")


# ---------------------------------------------------------------------------
# shared synthetic corpus (criteria 3 and 5)
# ---------------------------------------------------------------------------

SPEC3 = fc.SynthSpec(seed=1234, n_videos=20, frames_per_video=6,
                     rows=20, cols=20, dim=16, n_objects=2,
                     shape="rectangle", velocity_min=1, velocity_max=2,
                     noise_sigma=0.01)


@pytest.fixture(scope="module")
def corpus3():
    result = fc.generate(SPEC3)
    gt = {}  # vid -> obj -> list of dense frames
    for ann in result.dataset.annotations:
        gt.setdefault(ann.video_id, []).append(
            [fc.rle_decode(s) for s in ann.segmentations])
    return result, gt


@pytest.fixture(scope="module")
def curated3(corpus3):
    result, gt = corpus3
    t0 = time.monotonic()
    acfg, mcfg = fc.AffinityConfig(), fc.MaskCutConfig()
    masks = {}
    for vid in result.rgb:
        masks[vid] = [
            [m.bits for m in fc.extract_masks(result.rgb[vid][t],
                                              result.flow[vid][t],
                                              acfg, mcfg)]
            for t in range(SPEC3.frames_per_video)]
    clips = {vid: fc.curate(masks[vid], gaps=(1, 2, 3, 4), video_id=vid)
             for vid in masks}
    elapsed = time.monotonic() - t0
    return masks, clips, elapsed


def test_criterion_1_spectral_correctness():
    rng = np.random.default_rng(7)
    t0 = time.monotonic()
    for _ in range(100):
        n = int(rng.integers(8, 201))
        sol = solve_fiedler(AffinityMatrix.from_weights(random_affinity(rng, n)))
        assert sol.residual < 1e-8
        assert sol.lambda1 < 1e-10
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0
    _announce(1, f"100 eigensolves (N<=200), residual<1e-8, lambda1<1e-10, "
                 f"{elapsed:.2f}s")


def test_criterion_2_oracle_equivalence():
    rng = np.random.default_rng(123)
    for _ in range(100):
        n = int(rng.integers(8, 65))
        w = random_affinity(rng, n)
        sol = solve_fiedler(AffinityMatrix.from_weights(w))
        # the mean split must be numerically well-posed on this corpus
        assert np.abs(sol.fiedler - sol.fiedler.mean()).min() > 1e-9
        d = w.sum(axis=1)
        vals, vecs = scipy.linalg.eigh(np.diag(d) - w, np.diag(d))
        x = vecs[:, 1] / np.linalg.norm(vecs[:, 1])
        if x[np.argmax(np.abs(x))] < 0:
            x = -x
        assert np.array_equal(mean_split(sol.fiedler), mean_split(x))
    _announce(2, "100/100 bipartitions identical to the brute-force "
                 "generalized eigensolve (N<=64)")


def test_criterion_3_synthetic_end_to_end(corpus3, curated3):
    result, gt = corpus3
    masks, clips, elapsed = curated3

    # required feature geometry: same-object cosine >= 0.6, cross <= 0.1
    same_min, cross_max = 1.0, 0.0
    for vid in (1, 2, 3):
        feats = fc.normalize_features(result.rgb[vid][0]).data.reshape(-1, SPEC3.dim)
        o1 = gt[vid][0][0].ravel()
        o2 = gt[vid][1][0].ravel()
        a, b = feats[o1][:24], feats[o2][:24]
        same = (a @ a.T)[np.triu_indices(len(a), 1)]
        same_min = min(same_min, float(same.min()))
        cross_max = max(cross_max, float(np.abs(a @ b.T).max()))
    assert same_min >= 0.6
    assert cross_max <= 0.1

    # pseudo-mask quality: mean best-IoU against ground truth >= 0.9
    ious = []
    for vid, tracks in gt.items():
        for t in range(SPEC3.frames_per_video):
            for obj in tracks:
                best = max((fc.mask_iou(obj[t], m) for m in masks[vid][t]),
                           default=0.0)
                ious.append(best)
    mean_iou = float(np.mean(ious))
    assert mean_iou >= 0.9

    # curation: >= 90% of ground-truth-consistent pairs, zero identity swaps
    gt_pairs = set()
    for vid, tracks in gt.items():
        for t in range(SPEC3.frames_per_video):
            for g in (1, 2, 3, 4):
                if t + g >= SPEC3.frames_per_video:
                    continue
                for k, obj in enumerate(tracks):
                    if fc.mask_iou(obj[t], obj[t + g]) > 0.5:
                        gt_pairs.add((vid, t, g, k))
    emitted = set()
    swaps = 0
    for vid, vclips in clips.items():
        for clip in vclips:
            g = clip.frame_b - clip.frame_a
            for track in clip.tracks:
                ma = fc.rle_decode(track.mask_a)
                mb = fc.rle_decode(track.mask_b)
                ka, va = max(
                    ((k, fc.mask_iou(ma, obj[clip.frame_a]))
                     for k, obj in enumerate(gt[vid])), key=lambda kv: kv[1])
                kb, vb = max(
                    ((k, fc.mask_iou(mb, obj[clip.frame_b]))
                     for k, obj in enumerate(gt[vid])), key=lambda kv: kv[1])
                if va > 0.5 and vb > 0.5:
                    if ka == kb:
                        emitted.add((vid, clip.frame_a, g, ka))
                    else:
                        swaps += 1
    assert swaps == 0
    coverage = len(emitted & gt_pairs) / len(gt_pairs)
    assert coverage >= 0.9
    assert elapsed < 60.0
    _announce(3, f"20 videos: mean mask IoU {mean_iou:.3f}, curation covers "
                 f"{coverage:.1%} of GT pairs, 0 swaps, {elapsed:.1f}s")


def test_criterion_4_flow_fusion_ablation():
    spec = fc.SynthSpec(seed=77, n_videos=10, frames_per_video=5,
                        n_objects=1, distractor=True, noise_sigma=0.01)
    result = fc.generate(spec)
    mcfg = fc.MaskCutConfig()
    fused_hits = rgb_hits = frames = 0
    for vid in result.rgb:
        region = result.distractor_regions[vid].bits
        area = region.sum()
        for t in range(spec.frames_per_video):
            frames += 1
            fused = fc.extract_masks(result.rgb[vid][t], result.flow[vid][t],
                                     fc.AffinityConfig(alpha=0.5), mcfg)
            rgb_only = fc.extract_masks(result.rgb[vid][t], None,
                                        fc.AffinityConfig(alpha=1.0), mcfg)
            fused_hits += any((m.bits & region).sum() / area > 0.5
                              for m in fused)
            rgb_hits += any((m.bits & region).sum() / area > 0.5
                            for m in rgb_only)
    assert fused_hits / frames < 0.10
    assert rgb_hits / frames > 0.50

    # alpha=1 output bit-identical with and without flow features
    for vid in (1, 2):
        for t in range(spec.frames_per_video):
            with_flow = fc.extract_masks(result.rgb[vid][t],
                                         result.flow[vid][t],
                                         fc.AffinityConfig(alpha=1.0), mcfg)
            without = fc.extract_masks(result.rgb[vid][t], None,
                                       fc.AffinityConfig(alpha=1.0), mcfg)
            assert len(with_flow) == len(without)
            for ma, mb in zip(with_flow, without):
                assert np.array_equal(ma.bits, mb.bits)
    _announce(4, f"distractor segmented in {fused_hits}/{frames} fused frames "
                 f"vs {rgb_hits}/{frames} rgb-only; alpha=1 bit-identical")


def _decode_rle_independent(runs, height, width):
    """Plain-python column-major RLE decoder, separate from the library path."""
    flat = []
    value = 0
    for r in runs:
        flat.extend([value] * r)
        value = 1 - value
    cells = set()
    for idx, v in enumerate(flat):
        if v:
            col, row = divmod(idx, height)
            cells.add((row, col))
    return cells


def test_criterion_5_matching_soundness(corpus3, curated3):
    _, clips, _ = curated3
    meta = {vid: fc.VideoMeta(height=SPEC3.rows, width=SPEC3.cols)
            for vid in clips}
    ds = fc.build_dataset([c for v in clips.values() for c in v], meta)
    assert ds.annotations, "curation produced no tracks to verify"
    checked = 0
    for ann in ds.annotations:
        pa, pb = ann.segmentations
        cells_a = _decode_rle_independent(pa.runs, pa.height, pa.width)
        cells_b = _decode_rle_independent(pb.runs, pb.height, pb.width)
        union = len(cells_a | cells_b)
        inter = len(cells_a & cells_b)
        assert union > 0
        assert inter / union > 0.5  # strictly above, no boundary cases
        checked += 1
    _announce(5, f"independent recheck: {checked} emitted pairs all have "
                 f"IoU strictly above 0.5")


def test_criterion_6_evaluator_self_consistency(corpus3):
    result, _ = corpus3
    gt = result.dataset
    report = fc.evaluate(gt, predictions_from_dataset(gt, score=1.0))
    for name in ("ap", "ap50", "ap75", "ar10", "j_mean", "f_mean", "jf_mean"):
        assert getattr(report, name) == pytest.approx(1.0, abs=1e-6), name

    # one prediction at spatio-temporal IoU 0.6: AP50 = 1, AP75 = 0 exactly
    gt_mask = np.zeros((1, 12), dtype=bool)
    gt_mask[0, :8] = True
    pred_mask = np.zeros((1, 12), dtype=bool)
    pred_mask[0, 2:10] = True
    single = fc.DatasetFile(
        videos=[fc.VideoRecord(video_id=1, width=12, height=1,
                               file_names=["v/0.jpg"])],
        annotations=[fc.TrackRecord(track_id=1, video_id=1,
                                    segmentations=[fc.rle_encode(gt_mask)],
                                    areas=[8])])
    rep = fc.compute_ap_ar(single, [fc.Prediction(
        video_id=1, score=0.95, segmentations=[fc.rle_encode(pred_mask)])],
        score_thresh=0.8)
    assert rep.ap50 == 1.0
    assert rep.ap75 == 0.0

    # hungarian equals exhaustive permutation search on 500 matrices <= 7x7
    rng = np.random.default_rng(99)
    for _ in range(500):
        n, m = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        cost = rng.random((n, m))
        pairs = fc.hungarian(cost)
        got = sum(cost[i, j] for i, j in pairs)
        if n <= m:
            best = min(sum(cost[i, p[i]] for i in range(n))
                       for p in itertools.permutations(range(m), n))
        else:
            best = min(sum(cost[p[j], j] for j in range(m))
                       for p in itertools.permutations(range(n), m))
        assert got == pytest.approx(best, abs=1e-12)
    _announce(6, "GT-vs-GT all 1.0; 0.6-IoU case AP50=1/AP75=0; hungarian "
                 "matches brute force on 500 matrices")


def test_criterion_7_serialization_roundtrips(tmp_path):
    rng = np.random.default_rng(2024)

    fcft = tmp_path / "m.fcft"
    for _ in range(1000):
        fm = fc.FeatureMap(rng.normal(size=(
            int(rng.integers(1, 5)), int(rng.integers(1, 5)),
            int(rng.integers(1, 5)))).astype(np.float32))
        fc.write_feature_map(fm, fcft)
        assert np.array_equal(fc.read_feature_map(fcft).data, fm.data)

    for _ in range(1000):
        h, w = int(rng.integers(1, 12)), int(rng.integers(1, 12))
        mask = rng.random((h, w)) < rng.uniform(0, 1)
        pm = fc.rle_encode(mask)
        assert np.array_equal(fc.rle_decode(pm), mask)
        assert fc.rle_encode(fc.rle_decode(pm)) == pm

    dpath = tmp_path / "d.json"
    for _ in range(1000):
        h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        n_frames = int(rng.integers(1, 4))
        video = fc.VideoRecord(video_id=1, width=w, height=h,
                               file_names=[f"v/{t}.jpg"
                                           for t in range(n_frames)])
        anns = []
        for k in range(int(rng.integers(0, 3))):
            segs, areas = [], []
            for _ in range(n_frames):
                if rng.random() < 0.2:
                    segs.append(None)
                    areas.append(None)
                else:
                    m = rng.random((h, w)) < 0.5
                    segs.append(fc.rle_encode(m))
                    areas.append(int(m.sum()))
            anns.append(fc.TrackRecord(track_id=k + 1, video_id=1,
                                       segmentations=segs, areas=areas))
        ds = fc.DatasetFile(videos=[video], annotations=anns)
        fc.write_dataset(ds, dpath)
        assert fc.read_dataset(dpath) == ds
    _announce(7, "1000-case round-trips: FCFT, RLE, dataset JSON")


def test_criterion_8_pipeline_determinism_across_workers(tmp_path):
    corpus = tmp_path / "corpus"
    assert main(["synth", "--out", str(corpus), "--seed", "5",
                 "--n-videos", "3", "--frames", "5"]) == 0
    outputs = {}
    for workers in ("1", "8"):
        root = tmp_path / f"w{workers}"
        masks = root / "masks"
        assert main(["extract", "--features-dir", str(corpus / "features"),
                     "--flow-features-dir", str(corpus / "flow_features"),
                     "--workers", workers, "--out", str(masks)]) == 0
        dataset = root / "dataset.json"
        report = root / "curation.json"
        assert main(["curate", "--masks-dir", str(masks), "--workers", workers,
                     "--out", str(dataset), "--report", str(report)]) == 0
        preds = root / "preds.json"
        ds = fc.read_dataset(dataset)
        write_predictions(predictions_from_dataset(ds, score=1.0), preds)
        eval_report = root / "eval.json"
        assert main(["eval", "--gt", str(dataset), "--pred", str(preds),
                     "--workers", workers, "--out", str(eval_report)]) == 0
        mask_bytes = {str(p.relative_to(masks)): p.read_bytes()
                      for p in sorted(masks.rglob("*.json"))}
        outputs[workers] = (mask_bytes, dataset.read_bytes(),
                            report.read_bytes(), eval_report.read_bytes())
    assert outputs["1"][0] == outputs["8"][0]
    assert outputs["1"][1] == outputs["8"][1]
    assert outputs["1"][2] == outputs["8"][2]
    assert outputs["1"][3] == outputs["8"][3]
    _announce(8, "workers=1 and workers=8 produce byte-identical masks, "
                 "dataset, curation report and eval report")
