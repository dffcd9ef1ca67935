import numpy as np
import pytest

from flowcut import (AffinityConfig, MaskCutConfig, SynthSpec,
                     ValidationError, extract_masks, generate,
                     read_dataset, read_feature_map, rle_decode, write_corpus)
from flowcut.affinity import normalize_features


def _gt_frames(result, vid):
    frames = {}
    for ann in result.dataset.annotations:
        if ann.video_id == vid:
            for t, s in enumerate(ann.segmentations):
                frames.setdefault(t, []).append(rle_decode(s))
    return frames


def test_determinism_bit_identical():
    spec = SynthSpec(seed=42, n_videos=2, frames_per_video=4)
    a = generate(spec)
    b = generate(spec)
    assert a.dataset == b.dataset
    for vid in a.rgb:
        for fa, fb in zip(a.rgb[vid], b.rgb[vid]):
            assert np.array_equal(fa.data, fb.data)
        for fa, fb in zip(a.flow[vid], b.flow[vid]):
            assert np.array_equal(fa.data, fb.data)


def test_distinct_seeds_distinct_trajectories():
    a = generate(SynthSpec(seed=1, n_videos=1, frames_per_video=6))
    b = generate(SynthSpec(seed=2, n_videos=1, frames_per_video=6))
    same = all(np.array_equal(sa.data, sb.data)
               for sa, sb in zip(a.rgb[1], b.rgb[1]))
    assert not same


def test_gt_masks_disjoint_and_in_bounds():
    spec = SynthSpec(seed=5, n_videos=3, frames_per_video=5, n_objects=2)
    res = generate(spec)
    for vid in range(1, 4):
        frames = _gt_frames(res, vid)
        for t, masks in frames.items():
            stack = np.zeros((spec.rows, spec.cols), dtype=int)
            for m in masks:
                assert m.shape == (spec.rows, spec.cols)
                assert m.any()
                stack += m.astype(int)
            assert stack.max() <= 1


def test_zero_noise_single_disc_recovered_exactly():
    spec = SynthSpec(seed=9, n_videos=1, frames_per_video=4, n_objects=1,
                     shape="disc", noise_sigma=0.0)
    res = generate(spec)
    frames = _gt_frames(res, 1)
    for t in range(spec.frames_per_video):
        masks = extract_masks(res.rgb[1][t], res.flow[1][t],
                              AffinityConfig(), MaskCutConfig())
        assert len(masks) == 1
        assert np.array_equal(masks[0].bits, frames[t][0])


def test_moving_disc_actually_moves():
    spec = SynthSpec(seed=10, n_videos=1, frames_per_video=5, n_objects=1,
                     shape="disc", velocity_min=1, velocity_max=1)
    res = generate(spec)
    frames = _gt_frames(res, 1)
    assert not np.array_equal(frames[0][0], frames[1][0])


def test_feature_snr_margin():
    spec = SynthSpec(seed=11, n_videos=2, frames_per_video=3,
                     noise_sigma=0.05)
    res = generate(spec)
    same_sims = []
    cross_sims = []
    for vid in (1, 2):
        frames = _gt_frames(res, vid)
        for t in range(spec.frames_per_video):
            feats = normalize_features(res.rgb[vid][t]).data
            flat = feats.reshape(-1, spec.dim)
            m0 = frames[t][0].ravel()
            m1 = frames[t][1].ravel()
            a = flat[m0][:20]
            b = flat[m1][:20]
            same_sims.extend((a @ a.T)[np.triu_indices(len(a), 1)])
            cross_sims.extend((a @ b.T).ravel())
    margin = np.mean(same_sims) - np.mean(cross_sims)
    assert margin >= 4 * spec.noise_sigma


def test_static_object_shares_background_flow_direction():
    spec = SynthSpec(seed=12, n_videos=1, frames_per_video=3, n_objects=1,
                     velocity_min=0, velocity_max=0, noise_sigma=0.0)
    res = generate(spec)
    frames = _gt_frames(res, 1)
    flow = normalize_features(res.flow[1][0]).data
    inside = flow[frames[0][0]][0]
    outside = flow[~frames[0][0]][0]
    assert float(inside @ outside) == pytest.approx(1.0, abs=1e-9)


def test_moving_object_distinct_flow_direction():
    spec = SynthSpec(seed=13, n_videos=1, frames_per_video=3, n_objects=1,
                     velocity_min=1, velocity_max=1, noise_sigma=0.0)
    res = generate(spec)
    frames = _gt_frames(res, 1)
    flow = normalize_features(res.flow[1][0]).data
    inside = flow[frames[0][0]][0]
    outside = flow[~frames[0][0]][0]
    assert abs(float(inside @ outside)) < 1e-9


def test_distractor_region_static_and_disjoint_from_gt():
    spec = SynthSpec(seed=14, n_videos=1, frames_per_video=4, n_objects=1,
                     distractor=True)
    res = generate(spec)
    reg = res.distractor_regions[1]
    assert reg is not None and reg.bits.any()
    frames = _gt_frames(res, 1)
    for t in range(spec.frames_per_video):
        for m in frames[t]:
            assert not (m & reg.bits).any()


def test_distractor_fused_vs_rgb_only():
    spec = SynthSpec(seed=15, n_videos=1, frames_per_video=4, n_objects=1,
                     distractor=True)
    res = generate(spec)
    reg = res.distractor_regions[1].bits
    mcfg = MaskCutConfig()
    fused_hits = 0
    rgb_hits = 0
    for t in range(spec.frames_per_video):
        fused = extract_masks(res.rgb[1][t], res.flow[1][t],
                              AffinityConfig(alpha=0.5), mcfg)
        rgb_only = extract_masks(res.rgb[1][t], None,
                                 AffinityConfig(alpha=1.0), mcfg)
        fused_hits += any((m.bits & reg).sum() / reg.sum() > 0.5 for m in fused)
        rgb_hits += any((m.bits & reg).sum() / reg.sum() > 0.5 for m in rgb_only)
    assert fused_hits == 0
    assert rgb_hits == spec.frames_per_video


def test_objects_that_cannot_fit_raise():
    with pytest.raises(ValidationError):
        generate(SynthSpec(rows=4, cols=4, n_objects=2))


def test_dim_too_small_for_directions():
    with pytest.raises(ValidationError):
        generate(SynthSpec(dim=2, n_objects=3, rows=24))


def test_write_corpus_layout(tmp_path):
    spec = SynthSpec(seed=16, n_videos=2, frames_per_video=3)
    res = generate(spec)
    write_corpus(res, tmp_path)
    fm = read_feature_map(tmp_path / "features" / "video_0001" /
                          "frame_00000.fcft")
    assert (fm.rows, fm.cols, fm.dim) == (spec.rows, spec.cols, spec.dim)
    assert (tmp_path / "flow_features" / "video_0002" /
            "frame_00002.fcft").exists()
    ds = read_dataset(tmp_path / "gt.json")
    assert len(ds.videos) == 2
    assert ds.videos[0].file_names[0] == "video_0001/frame_00000.jpg"
    assert (tmp_path / "corpus.json").exists()


def test_corpus_features_match_in_memory(tmp_path):
    spec = SynthSpec(seed=17, n_videos=1, frames_per_video=2)
    res = generate(spec)
    write_corpus(res, tmp_path)
    on_disk = read_feature_map(tmp_path / "features" / "video_0001" /
                               "frame_00001.fcft")
    assert np.allclose(on_disk.data, res.rgb[1][1].data, atol=1e-6)
