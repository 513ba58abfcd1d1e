"""Synthetic sessions, face/eye renders, and the brute-force oracles."""
import math

import numpy as np
import pytest
from PIL import Image

from blinklab.errors import EmptyClass, OverlappingBlinks
from blinklab.ingest import load_eeg, load_session, time_to_frame
from blinklab.labeling import BlinkCandidate, extract_candidates
from blinklab.synthdata import (
    SyntheticEyeSpec,
    SyntheticSessionSpec,
    TruthEvent,
    alternating_profile,
    auto_blink_times,
    fixed_count_blink_times,
    gen_session,
    make_crop_set,
    match_candidates,
    oracle_bpm,
    oracle_eer,
    profile_value,
    read_ground_truth,
    render_benchmark,
    render_eye,
    render_face,
    simulate_review,
)


class TestProfileValue:
    def test_step_profile(self):
        prof = ((0.0, 30.0), (10.0, 70.0))
        assert profile_value(prof, 0.0) == 30.0
        assert profile_value(prof, 9.99) == 30.0
        assert profile_value(prof, 10.0) == 70.0
        assert profile_value(prof, 500.0) == 70.0

    def test_before_first_step(self):
        assert profile_value(((5.0, 40.0),), 0.0) == 40.0

    def test_clamped_to_percent_range(self):
        assert profile_value(((0.0, 150.0),), 1.0) == 100.0
        assert profile_value(((0.0, -5.0),), 1.0) == 0.0

    def test_callable_profile(self):
        assert profile_value(lambda t: 2.0 * t, 10.0) == 20.0
        assert profile_value(lambda t: 2.0 * t, 100.0) == 100.0


class TestAlternatingProfile:
    def test_structure(self):
        prof = alternating_profile(200.0, seed=3)
        starts = [s for s, _ in prof]
        vals = [v for _, v in prof]
        assert starts[0] == 0.0
        assert starts == sorted(starts)
        for a, b in zip(starts, starts[1:]):
            assert 30.0 <= b - a <= 50.0
        for v in vals:
            assert 5.0 <= v <= 15.0 or 85.0 <= v <= 95.0
        # strict low/high alternation
        for a, b in zip(vals, vals[1:]):
            assert (a <= 15.0) != (b <= 15.0)

    def test_deterministic(self):
        assert alternating_profile(120.0, seed=8) == alternating_profile(120.0, seed=8)
        assert alternating_profile(120.0, seed=8) != alternating_profile(120.0, seed=9)


class TestAutoBlinkTimes:
    def test_bounds_gap_and_determinism(self):
        times = auto_blink_times(300.0, ((0.0, 50.0),), -0.8, seed=9)
        assert times == auto_blink_times(300.0, ((0.0, 50.0),), -0.8, seed=9)
        assert len(times) > 10
        assert min(times) >= 2.0 and max(times) < 298.0
        for a, b in zip(times, times[1:]):
            assert b - a >= 2.0

    def test_negative_coupling_rate_contrast(self):
        # at coupling -0.8, low attention must out-blink high attention
        for seed in range(5):
            low = auto_blink_times(120.0, ((0.0, 5.0),), -0.8, seed)
            high = auto_blink_times(120.0, ((0.0, 95.0),), -0.8, seed)
            assert len(low) > 3 * len(high)


class TestFixedCountBlinkTimes:
    def test_exact_count_sorted_and_spaced(self):
        times = fixed_count_blink_times(100.0, 12, ((0.0, 50.0),), 0.0, seed=4)
        assert len(times) == 12
        assert list(times) == sorted(times)
        assert min(times) >= 2.0 and max(times) < 98.0
        for a, b in zip(times, times[1:]):
            assert b - a >= 2.0

    def test_rate_follows_attention(self):
        # low-attention half of the session should attract the blinks
        times = fixed_count_blink_times(
            100.0, 12, ((0.0, 5.0), (50.0, 95.0)), -0.8, seed=1
        )
        assert sum(1 for t in times if t < 50.0) == 12

    def test_zero_count(self):
        assert fixed_count_blink_times(100.0, 0, ((0.0, 50.0),), 0.0, seed=0) == ()

    def test_impossible_packing(self):
        with pytest.raises(ValueError):
            fixed_count_blink_times(4.5, 2, ((0.0, 50.0),), 0.0, seed=0, max_tries=500)


class TestGenSession:
    def test_artifacts_load_cleanly(self, tmp_path):
        spec = SyntheticSessionSpec(duration=30.0, blink_times=(3.0, 11.5, 22.0), seed=2)
        art = gen_session(spec, tmp_path / "s")
        m = load_session(art.manifest_path)
        assert m.session_id == "synth-0002"
        assert m.fps == 30.0
        assert m.stream_kinds == ("RGB",)
        assert m.min_frame_count == 900
        eeg = load_eeg(art.eeg_path)
        assert len(eeg) == 30
        assert read_ground_truth(art.truth_path) == list(art.events)

    def test_eeg_pulse_per_blink(self, tmp_path):
        times = (3.0, 11.5, 22.0)
        spec = SyntheticSessionSpec(duration=30.0, blink_times=times, seed=2)
        art = gen_session(spec, tmp_path / "s")
        eeg = load_eeg(art.eeg_path)
        pulse_bins = {min(int(math.floor(t + 0.5)), 29) for t in times}
        for k, row in enumerate(eeg):
            if k in pulse_bins:
                assert row.blink_strength >= 30.0
            else:
                assert row.blink_strength < 10.0

    def test_attention_follows_profile(self, tmp_path):
        prof = ((0.0, 20.0), (10.0, 80.0))
        spec = SyntheticSessionSpec(
            duration=20.0, blink_times=(5.0,), attention_profile=prof, seed=0
        )
        art = gen_session(spec, tmp_path / "s")
        for row in load_eeg(art.eeg_path):
            assert row.attention == pytest.approx(profile_value(prof, row.t), abs=1e-4)

    def test_truth_spans(self, tmp_path):
        spec = SyntheticSessionSpec(
            duration=60.0, blink_times=tuple(float(t) for t in range(3, 57, 3)), seed=7
        )
        art = gen_session(spec, tmp_path / "s")
        assert len(art.events) == 18
        for ev, t in zip(art.events, art.blink_times):
            span = ev.end_frame - ev.start_frame + 1
            assert 3 <= span <= 13
            assert ev.center_frame == time_to_frame(t, 30.0)

    def test_unsorted_times_sorted_in_truth(self, tmp_path):
        spec = SyntheticSessionSpec(duration=30.0, blink_times=(22.0, 3.0, 11.5), seed=2)
        art = gen_session(spec, tmp_path / "s")
        assert art.blink_times == (3.0, 11.5, 22.0)
        starts = [ev.start_frame for ev in art.events]
        assert starts == sorted(starts)

    def test_snap_to_seconds(self, tmp_path):
        spec = SyntheticSessionSpec(
            duration=30.0, blink_times=(3.4, 11.6, 22.2), seed=2, snap_to_seconds=True
        )
        art = gen_session(spec, tmp_path / "s")
        assert art.blink_times == (3.0, 12.0, 22.0)

    def test_colliding_spans_rejected(self, tmp_path):
        spec = SyntheticSessionSpec(duration=30.0, blink_times=(5.0, 5.03), seed=2)
        with pytest.raises(OverlappingBlinks):
            gen_session(spec, tmp_path / "s")

    def test_time_outside_duration_rejected(self, tmp_path):
        spec = SyntheticSessionSpec(duration=10.0, blink_times=(20.0,), seed=0)
        with pytest.raises(ValueError):
            gen_session(spec, tmp_path / "s")

    def test_multiple_streams(self, tmp_path):
        spec = SyntheticSessionSpec(duration=10.0, blink_times=(5.0,), seed=0)
        art = gen_session(spec, tmp_path / "s", stream_kinds=("RGB", "NIR_LEFT"))
        m = load_session(art.manifest_path)
        assert m.stream_kinds == ("RGB", "NIR_LEFT")

    def test_rendered_frames_on_disk(self, rendered_session, rendered_manifest):
        stream = rendered_manifest.stream("RGB")
        assert stream.frame_count == 480
        first = stream.frame_path(0)
        last = stream.frame_path(479)
        assert first.name == "000000.png" and first.is_file() and last.is_file()
        with Image.open(first) as im:
            assert im.size == (320, 240)

    def test_candidates_recover_truth(self, rendered_session, rendered_manifest):
        eeg = load_eeg(rendered_session.eeg_path)
        cands = extract_candidates(
            eeg, session_id=rendered_manifest.session_id, fps=rendered_manifest.fps
        )
        _, recall = match_candidates(cands, rendered_session.events)
        assert recall == 1.0


class TestRenderFace:
    def test_shape_range_and_truth_geometry(self):
        img, truth = render_face("open", width=320, height=240, noise_level=0.0)
        assert img.shape == (240, 320, 3) and img.dtype == np.float32
        assert img.min() >= 0.0 and img.max() <= 1.0
        assert truth["state"] == "open"
        assert truth["rx"] == pytest.approx(0.07 * 320)
        assert truth["ry"] == pytest.approx(0.55 * 0.07 * 320)
        assert truth["eye_centers"]["left"] == pytest.approx([160 - 57.6, 96.0])
        assert truth["eye_centers"]["right"] == pytest.approx([160 + 57.6, 96.0])
        for side in ("left", "right"):
            cx, cy = truth["eye_centers"][side]
            rx, ry = truth["rx"], truth["ry"]
            assert truth["eye_boxes"][side] == pytest.approx(
                [cx - rx, cy - ry, cx + rx, cy + ry]
            )

    def test_state_changes_only_the_eyes(self):
        open_img, truth = render_face("open", noise_level=0.0, seed=1)
        closed_img, _ = render_face("closed", noise_level=0.0, seed=1)
        diff = np.abs(open_img - closed_img).max(axis=2)
        changed_ys, changed_xs = np.nonzero(diff > 1e-6)
        assert len(changed_xs) > 0
        for side in ("left", "right"):
            x0, y0, x1, y1 = truth["eye_boxes"][side]
            inside = (
                (changed_xs >= x0 - 3) & (changed_xs <= x1 + 3)
                & (changed_ys >= y0 - 3) & (changed_ys <= y1 + 3)
            )
            changed_xs, changed_ys = changed_xs[~inside], changed_ys[~inside]
        assert len(changed_xs) == 0


class TestRenderEye:
    def test_open_vs_closed_at_sclera(self):
        open_crop, open_label = render_eye(SyntheticEyeSpec(state="open"))
        closed_crop, closed_label = render_eye(SyntheticEyeSpec(state="closed"))
        assert (open_label, closed_label) == ("open", "closed")
        assert open_crop.pixels.shape == (50, 50, 3)
        # just inside the outline, horizontally off-center: sclera vs lash
        assert open_crop.pixels[25, 32, 0] == pytest.approx(0.93, abs=0.02)
        assert closed_crop.pixels[25, 32, 0] == pytest.approx(0.12, abs=0.02)


class TestMakeCropSet:
    def test_shapes_labels_and_determinism(self):
        xs, ys = make_crop_set(10, seed=3, open_fraction=0.3)
        assert xs.shape == (10, 50, 50, 3) and xs.dtype == np.float32
        assert ys.shape == (10,) and ys.dtype == np.int64
        assert xs.min() >= 0.0 and xs.max() <= 1.0
        assert list(ys) == [0, 0, 0, 1, 1, 1, 1, 1, 1, 1]
        xs2, ys2 = make_crop_set(10, seed=3, open_fraction=0.3)
        np.testing.assert_array_equal(xs, xs2)
        np.testing.assert_array_equal(ys, ys2)
        xs3, _ = make_crop_set(10, seed=4, open_fraction=0.3)
        assert not np.array_equal(xs, xs3)


class TestRenderBenchmark:
    def test_layout_and_labels(self, tmp_path):
        info = render_benchmark(
            tmp_path, n_blink=1, n_no_blink=1, seed=0, frame_size=(160, 120)
        )
        assert info == {"out": str(tmp_path), "blink": 1, "no_blink": 1, "samples": 4}
        lines = (tmp_path / "labels.csv").read_text().strip().splitlines()
        assert lines[0] == "sample_id,eye_side,label"
        assert sorted(lines[1:]) == [
            "b0000,left,blink",
            "b0000,right,blink",
            "n0000,left,no_blink",
            "n0000,right,no_blink",
        ]
        for label, sid in (("blink", "b0000"), ("no_blink", "n0000")):
            for side in ("left", "right"):
                frames = sorted((tmp_path / label / sid / side).iterdir())
                assert [p.name for p in frames] == [f"{k:02d}.png" for k in range(13)]


def _cand(cid, center):
    return BlinkCandidate(cid, "s", center / 30.0, center, 50.0)


class TestMatchCandidates:
    def test_greedy_nearest(self):
        events = [TruthEvent("e0", 95, 105), TruthEvent("e1", 295, 305)]
        cands = [_cand("a", 98), _cand("b", 103), _cand("c", 301), _cand("d", 500)]
        matched, recall = match_candidates(cands, events)
        assert matched == {"a": "e0", "c": "e1"}
        assert recall == 1.0

    def test_each_event_claimed_once(self):
        events = [TruthEvent("e0", 95, 105)]
        matched, recall = match_candidates([_cand("a", 98), _cand("b", 101)], events)
        assert matched == {"b": "e0"}  # closer candidate claims the event
        assert recall == 1.0

    def test_tolerance_boundary(self):
        events = [TruthEvent("e0", 95, 105)]  # center 100
        assert match_candidates([_cand("a", 115)], events)[0] == {"a": "e0"}
        assert match_candidates([_cand("a", 116)], events)[0] == {}

    def test_no_events(self):
        matched, recall = match_candidates([_cand("a", 10)], [])
        assert matched == {} and recall == 1.0


class TestSimulateReview:
    def test_accepts_matched_rejects_rest(self):
        events = [TruthEvent("e0", 95, 105)]
        cands = [_cand("a", 99), _cand("b", 400)]
        decisions = simulate_review(cands, events)
        assert [(d.candidate_id, d.decision) for d in decisions] == [
            ("a", "accept"),
            ("b", "reject"),
        ]
        assert decisions[0].decided_at < decisions[1].decided_at
        assert decisions[0].reviewer == "synthetic"


class TestOracles:
    def test_oracle_eer_requires_both_classes(self):
        with pytest.raises(EmptyClass):
            oracle_eer([], [0.1])
        with pytest.raises(EmptyClass):
            oracle_eer([0.9], [])

    def test_oracle_eer_separable(self):
        thr, fpr, fnr = oracle_eer([0.8, 0.9], [0.1, 0.2])
        assert (thr, fpr, fnr) == (0.5, 0.0, 0.0)

    def test_oracle_bpm_hand_case(self):
        evs = [TruthEvent("e0", 0, 2), TruthEvent("e1", 150, 152), TruthEvent("e2", 900, 902)]
        times, values = oracle_bpm(evs, 20.0, 5.0, 40.0)
        assert times == [0.0, 5.0, 10.0, 15.0, 20.0]
        assert values == [6.0, 3.0, 0.0, 3.0, 3.0]
