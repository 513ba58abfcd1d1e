"""Manifest parsing, EEG trace loading, and clock conversion."""
import json

import numpy as np
import pytest

from blinklab.errors import (
    InvariantViolation,
    MalformedManifest,
    MissingFile,
    NegativeBandPower,
    NegativeTime,
    NonMonotonicTimestamps,
)
from blinklab.ingest import (
    EEGSample,
    frame_to_time,
    load_eeg,
    load_session,
    time_to_frame,
    trace_duration,
)


def write_manifest(tmp_path, **overrides):
    raw = {
        "session_id": "s01",
        "subject_id": "u01",
        "wears_glasses": False,
        "eeg_path": "eeg.csv",
        "streams": [{"kind": "RGB", "path": "rgb", "frame_count": 300}],
    }
    raw.update(overrides)
    p = tmp_path / "session.json"
    p.write_text(json.dumps(raw))
    return p


def eeg_csv(tmp_path, rows, header="t,alpha,beta,gamma,delta,theta,blink_strength,attention"):
    p = tmp_path / "eeg.csv"
    p.write_text(header + "\n" + "\n".join(rows) + "\n")
    return p


class TestLoadSession:
    def test_happy_path(self, tmp_path):
        m = load_session(write_manifest(tmp_path, fps=25.0, resolution=[640, 480]))
        assert m.session_id == "s01"
        assert m.subject_id == "u01"
        assert m.wears_glasses is False
        assert m.fps == 25.0
        assert m.resolution == (640, 480)
        assert m.stream_kinds == ("RGB",)
        # relative paths resolve against the manifest directory
        assert m.eeg_path == tmp_path / "eeg.csv"
        assert m.stream("RGB").path == tmp_path / "rgb"
        assert m.stream("RGB").frame_path(42).name == "000042.png"

    def test_defaults(self, tmp_path):
        m = load_session(write_manifest(tmp_path))
        assert m.fps == 30.0
        assert m.resolution == (1280, 720)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            load_session(tmp_path / "nope.json")

    def test_not_json(self, tmp_path):
        p = tmp_path / "session.json"
        p.write_text("{broken")
        with pytest.raises(MalformedManifest):
            load_session(p)

    def test_not_an_object(self, tmp_path):
        p = tmp_path / "session.json"
        p.write_text("[1, 2]")
        with pytest.raises(MalformedManifest):
            load_session(p)

    @pytest.mark.parametrize(
        "field", ["session_id", "subject_id", "wears_glasses", "eeg_path", "streams"]
    )
    def test_missing_required_field(self, tmp_path, field):
        raw = json.loads(write_manifest(tmp_path).read_text())
        del raw[field]
        p = tmp_path / "session.json"
        p.write_text(json.dumps(raw))
        with pytest.raises(MalformedManifest, match=field):
            load_session(p)

    def test_duplicate_stream_kind(self, tmp_path):
        streams = [
            {"kind": "RGB", "path": "a", "frame_count": 10},
            {"kind": "RGB", "path": "b", "frame_count": 10},
        ]
        with pytest.raises(InvariantViolation, match="duplicate"):
            load_session(write_manifest(tmp_path, streams=streams))

    def test_unknown_stream_kind(self, tmp_path):
        streams = [{"kind": "DEPTH", "path": "d", "frame_count": 10}]
        with pytest.raises(InvariantViolation):
            load_session(write_manifest(tmp_path, streams=streams))

    def test_no_streams(self, tmp_path):
        with pytest.raises(InvariantViolation):
            load_session(write_manifest(tmp_path, streams=[]))

    def test_bad_fps(self, tmp_path):
        with pytest.raises(InvariantViolation):
            load_session(write_manifest(tmp_path, fps=0))
        with pytest.raises(MalformedManifest):
            load_session(write_manifest(tmp_path, fps="fast"))

    def test_bad_resolution(self, tmp_path):
        with pytest.raises(MalformedManifest):
            load_session(write_manifest(tmp_path, resolution=[640]))
        with pytest.raises(InvariantViolation):
            load_session(write_manifest(tmp_path, resolution=[640, -480]))

    def test_negative_frame_count(self, tmp_path):
        streams = [{"kind": "RGB", "path": "a", "frame_count": -1}]
        with pytest.raises(InvariantViolation):
            load_session(write_manifest(tmp_path, streams=streams))

    def test_min_frame_count(self, tmp_path):
        streams = [
            {"kind": "RGB", "path": "a", "frame_count": 100},
            {"kind": "NIR_LEFT", "path": "b", "frame_count": 90},
        ]
        m = load_session(write_manifest(tmp_path, streams=streams))
        assert m.min_frame_count == 90
        with pytest.raises(KeyError):
            m.stream("NIR_RIGHT")


class TestLoadEEG:
    def test_happy_path(self, tmp_path):
        p = eeg_csv(tmp_path, ["0.0,1,2,3,4,5,10.5,55", "1.0,1,2,3,4,5,0.0,60"])
        samples = load_eeg(p)
        assert len(samples) == 2
        assert samples[0].blink_strength == 10.5
        assert samples[0].alpha == 1.0
        assert samples[1].attention == 60.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            load_eeg(tmp_path / "eeg.csv")

    def test_non_monotonic(self, tmp_path):
        p = eeg_csv(tmp_path, ["0.0,1,1,1,1,1,0,50", "0.0,1,1,1,1,1,0,50"])
        with pytest.raises(NonMonotonicTimestamps):
            load_eeg(p)

    def test_negative_band(self, tmp_path):
        p = eeg_csv(tmp_path, ["0.0,-1,1,1,1,1,0,50"])
        with pytest.raises(NegativeBandPower):
            load_eeg(p)

    def test_negative_blink_strength(self, tmp_path):
        p = eeg_csv(tmp_path, ["0.0,1,1,1,1,1,-2,50"])
        with pytest.raises(NegativeBandPower):
            load_eeg(p)

    def test_attention_clipped_with_warning(self, tmp_path, caplog):
        p = eeg_csv(tmp_path, ["0.0,1,1,1,1,1,0,130", "1.0,1,1,1,1,1,0,-5"])
        with caplog.at_level("WARNING"):
            samples = load_eeg(p)
        assert samples[0].attention == 100.0
        assert samples[1].attention == 0.0
        assert "clipped" in caplog.text

    def test_missing_column(self, tmp_path):
        p = eeg_csv(
            tmp_path,
            ["0.0,1,1,1,1,1,0"],
            header="t,alpha,beta,gamma,delta,theta,blink_strength",
        )
        with pytest.raises(ValueError, match="attention"):
            load_eeg(p)

    def test_non_numeric_value(self, tmp_path):
        p = eeg_csv(tmp_path, ["0.0,1,1,x,1,1,0,50"])
        with pytest.raises(ValueError):
            load_eeg(p)


class TestClockConversion:
    def test_known_values(self):
        assert time_to_frame(0.0, 30.0) == 0
        assert time_to_frame(1.0, 30.0) == 30
        assert time_to_frame(2.5, 24.0) == 60
        assert time_to_frame(0.0166, 30.0) == 0
        assert time_to_frame(0.0167, 30.0) == 1

    def test_half_frame_rounds_up(self):
        # .5 of a frame rounds away from zero (0.25 s and 0.75 s are exact
        # binary fractions, so 2.5 and 7.5 frames are computed exactly)
        assert time_to_frame(0.25, 10.0) == 3
        assert time_to_frame(0.75, 10.0) == 8

    def test_negative_time(self):
        with pytest.raises(NegativeTime):
            time_to_frame(-0.1, 30.0)

    def test_bad_fps(self):
        with pytest.raises(ValueError):
            time_to_frame(1.0, 0.0)
        with pytest.raises(ValueError):
            frame_to_time(1, -30.0)

    def test_frame_to_time(self):
        assert frame_to_time(30, 30.0) == 1.0
        assert frame_to_time(0, 25.0) == 0.0
        with pytest.raises(ValueError):
            frame_to_time(-1, 30.0)

    def test_round_trip_seeded(self):
        rng = np.random.default_rng(7)
        for _ in range(500):
            fps = float(rng.uniform(10.0, 60.0))
            frame = int(rng.integers(0, 100_000))
            assert time_to_frame(frame_to_time(frame, fps), fps) == frame


def _trace(times):
    return [EEGSample(t, 1, 1, 1, 1, 1, 0, 50) for t in times]


class TestTraceDuration:
    def test_one_hz(self):
        assert trace_duration(_trace(float(t) for t in range(240))) == 240.0

    def test_median_spacing(self):
        assert trace_duration(_trace([0.0, 0.5, 1.0, 1.5])) == 2.0

    def test_single_sample_fallback(self):
        assert trace_duration(_trace([3.0])) == 4.0
        assert trace_duration(_trace([3.0]), nominal_dt=0.5) == 3.5

    def test_empty(self):
        assert trace_duration([]) == 0.0
