"""Shared fixtures.

The expensive artifacts (trained checkpoint, rendered benchmark, rendered
session, built dataset) are session-scoped; the ones the acceptance suite
times also report how long they took to build so those tests can account
for setup honestly.
"""
import sys
import time

import pytest

from blinklab.classifier import TrainConfig, train
from blinklab.ingest import load_eeg, load_session
from blinklab.labeling import build_dataset, extract_candidates
from blinklab.synthdata import (
    SyntheticSessionSpec,
    gen_session,
    make_crop_set,
    render_benchmark,
    simulate_review,
)


@pytest.fixture(scope="session")
def trained_checkpoint_info():
    """(checkpoint, build_seconds) on the seed-fixed 2,000-crop set."""
    t0 = time.monotonic()
    crops, labels = make_crop_set(2000, seed=0)
    ckpt = train(crops, labels, TrainConfig(epochs=12, seed=0))
    return ckpt, time.monotonic() - t0


@pytest.fixture(scope="session")
def trained_checkpoint(trained_checkpoint_info):
    return trained_checkpoint_info[0]


@pytest.fixture(scope="session")
def bench_info(tmp_path_factory):
    """(bench_root, build_seconds): 30 blink + 30 no-blink rendered samples."""
    root = tmp_path_factory.mktemp("bench")
    t0 = time.monotonic()
    render_benchmark(root, n_blink=30, n_no_blink=30, seed=7)
    return root, time.monotonic() - t0


@pytest.fixture(scope="session")
def rendered_session(tmp_path_factory):
    """A short fully rendered session: frames, EEG trace, ground truth."""
    out = tmp_path_factory.mktemp("sess")
    spec = SyntheticSessionSpec(duration=16.0, blink_times=(2.5, 6.0, 9.5, 13.0), seed=5)
    return gen_session(spec, out / "s", render_frames=True)


@pytest.fixture(scope="session")
def rendered_manifest(rendered_session):
    return load_session(rendered_session.manifest_path)


@pytest.fixture(scope="session")
def built_dataset(tmp_path_factory, rendered_session, rendered_manifest):
    """(dataset_root, summary) for the rendered session, reviewed in full."""
    eeg = load_eeg(rendered_session.eeg_path)
    candidates = extract_candidates(
        eeg, session_id=rendered_manifest.session_id, fps=rendered_manifest.fps
    )
    decisions = simulate_review(candidates, rendered_session.events)
    root = tmp_path_factory.mktemp("dataset")
    summary = build_dataset([rendered_manifest], candidates, decisions, root)
    return root, summary


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # one scannable line per acceptance criterion, after capture ends
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", ()) if mod else ()
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
