"""HTTP service backing the manual candidate review step.

Serves candidate metadata and frame images, accepts accept/reject
decisions, and appends every decision to the decisions CSV before touching
in-memory state: the file is the single source of truth, and a restart
rebuilds state purely from it. Re-deciding a candidate is allowed; the
record with the latest decided_at wins.
"""
from __future__ import annotations

import dataclasses
import os
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .labeling import (
    BlinkCandidate,
    DecisionRecord,
    WINDOW_HALF,
    apply_decisions,
    append_decision,
    read_candidates,
    read_decisions,
)

BIND_ENV_VAR = "BLINKLAB_BIND"
VALID_DECISIONS = ("accept", "reject")
STATUS_BY_DECISION = {"accept": "accepted", "reject": "rejected"}


class ReviewState:
    """Candidates plus their current statuses, mirrored from the decisions
    file. Writes are serialized; the file is appended before memory is
    updated so a crash can never lose an acknowledged decision."""

    def __init__(self, candidates: list[BlinkCandidate], decisions_path: Path):
        self.decisions_path = Path(decisions_path)
        self._lock = threading.Lock()
        self._order = [c.candidate_id for c in candidates]
        decisions = read_decisions(self.decisions_path)
        updated, _unknown = apply_decisions(candidates, decisions)
        self._by_id = {c.candidate_id: c for c in updated}
        self._decided_at: dict[str, datetime] = {}
        for rec in decisions:
            cur = self._decided_at.get(rec.candidate_id)
            if rec.candidate_id in self._by_id and (cur is None or rec.decided_at >= cur):
                self._decided_at[rec.candidate_id] = rec.decided_at

    def list(self, status: str | None, offset: int, limit: int) -> dict:
        items = [self._by_id[cid] for cid in self._order]
        if status:
            items = [c for c in items if c.status == status]
        page = items[offset : offset + limit]
        return {
            "total": len(items),
            "offset": offset,
            "limit": limit,
            "items": [self._candidate_dict(c) for c in page],
        }

    def get(self, candidate_id: str) -> BlinkCandidate | None:
        return self._by_id.get(candidate_id)

    def decide(self, candidate_id: str, decision: str, reviewer: str, now: datetime) -> BlinkCandidate:
        with self._lock:
            candidate = self._by_id[candidate_id]
            record = DecisionRecord(
                candidate_id=candidate_id,
                decision=decision,
                reviewer=reviewer,
                decided_at=now,
            )
            append_decision(self.decisions_path, record)
            # last decided_at wins; an equal timestamp counts as later
            # because its row sits later in the file
            prev = self._decided_at.get(candidate_id)
            if prev is None or now >= prev:
                self._decided_at[candidate_id] = now
                self._by_id[candidate_id] = dataclasses.replace(
                    candidate, status=STATUS_BY_DECISION[decision]
                )
            return self._by_id[candidate_id]

    def progress(self) -> dict:
        counts = {"pending": 0, "accepted": 0, "rejected": 0}
        for cid in self._order:
            counts[self._by_id[cid].status] += 1
        counts["total"] = len(self._order)
        return counts

    @staticmethod
    def _candidate_dict(c: BlinkCandidate) -> dict:
        return {
            "candidate_id": c.candidate_id,
            "session_id": c.session_id,
            "t_eeg": c.t_eeg,
            "center_frame": c.center_frame,
            "strength": c.strength,
            "status": c.status,
        }


class DecisionBody(BaseModel):
    decision: str
    reviewer: str = ""


def create_app(
    candidates_path: str | Path,
    decisions_path: str | Path,
    frames_root: str | Path | None = None,
    ui_dir: str | Path | None = None,
    clock: Callable[[], datetime] | None = None,
) -> FastAPI:
    candidates = read_candidates(candidates_path)
    state = ReviewState(candidates, Path(decisions_path))
    app = FastAPI(title="blink candidate review")
    app.state.review = state
    app.state.clock = clock or (lambda: datetime.now(timezone.utc))
    frames_base = Path(frames_root) if frames_root else None

    @app.get("/api/candidates")
    def list_candidates(
        status: str | None = Query(default=None),
        offset: int = Query(default=0, ge=0),
        limit: int = Query(default=50, ge=1, le=500),
    ):
        if status and status not in ("pending", "accepted", "rejected"):
            raise HTTPException(status_code=400, detail=f"unknown status filter {status!r}")
        return state.list(status, offset, limit)

    @app.get("/api/candidates/{candidate_id}")
    def get_candidate(candidate_id: str):
        c = state.get(candidate_id)
        if c is None:
            raise HTTPException(status_code=404, detail=f"unknown candidate {candidate_id}")
        payload = ReviewState._candidate_dict(c)
        payload["frames"] = [
            f"/api/candidates/{candidate_id}/frames/{k}" for k in range(2 * WINDOW_HALF + 1)
        ]
        payload["center_offset"] = WINDOW_HALF
        return payload

    @app.get("/api/candidates/{candidate_id}/frames/{k}")
    def get_frame(candidate_id: str, k: int):
        c = state.get(candidate_id)
        if c is None:
            raise HTTPException(status_code=404, detail=f"unknown candidate {candidate_id}")
        if not 0 <= k <= 2 * WINDOW_HALF:
            raise HTTPException(status_code=404, detail=f"frame offset {k} outside 0..20")
        if frames_base is None:
            raise HTTPException(status_code=404, detail="no frames root configured")
        frame_index = c.center_frame - WINDOW_HALF + k
        if frame_index < 0:
            raise HTTPException(status_code=404, detail="frame before session start")
        name = f"{frame_index:06d}.png"
        for path in (frames_base / c.session_id / name, frames_base / name):
            if path.is_file():
                return FileResponse(path, media_type="image/png")
        raise HTTPException(status_code=404, detail=f"frame {name} not found")

    @app.post("/api/candidates/{candidate_id}/decision")
    def post_decision(candidate_id: str, body: DecisionBody):
        if body.decision not in VALID_DECISIONS:
            raise HTTPException(
                status_code=400, detail=f"decision must be one of {VALID_DECISIONS}"
            )
        if state.get(candidate_id) is None:
            raise HTTPException(status_code=404, detail=f"unknown candidate {candidate_id}")
        now = app.state.clock()
        updated = state.decide(candidate_id, body.decision, body.reviewer, now)
        return {
            "candidate_id": candidate_id,
            "status": updated.status,
            "decided_at": now.isoformat(),
        }

    @app.get("/api/progress")
    def progress():
        return state.progress()

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(
    candidates_path: str | Path,
    decisions_path: str | Path,
    frames_root: str | Path | None,
    ui_dir: str | Path | None,
    port: int,
) -> None:
    import uvicorn

    host = os.environ.get(BIND_ENV_VAR, "127.0.0.1")
    app = create_app(candidates_path, decisions_path, frames_root, ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
