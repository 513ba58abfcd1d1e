import type { ReviewBackend } from "../src/api.js";
import type { Display } from "../src/controller.js";
import type { Scheduler } from "../src/player.js";
import type {
  CandidateDetail,
  CandidateStatus,
  CandidateSummary,
  Decision,
  DecisionAck,
  Progress,
} from "../src/types.js";

export function makeSummaries(n: number, session = "s"): CandidateSummary[] {
  return Array.from({ length: n }, (_, k) => ({
    candidate_id: `${session}-c${String(k).padStart(4, "0")}`,
    session_id: session,
    t_eeg: 2 * k + 2,
    center_frame: 60 * (k + 1),
    strength: 40 + k,
    status: "pending" as CandidateStatus,
  }));
}

export class FakeDisplay implements Display {
  shown: Array<{ id: string; pendingLeft: number }> = [];
  frames: Array<{ index: number; url: string; isCenter: boolean }> = [];
  progressUpdates: Progress[] = [];
  toasts: string[] = [];
  completed: Progress | null = null;

  get currentId(): string | null {
    return this.shown.length ? this.shown[this.shown.length - 1].id : null;
  }

  get lastFrame(): { index: number; url: string; isCenter: boolean } | null {
    return this.frames.length ? this.frames[this.frames.length - 1] : null;
  }

  showCandidate(detail: CandidateDetail, pendingLeft: number): void {
    this.shown.push({ id: detail.candidate_id, pendingLeft });
  }

  showFrame(index: number, url: string, isCenter: boolean): void {
    this.frames.push({ index, url, isCenter });
  }

  showProgress(progress: Progress): void {
    this.progressUpdates.push(progress);
  }

  showToast(message: string): void {
    this.toasts.push(message);
  }

  showComplete(progress: Progress): void {
    this.completed = progress;
  }
}

/** Interval scheduler driven by hand: tick() fires every live task once. */
export class ManualScheduler {
  private tasks: Array<{ fn: () => void; live: boolean }> = [];
  lastIntervalMs: number | null = null;

  schedule: Scheduler = (ms, fn) => {
    this.lastIntervalMs = ms;
    const task = { fn, live: true };
    this.tasks.push(task);
    return () => {
      task.live = false;
    };
  };

  tick(times = 1): void {
    for (let i = 0; i < times; i++) {
      for (const task of [...this.tasks]) if (task.live) task.fn();
    }
  }

  get activeCount(): number {
    return this.tasks.filter((t) => t.live).length;
  }
}

export class FakeBackend implements ReviewBackend {
  posts: Array<{ id: string; decision: Decision; reviewer: string }> = [];
  /** Awaited before a POST takes effect; lets tests defer or fail it. */
  postGate: ((id: string, decision: Decision) => Promise<void>) | null = null;

  constructor(public candidates: CandidateSummary[]) {}

  async listAll(status?: CandidateStatus): Promise<CandidateSummary[]> {
    const items = status ? this.candidates.filter((c) => c.status === status) : this.candidates;
    return items.map((c) => ({ ...c }));
  }

  async getCandidate(id: string): Promise<CandidateDetail> {
    const c = this.candidates.find((x) => x.candidate_id === id);
    if (!c) throw new Error(`unknown candidate ${id}`);
    return {
      ...c,
      frames: Array.from({ length: 21 }, (_, k) => `/api/candidates/${id}/frames/${k}`),
      center_offset: 10,
    };
  }

  async postDecision(id: string, decision: Decision, reviewer: string): Promise<DecisionAck> {
    this.posts.push({ id, decision, reviewer });
    if (this.postGate) await this.postGate(id, decision);
    const c = this.candidates.find((x) => x.candidate_id === id);
    if (!c) throw new Error(`unknown candidate ${id}`);
    c.status = decision === "accept" ? "accepted" : "rejected";
    return { candidate_id: id, status: c.status, decided_at: new Date().toISOString() };
  }

  async getProgress(): Promise<Progress> {
    const count = (s: CandidateStatus) => this.candidates.filter((c) => c.status === s).length;
    return {
      pending: count("pending"),
      accepted: count("accepted"),
      rejected: count("rejected"),
      total: this.candidates.length,
    };
  }
}
