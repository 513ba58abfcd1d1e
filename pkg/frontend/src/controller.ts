import type { ReviewBackend } from "./api.js";
import { ReviewQueue } from "./queue.js";
import { StripPlayer, type Scheduler } from "./player.js";
import type { CandidateDetail, Decision, Progress } from "./types.js";

/** Everything the controller ever shows; implemented over the real DOM in
 *  dom.ts and by plain records in tests. */
export interface Display {
  showCandidate(detail: CandidateDetail, pendingLeft: number): void;
  showFrame(index: number, url: string, isCenter: boolean): void;
  showProgress(progress: Progress): void;
  showToast(message: string): void;
  showComplete(progress: Progress): void;
}

/** Keyboard-driven review session over the candidate queue.
 *
 * Server state is the only truth: a decision takes effect on screen only
 * after the POST is acknowledged, statuses come from the acknowledgment
 * body, and counts are re-fetched rather than adjusted locally. At most
 * one decision POST is in flight; extra keystrokes are dropped while one
 * is pending.
 */
export class ReviewController {
  private queue = new ReviewQueue();
  private player: StripPlayer;
  private current: CandidateDetail | null = null;
  private inflight = false;

  constructor(
    private api: ReviewBackend,
    private display: Display,
    schedule: Scheduler,
    private reviewer: string,
  ) {
    this.player = new StripPlayer(schedule, (k) => this.renderFrame(k));
  }

  async start(): Promise<void> {
    this.queue.load(await this.api.listAll());
    this.display.showProgress(await this.api.getProgress());
    await this.showCurrent();
  }

  async handleKey(key: string): Promise<void> {
    switch (key) {
      case "a":
      case "A":
        return this.decide("accept");
      case "r":
      case "R":
        return this.decide("reject");
      case "u":
      case "U":
        return this.skipCurrent();
      case "ArrowLeft":
        if (this.current) this.player.step(-1);
        return;
      case "ArrowRight":
        if (this.current) this.player.step(1);
        return;
      case " ":
        if (this.current) this.player.toggle();
        return;
      default:
        return;
    }
  }

  /** Scrub-bar hook: jump to a frame and hold there. */
  scrub(k: number): void {
    if (!this.current) return;
    this.player.pause();
    this.player.seek(k);
  }

  get currentCandidate(): CandidateDetail | null {
    return this.current;
  }

  private renderFrame(k: number): void {
    if (!this.current) return;
    this.display.showFrame(k, this.current.frames[k], k === this.current.center_offset);
  }

  private async showCurrent(): Promise<void> {
    const id = this.queue.currentId();
    if (id === null) {
      this.player.pause();
      this.current = null;
      this.display.showComplete(await this.api.getProgress());
      return;
    }
    this.current = await this.api.getCandidate(id);
    this.display.showCandidate(this.current, this.queue.pendingCount());
    this.player.reset();
    this.player.play();
  }

  private async skipCurrent(): Promise<void> {
    if (!this.current) return;
    this.queue.skip();
    await this.showCurrent();
  }

  private async decide(decision: Decision): Promise<void> {
    if (!this.current || this.inflight) return;
    this.inflight = true;
    try {
      const ack = await this.api.postDecision(this.current.candidate_id, decision, this.reviewer);
      this.queue.setStatus(ack.candidate_id, ack.status);
      this.display.showProgress(await this.api.getProgress());
      await this.showCurrent();
    } catch (err) {
      // the candidate stays on screen; the reviewer can retry
      this.display.showToast(err instanceof Error ? err.message : String(err));
    } finally {
      this.inflight = false;
    }
  }
}
