import type { CandidateStatus, CandidateSummary } from "./types.js";

/** Ordered walk over the server's candidate list.
 *
 * Skips are purely local: a skipped candidate keeps its pending status on
 * the server and comes around again after the rest of the queue (or after
 * a page refresh). Statuses only change via setStatus, which the
 * controller calls with the server's acknowledged value.
 */
export class ReviewQueue {
  private ids: string[] = [];
  private statuses = new Map<string, CandidateStatus>();
  private cursor = 0;

  load(items: CandidateSummary[]): void {
    this.ids = items.map((c) => c.candidate_id);
    this.statuses = new Map(items.map((c) => [c.candidate_id, c.status]));
    this.cursor = 0;
  }

  get size(): number {
    return this.ids.length;
  }

  pendingCount(): number {
    let n = 0;
    for (const status of this.statuses.values()) if (status === "pending") n++;
    return n;
  }

  /** The next pending candidate at or after the cursor, wrapping; null
   *  when nothing is left to review. */
  currentId(): string | null {
    const n = this.ids.length;
    for (let i = 0; i < n; i++) {
      const at = (this.cursor + i) % n;
      const id = this.ids[at];
      if (this.statuses.get(id) === "pending") {
        this.cursor = at;
        return id;
      }
    }
    return null;
  }

  /** Step past the current candidate without deciding it. */
  skip(): void {
    if (this.ids.length) this.cursor = (this.cursor + 1) % this.ids.length;
  }

  setStatus(id: string, status: CandidateStatus): void {
    if (this.statuses.has(id)) this.statuses.set(id, status);
  }

  statusOf(id: string): CandidateStatus | undefined {
    return this.statuses.get(id);
  }
}
