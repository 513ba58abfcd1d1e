import type {
  CandidateDetail,
  CandidatePage,
  CandidateStatus,
  CandidateSummary,
  Decision,
  DecisionAck,
  Progress,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** What the controller needs from the server; ReviewApi is the real one. */
export interface ReviewBackend {
  listAll(status?: CandidateStatus): Promise<CandidateSummary[]>;
  getCandidate(id: string): Promise<CandidateDetail>;
  postDecision(id: string, decision: Decision, reviewer: string): Promise<DecisionAck>;
  getProgress(): Promise<Progress>;
}

export class ReviewApi implements ReviewBackend {
  constructor(
    private baseUrl = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = `${resp.status} ${resp.statusText}`;
      try {
        const body = (await resp.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  listCandidates(status?: CandidateStatus, offset = 0, limit = 100): Promise<CandidatePage> {
    const params = new URLSearchParams({ offset: String(offset), limit: String(limit) });
    if (status) params.set("status", status);
    return this.request<CandidatePage>(`/api/candidates?${params.toString()}`);
  }

  async listAll(status?: CandidateStatus): Promise<CandidateSummary[]> {
    const limit = 500; // server-side page cap
    const out: CandidateSummary[] = [];
    for (let offset = 0; ; offset += limit) {
      const page = await this.listCandidates(status, offset, limit);
      out.push(...page.items);
      if (out.length >= page.total || page.items.length === 0) break;
    }
    return out;
  }

  getCandidate(id: string): Promise<CandidateDetail> {
    return this.request<CandidateDetail>(`/api/candidates/${encodeURIComponent(id)}`);
  }

  postDecision(id: string, decision: Decision, reviewer: string): Promise<DecisionAck> {
    return this.request<DecisionAck>(`/api/candidates/${encodeURIComponent(id)}/decision`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ decision, reviewer }),
    });
  }

  getProgress(): Promise<Progress> {
    return this.request<Progress>("/api/progress");
  }
}
