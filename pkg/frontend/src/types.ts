export type Decision = "accept" | "reject";
export type CandidateStatus = "pending" | "accepted" | "rejected";

export interface CandidateSummary {
  candidate_id: string;
  session_id: string;
  t_eeg: number;
  center_frame: number;
  strength: number;
  status: CandidateStatus;
}

export interface CandidateDetail extends CandidateSummary {
  /** 21 frame URLs covering the candidate window in order. */
  frames: string[];
  /** Index of the blink-center frame within `frames` (always 10). */
  center_offset: number;
}

export interface CandidatePage {
  total: number;
  offset: number;
  limit: number;
  items: CandidateSummary[];
}

export interface Progress {
  pending: number;
  accepted: number;
  rejected: number;
  total: number;
}

export interface DecisionAck {
  candidate_id: string;
  status: CandidateStatus;
  decided_at: string;
}
