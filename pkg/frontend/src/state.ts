/** Pure view-model state. Truth always comes from the server: snapshots
 * replace the queue wholesale, and the event feed (replayed from any
 * cursor) is the only source of retrain history. Reloading the page and
 * replaying events from zero reproduces the identical state. */
import type {
  ApiEvent,
  EntryCard,
  ProposalCard,
  RetrainReport,
  StatusPayload,
} from "./types.js";

export interface AppState {
  cursor: number;
  status: StatusPayload | null;
  entries: EntryCard[];
  proposals: ProposalCard[];
  reports: RetrainReport[];
  lastError: string | null;
}

export function initialState(): AppState {
  return {
    cursor: 0,
    status: null,
    entries: [],
    proposals: [],
    reports: [],
    lastError: null,
  };
}

export function applyEvents(state: AppState, events: ApiEvent[]): AppState {
  let cursor = state.cursor;
  const reports = [...state.reports];
  const proposals = [...state.proposals];
  for (const event of events) {
    if (event.seq <= cursor) {
      continue;      // replays never double-apply
    }
    cursor = event.seq;
    if (event.kind === "retrain-done") {
      reports.push(event.payload as unknown as RetrainReport);
    } else if (event.kind === "proposal") {
      // upsert: later events carry approval/rejection status changes
      const card = event.payload as unknown as ProposalCard;
      const at = proposals.findIndex((p) => p.proposal_id === card.proposal_id);
      if (at >= 0) {
        proposals[at] = card;
      } else {
        proposals.push(card);
      }
    }
  }
  return { ...state, cursor, reports, proposals };
}

export function applySnapshot(state: AppState, status: StatusPayload,
                              queue: EntryCard[]): AppState {
  return {
    ...state,
    status,
    entries: queue,
  };
}

export function withError(state: AppState, message: string | null): AppState {
  return { ...state, lastError: message };
}

/** Retrain unlocks once the last pending item is resolved and there is
 * resolved work in the buffer. */
export function canRetrain(state: AppState): boolean {
  const status = state.status;
  return status !== null && status.pending === 0 && status.buffer_size > 0;
}

export function openProposals(state: AppState): ProposalCard[] {
  return state.proposals.filter((p) => p.status === "proposed");
}

/** Mismatch-rate trend: before/after of every retrain, in order. */
export function trendPoints(reports: RetrainReport[]): { label: string; rate: number }[] {
  const points: { label: string; rate: number }[] = [];
  for (const report of reports) {
    points.push({ label: `v${report.version_before} before`, rate: report.mismatch_before });
    points.push({ label: `v${report.version_after} after`, rate: report.mismatch_after });
  }
  return points;
}

/** Display formatting only; stored values stay exactly as the API sent
 * them. */
export function formatRate(value: number): string {
  return (value * 100).toFixed(2) + "%";
}

export function formatScore(value: number): string {
  return value.toFixed(4);
}
