/** Payload shapes of the triage service API. */

export interface ClassInfo {
  id: number;
  name: string;
}

export interface StatusPayload {
  bundle_version: number;
  classes: ClassInfo[];
  buffer_size: number;
  pending: number;
  min_pending: number;
  should_retrain: boolean;
  proposals: number;
  events: number;
}

export interface Verdict {
  sample_id: string;
  mismatch_flag: boolean;
  mismatch_score: number;
  context_flag: boolean;
  context_distance: number;
  reason: string;
  face_label: number;
  posture_label: number;
  face_probs: number[];
  posture_probs: number[];
}

export interface EntryCard {
  id: string;
  status: string;
  verdict: Verdict;
  resolved_label: number | null;
  proposal_id: string | null;
  consumed: boolean;
  timestamp: number;
}

export interface ProposalCard {
  proposal_id: string;
  member_ids: string[];
  centroid: number[];
  proposed_name: string | null;
  status: string;
  member_count: number;
}

export interface ApiEvent {
  seq: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface RetrainReport {
  mismatch_before: number;
  mismatch_after: number;
  classes_added: string[];
  samples_relabeled: number;
  epochs_run: number;
  version_before: number;
  version_after: number;
}

export type Point = [number, number];

export interface SamplePayload {
  id: string;
  label: number | null;
  weight: number;
  image: { side: number; data: string } | null;
  face: Record<string, Point> | null;
  posture: Record<string, Point> | null;
  background: number[] | null;
}

export interface SampleDetail extends EntryCard {
  sample: SamplePayload;
}
