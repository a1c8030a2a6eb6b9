// Response shapes of the /v1 gateway endpoints the console consumes.

export interface GateCheck {
  name: string;
  value: number | null;
  bound: string;
  ok: boolean;
}

export interface GateResult {
  result: 'pass' | 'fail' | 'insufficient';
  stage_index: number;
  evaluated_at: string;
  events_seen: number;
  outcome_bearing: number;
  checks: GateCheck[];
  violations: string[];
  reasons: string[];
}

export interface Transition {
  at: string;
  kind: string;
  stage_index: number;
  detail: Record<string, unknown>;
}

export interface Stage {
  fraction: number;
  min_duration_seconds: number;
  min_events: number;
}

export interface RolloutResponse {
  plan: {
    rollout_id: string;
    model_version: string;
    stages: Stage[];
    max_parity_gap: Record<string, number>;
    cohort_attributes: string[];
    min_count: number;
  };
  status: 'pending' | 'running' | 'promoted' | 'rolled_back' | 'completed';
  current_stage_index: number;
  current_fraction: number;
  stage_started_at: string | null;
  gate_results: Record<string, GateResult>;
  latest_gate: GateResult | null;
  transitions: Transition[];
  gate_preview?: GateResult | null;
  gate?: GateResult;
}

export interface RolloutListResponse {
  rollouts: RolloutResponse[];
}

export interface ReviewItem {
  item_id: string;
  created_at: string;
  trigger: {
    rule?: Record<string, unknown>;
    observed?: number;
    threshold?: number;
    baseline?: number | null;
    attribute?: string;
    category?: string;
  };
  payload: Record<string, unknown>;
  status: 'pending' | 'approved' | 'pruned' | 'nudged';
  decision: {
    action: string;
    reviewer: string;
    decided_at: string;
    corrected_label: number | null;
  } | null;
}

export interface ReviewQueueResponse {
  items: ReviewItem[];
  counts: Record<string, number>;
}

export interface PairGaps {
  other: string;
  gaps: Record<string, number | null>;
  insufficient: boolean;
  reason: string | null;
  support_ref: number;
  support_other: number;
}

export interface ParityReportBody {
  attribute: string;
  reference_subgroup: string;
  pairs: PairGaps[];
  window: Record<string, unknown>;
  min_count: number;
}

export interface ParityResponse {
  model_version: string;
  window: Record<string, unknown>;
  reports: ParityReportBody[];
}

export interface DriftDataEntry {
  name: string;
  statistic: string;
  value: number | null;
  status: string;
  support: number;
}

export interface DriftConceptEntry {
  attribute: string;
  category: string;
  metric: string;
  baseline: number | null;
  observed: number | null;
  delta: number | null;
  status: string;
  band: [number, number] | null;
  support: number;
}

export interface DriftResponse {
  model_version: string;
  window: Record<string, unknown>;
  data: DriftDataEntry[];
  concept: DriftConceptEntry[];
  data_status: string;
  concept_status: string;
  triage_hint: string;
}

export interface ApiErrorBody {
  error: { code: string; message: string };
}
