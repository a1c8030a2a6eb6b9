// Pure view-model builders. All display values are taken verbatim from the
// gateway response (thin-client rule); the only transformation allowed here
// is String() at render time, never arithmetic.

import type {
  DriftResponse,
  GateResult,
  ParityResponse,
  ReviewItem,
  RolloutResponse,
  Transition,
} from './types.js';

export interface StageVM {
  index: number;
  fraction: number;
  state: 'done' | 'current' | 'upcoming';
  gate: GateResult | null;
}

export interface RolloutBoardVM {
  rolloutId: string;
  modelVersion: string;
  status: RolloutResponse['status'];
  readOnly: boolean;
  currentStageIndex: number;
  currentFraction: number;
  stages: StageVM[];
  latestGate: GateResult | null;
  gateSource: 'preview' | 'recorded' | 'none';
  advanceEnabled: boolean;
  advanceLabel: 'Start' | 'Advance';
  abortEnabled: boolean;
  failingChecks: string[];
  log: Transition[];
}

const TERMINAL = new Set(['rolled_back', 'completed']);

/** Gate shown on the board: the fresh server preview when running, else the
 * last recorded evaluation. */
export function boardGate(rollout: RolloutResponse): {
  gate: GateResult | null;
  source: 'preview' | 'recorded' | 'none';
} {
  if (rollout.status === 'running' && rollout.gate_preview) {
    return { gate: rollout.gate_preview, source: 'preview' };
  }
  if (rollout.latest_gate) {
    return { gate: rollout.latest_gate, source: 'recorded' };
  }
  return { gate: null, source: 'none' };
}

export function rolloutBoard(rollout: RolloutResponse): RolloutBoardVM {
  const { gate, source } = boardGate(rollout);
  const readOnly = TERMINAL.has(rollout.status);
  // No force-promote: advance is offered only for a pending start or when the
  // server-reported gate is a pass. The server re-validates regardless.
  const advanceEnabled =
    rollout.status === 'pending' ||
    (rollout.status === 'running' && gate !== null && gate.result === 'pass');
  const stages: StageVM[] = rollout.plan.stages.map((stage, index) => ({
    index,
    fraction: stage.fraction,
    state:
      index < rollout.current_stage_index
        ? 'done'
        : index === rollout.current_stage_index
          ? 'current'
          : 'upcoming',
    gate: rollout.gate_results[String(index)] ?? null,
  }));
  return {
    rolloutId: rollout.plan.rollout_id,
    modelVersion: rollout.plan.model_version,
    status: rollout.status,
    readOnly,
    currentStageIndex: rollout.current_stage_index,
    currentFraction: rollout.current_fraction,
    stages,
    latestGate: gate,
    gateSource: source,
    advanceEnabled,
    advanceLabel: rollout.status === 'pending' ? 'Start' : 'Advance',
    abortEnabled: !readOnly,
    failingChecks: gate ? gate.violations : [],
    log: rollout.transitions,
  };
}

export interface ReviewItemVM {
  itemId: string;
  status: ReviewItem['status'];
  locked: boolean;
  approveEnabled: boolean;
  pruneEnabled: boolean;
  nudgeOpenEnabled: boolean;
  triggerSummary: string;
  observed: number | null;
  threshold: number | null;
  decision: ReviewItem['decision'];
  recordCount: number;
}

export function reviewItemVM(item: ReviewItem): ReviewItemVM {
  const locked = item.status !== 'pending';
  const rule = (item.trigger.rule ?? {}) as Record<string, unknown>;
  const metric = typeof rule.metric === 'string' ? rule.metric : 'metric';
  const where =
    item.trigger.attribute !== undefined
      ? `${item.trigger.attribute}=${item.trigger.category}`
      : 'observation';
  const eventIds = (item.payload.event_ids ?? []) as unknown[];
  return {
    itemId: item.item_id,
    status: item.status,
    locked,
    approveEnabled: !locked,
    pruneEnabled: !locked,
    nudgeOpenEnabled: !locked,
    triggerSummary: `${where}: ${metric} ${String(item.trigger.observed)} <= ${String(item.trigger.threshold)}`,
    observed: item.trigger.observed ?? null,
    threshold: item.trigger.threshold ?? null,
    decision: item.decision,
    recordCount: eventIds.length,
  };
}

/** Nudge may submit only once a corrected label is chosen. */
export function nudgeSubmitEnabled(item: ReviewItemVM, correctedLabel: number | null): boolean {
  return !item.locked && (correctedLabel === 0 || correctedLabel === 1);
}

export interface ParityRowVM {
  attribute: string;
  reference: string;
  other: string;
  metric: string;
  value: number | null;
  display: string; // byte-faithful: String(value) or "insufficient"
  insufficient: boolean;
}

export function parityRows(response: ParityResponse): ParityRowVM[] {
  const rows: ParityRowVM[] = [];
  for (const report of response.reports) {
    for (const pair of report.pairs) {
      for (const [metric, value] of Object.entries(pair.gaps)) {
        rows.push({
          attribute: report.attribute,
          reference: report.reference_subgroup,
          other: pair.other,
          metric,
          value,
          display: value === null ? 'insufficient' : String(value),
          insufficient: value === null,
        });
      }
    }
  }
  return rows;
}

export interface SeriesPoint {
  at: number; // poll timestamp, ms
  value: number;
}

export type ParityHistory = Map<string, SeriesPoint[]>;

/** Accumulate per-pair gap series for sparklines; drops insufficient points. */
export function appendParityHistory(
  history: ParityHistory,
  response: ParityResponse,
  at: number,
  maxPoints = 120,
): ParityHistory {
  for (const row of parityRows(response)) {
    if (row.value === null) continue;
    const key = `${row.attribute}:${row.other}:${row.metric}`;
    const series = history.get(key) ?? [];
    series.push({ at, value: row.value });
    if (series.length > maxPoints) series.shift();
    history.set(key, series);
  }
  return history;
}

export interface DriftRowVM {
  name: string;
  statistic: string;
  value: number | null;
  display: string;
  status: string;
}

export interface DriftVM {
  dataRows: DriftRowVM[];
  conceptRows: {
    subgroup: string;
    metric: string;
    baseline: string;
    observed: string;
    status: string;
  }[];
  dataStatus: string;
  conceptStatus: string;
  triageHint: string;
}

export function driftVM(response: DriftResponse): DriftVM {
  return {
    dataRows: response.data.map((entry) => ({
      name: entry.name,
      statistic: entry.statistic,
      value: entry.value,
      display: entry.value === null ? 'n/a' : String(entry.value),
      status: entry.status,
    })),
    conceptRows: response.concept.map((entry) => ({
      subgroup: `${entry.attribute}=${entry.category}`,
      metric: entry.metric,
      baseline: entry.baseline === null ? 'n/a' : String(entry.baseline),
      observed: entry.observed === null ? 'n/a' : String(entry.observed),
      status: entry.status,
    })),
    dataStatus: response.data_status,
    conceptStatus: response.concept_status,
    triageHint: response.triage_hint,
  };
}
