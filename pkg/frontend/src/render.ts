// HTML-string renderers over the view models. Kept DOM-free so they run
// under vitest without a browser; main.ts assigns the output to innerHTML.

import { sparklineSvg } from './sparkline.js';
import type {
  DriftVM,
  ParityHistory,
  ParityRowVM,
  ReviewItemVM,
  RolloutBoardVM,
} from './viewModels.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

function badge(status: string): string {
  return `<span class="badge badge-${escapeHtml(status)}">${escapeHtml(status)}</span>`;
}

export function renderRolloutBoard(vm: RolloutBoardVM): string {
  const stages = vm.stages
    .map(
      (stage) =>
        `<span class="stage stage-${stage.state}" title="stage ${stage.index}">` +
        `${(stage.fraction * 100).toFixed(0)}%</span>`,
    )
    .join(' → ');

  const gate = vm.latestGate;
  const gateRows = gate
    ? gate.checks
        .map((check) => {
          const failing = vm.failingChecks.includes(check.name);
          return (
            `<tr class="${failing ? 'fail' : check.ok ? 'ok' : 'warn'}">` +
            `<td>${escapeHtml(check.name)}</td>` +
            `<td>${check.value === null ? 'n/a' : escapeHtml(String(check.value))}</td>` +
            `<td>${escapeHtml(check.bound)}</td>` +
            `<td>${check.ok ? 'ok' : failing ? 'VIOLATED' : 'insufficient'}</td></tr>`
          );
        })
        .join('')
    : '';

  const log = vm.log
    .map(
      (entry) =>
        `<li><code>${escapeHtml(entry.at)}</code> stage ${entry.stage_index}: ` +
        `${escapeHtml(entry.kind)}</li>`,
    )
    .join('');

  return `
  <section class="board" data-rollout="${escapeHtml(vm.rolloutId)}">
    <h3>${escapeHtml(vm.rolloutId)} ${badge(vm.status)}
      <small>${escapeHtml(vm.modelVersion)}</small></h3>
    <p class="stages">${stages}</p>
    <p>gate: ${gate ? badge(gate.result) : 'not evaluated'}
       <small>(${vm.gateSource})</small></p>
    ${gateRows ? `<table class="gate"><tr><th>check</th><th>value</th><th>bound</th><th></th></tr>${gateRows}</table>` : ''}
    <p class="actions">
      <button data-action="advance" data-id="${escapeHtml(vm.rolloutId)}"
        ${vm.advanceEnabled ? '' : 'disabled'}>${vm.advanceLabel}</button>
      <button data-action="abort" data-id="${escapeHtml(vm.rolloutId)}" class="danger"
        ${vm.abortEnabled ? '' : 'disabled'}>Abort</button>
    </p>
    <details><summary>transition log (${vm.log.length})</summary><ul>${log}</ul></details>
  </section>`;
}

export function renderReviewItem(vm: ReviewItemVM): string {
  const decision = vm.decision
    ? `<p class="decision">decided: ${escapeHtml(vm.decision.action)} by ` +
      `${escapeHtml(vm.decision.reviewer)} at ${escapeHtml(vm.decision.decided_at)}</p>`
    : '';
  return `
  <section class="review-item ${vm.locked ? 'locked' : ''}" data-item="${escapeHtml(vm.itemId)}">
    <h4>${escapeHtml(vm.itemId)} ${badge(vm.status)}</h4>
    <p>${escapeHtml(vm.triggerSummary)} (${vm.recordCount} records)</p>
    ${decision}
    <p class="actions">
      <button data-action="approve" data-id="${escapeHtml(vm.itemId)}"
        ${vm.approveEnabled ? '' : 'disabled'}>Approve</button>
      <button data-action="prune" data-id="${escapeHtml(vm.itemId)}" class="danger"
        ${vm.pruneEnabled ? '' : 'disabled'}>Prune</button>
      <select data-role="corrected-label" data-id="${escapeHtml(vm.itemId)}"
        ${vm.nudgeOpenEnabled ? '' : 'disabled'}>
        <option value="">corrected label…</option>
        <option value="0">0</option>
        <option value="1">1</option>
      </select>
      <button data-action="nudge" data-id="${escapeHtml(vm.itemId)}" disabled>Nudge</button>
    </p>
  </section>`;
}

export function renderParityTable(rows: ParityRowVM[], history: ParityHistory): string {
  const body = rows
    .map((row) => {
      const key = `${row.attribute}:${row.other}:${row.metric}`;
      const series = history.get(key) ?? [];
      return (
        `<tr class="${row.insufficient ? 'insufficient' : ''}">` +
        `<td>${escapeHtml(row.attribute)}</td>` +
        `<td>${escapeHtml(row.reference)} vs ${escapeHtml(row.other)}</td>` +
        `<td>${escapeHtml(row.metric)}</td>` +
        `<td class="value">${escapeHtml(row.display)}</td>` +
        `<td>${sparklineSvg(series)}</td></tr>`
      );
    })
    .join('');
  return `<table class="parity">
    <tr><th>attribute</th><th>pair</th><th>metric</th><th>gap</th><th>trend</th></tr>
    ${body}</table>`;
}

export function renderDrift(vm: DriftVM): string {
  const dataRows = vm.dataRows
    .map(
      (row) =>
        `<tr class="status-${escapeHtml(row.status)}"><td>${escapeHtml(row.name)}</td>` +
        `<td>${escapeHtml(row.statistic)}</td>` +
        `<td class="value">${escapeHtml(row.display)}</td>` +
        `<td>${badge(row.status)}</td></tr>`,
    )
    .join('');
  const conceptRows = vm.conceptRows
    .map(
      (row) =>
        `<tr class="status-${escapeHtml(row.status)}"><td>${escapeHtml(row.subgroup)}</td>` +
        `<td>${escapeHtml(row.metric)}</td><td>${escapeHtml(row.baseline)}</td>` +
        `<td class="value">${escapeHtml(row.observed)}</td><td>${badge(row.status)}</td></tr>`,
    )
    .join('');
  return `
  <section class="drift">
    <p>data: ${badge(vm.dataStatus)} concept: ${badge(vm.conceptStatus)}
       triage: <strong>${escapeHtml(vm.triageHint)}</strong></p>
    <h4>input distributions</h4>
    <table><tr><th>feature</th><th>statistic</th><th>value</th><th>status</th></tr>${dataRows}</table>
    <h4>subgroup performance vs label bands</h4>
    <table><tr><th>subgroup</th><th>metric</th><th>baseline</th><th>observed</th><th>status</th></tr>${conceptRows}</table>
  </section>`;
}
