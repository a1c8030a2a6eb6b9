// Browser bootstrap: wires the gateway client, poll loop and button actions.
// All state changes go through the /v1 endpoints; on a 409 the affected view
// is refreshed so the losing session sees the locked item.

import { ApiError, GatewayClient } from './apiClient.js';
import { startPolling } from './poller.js';
import {
  renderDrift,
  renderParityTable,
  renderReviewItem,
  renderRolloutBoard,
} from './render.js';
import {
  appendParityHistory,
  driftVM,
  nudgeSubmitEnabled,
  parityRows,
  reviewItemVM,
  rolloutBoard,
  type ParityHistory,
} from './viewModels.js';

const client = new GatewayClient('', localStorage.getItem('fairgate_token'));
const history: ParityHistory = new Map();

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function refresh(): Promise<void> {
  const [rollouts, queue] = await Promise.all([client.listRollouts(), client.reviewQueue()]);
  el('rollouts').innerHTML = rollouts.rollouts
    .map((r) => renderRolloutBoard(rolloutBoard(r)))
    .join('');
  el('queue').innerHTML =
    queue.items.map((item) => renderReviewItem(reviewItemVM(item))).join('') ||
    '<p>queue empty</p>';

  try {
    const parity = await client.parity();
    appendParityHistory(history, parity, Date.now());
    el('parity').innerHTML = renderParityTable(parityRows(parity), history);
  } catch (error) {
    el('parity').innerHTML = `<p class="muted">${(error as Error).message}</p>`;
  }
  try {
    const drift = await client.drift();
    el('drift').innerHTML = renderDrift(driftVM(drift));
  } catch (error) {
    el('drift').innerHTML = `<p class="muted">${(error as Error).message}</p>`;
  }
}

let poller = { tick: refresh, stop: () => {} };

function reviewerName(): string {
  return (el('reviewer') as HTMLInputElement).value || 'operator';
}

async function handleAction(action: string, id: string, target: HTMLElement): Promise<void> {
  try {
    if (action === 'advance') {
      await client.advanceRollout(id);
    } else if (action === 'abort') {
      if (!window.confirm(`Abort rollout ${id}? Traffic reverts to stable.`)) return;
      await client.abortRollout(id);
    } else if (action === 'approve') {
      await client.decide(id, 'approve', reviewerName());
    } else if (action === 'prune') {
      if (!window.confirm(`Prune item ${id}? Records are excluded from retraining.`)) return;
      await client.decide(id, 'prune', reviewerName());
    } else if (action === 'nudge') {
      const select = document.querySelector<HTMLSelectElement>(
        `select[data-role="corrected-label"][data-id="${id}"]`,
      );
      const value = select?.value;
      if (value !== '0' && value !== '1') return;
      await client.decide(id, 'nudge', reviewerName(), Number(value));
    }
  } catch (error) {
    if (error instanceof ApiError) {
      // 409 = lost a race (already decided / invalid transition): refresh to
      // show the locked state; other codes surface verbatim.
      window.alert(`${error.code}: ${error.message}`);
    } else {
      window.alert(String(error));
    }
  }
  await poller.tick();
}

function wire(): void {
  document.body.addEventListener('click', (event) => {
    const button = (event.target as HTMLElement).closest<HTMLElement>('button[data-action]');
    if (!button || button.hasAttribute('disabled')) return;
    void handleAction(button.dataset.action!, button.dataset.id!, button);
  });

  // Nudge submit stays disabled until a corrected label is chosen.
  document.body.addEventListener('change', (event) => {
    const select = event.target as HTMLSelectElement;
    if (select.dataset?.role !== 'corrected-label') return;
    const enabled = nudgeSubmitEnabled(
      { locked: select.hasAttribute('disabled') } as never,
      select.value === '' ? null : Number(select.value),
    );
    const button = document.querySelector<HTMLButtonElement>(
      `button[data-action="nudge"][data-id="${select.dataset.id}"]`,
    );
    if (button) button.disabled = !enabled;
  });

  el('login').addEventListener('submit', (event) => {
    event.preventDefault();
    const token = (el('token') as HTMLInputElement).value || null;
    if (token) localStorage.setItem('fairgate_token', token);
    else localStorage.removeItem('fairgate_token');
    client.setToken(token);
    void poller.tick();
  });
}

wire();
poller = startPolling(refresh, 5000);
