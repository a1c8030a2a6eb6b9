// Thin fetch wrapper over the documented /v1 endpoints. The console performs
// no metric computation of its own; every displayed value comes back from
// these calls unchanged.

import type {
  DriftResponse,
  ParityResponse,
  ReviewQueueResponse,
  ReviewItem,
  RolloutListResponse,
  RolloutResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

export class GatewayClient {
  constructor(
    private baseUrl: string,
    private token: string | null = null,
  ) {}

  setToken(token: string | null) {
    this.token = token;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers['Content-Type'] = 'application/json';
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    if (!response.ok) {
      let code = `http_${response.status}`;
      let message = text;
      try {
        const parsed = JSON.parse(text);
        if (parsed.error) {
          code = parsed.error.code;
          message = parsed.error.message;
        }
      } catch {
        // non-JSON error body; keep raw text
      }
      throw new ApiError(response.status, code, message);
    }
    return JSON.parse(text) as T;
  }

  health() {
    return this.request<Record<string, unknown>>('GET', '/v1/health');
  }

  listRollouts() {
    return this.request<RolloutListResponse>('GET', '/v1/rollouts');
  }

  getRollout(id: string) {
    return this.request<RolloutResponse>('GET', `/v1/rollouts/${id}`);
  }

  advanceRollout(id: string) {
    return this.request<RolloutResponse>('POST', `/v1/rollouts/${id}/advance`);
  }

  abortRollout(id: string, reason = 'operator_abort') {
    return this.request<RolloutResponse>('POST', `/v1/rollouts/${id}/abort`, { reason });
  }

  reviewQueue(status?: string) {
    const query = status ? `?status=${encodeURIComponent(status)}` : '';
    return this.request<ReviewQueueResponse>('GET', `/v1/review/queue${query}`);
  }

  decide(itemId: string, action: string, reviewer: string, correctedLabel?: number) {
    return this.request<{ item: ReviewItem; rows_added: number }>(
      'POST',
      `/v1/review/${itemId}/decision`,
      {
        action,
        reviewer,
        corrected_label: correctedLabel ?? null,
      },
    );
  }

  parity(modelVersion?: string, window = 'latest') {
    const params = new URLSearchParams({ window });
    if (modelVersion) params.set('model_version', modelVersion);
    return this.request<ParityResponse>('GET', `/v1/parity?${params}`);
  }

  drift(modelVersion?: string, window = 'latest') {
    const params = new URLSearchParams({ window });
    if (modelVersion) params.set('model_version', modelVersion);
    return this.request<DriftResponse>('GET', `/v1/drift?${params}`);
  }
}
