// Thin typed client for the session service. Errors carry the HTTP status
// so callers can branch on 409 (busy) / 410 (closed) without string checks.

import type { SessionRecord, StateView, TurnResult } from './types.js';

export class ApiRequestError extends Error {
  status: number;
  code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      throw new ApiRequestError(
        resp.status,
        body.code ?? 'http_error',
        body.message ?? `HTTP ${resp.status}`,
      );
    }
    return body as T;
  }

  createSession(config?: Record<string, unknown>): Promise<SessionRecord> {
    return this.request('/sessions', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(config ? { config } : {}),
    });
  }

  sendMessage(sessionId: string, text: string): Promise<TurnResult> {
    return this.request(`/sessions/${sessionId}/messages`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ text }),
    });
  }

  getState(sessionId: string, version?: number): Promise<StateView> {
    const suffix = version === undefined ? '' : `?version=${version}`;
    return this.request(`/sessions/${sessionId}/state${suffix}`);
  }

  eventsUrl(sessionId: string, lastEventId?: number): string {
    const suffix = lastEventId ? `?last_event_id=${lastEventId}` : '';
    return `${this.baseUrl}/sessions/${sessionId}/events${suffix}`;
  }
}
