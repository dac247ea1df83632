// Thin typed client for the session server.  Every UI state change comes
// from a response or event delivered through here; nothing is shown
// optimistically.

import type { EvolutionParams, EvalRecord, ServerEvent, SessionInfo, TaskMsg } from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public reason: string,
    message: string,
  ) {
    super(message);
  }
}

async function asError(response: Response): Promise<ApiError> {
  let reason = 'unknown';
  let message = `${response.status}`;
  try {
    const detail = (await response.json()).detail;
    if (detail && typeof detail === 'object') {
      reason = detail.reason ?? reason;
      message = detail.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, reason, message);
}

export class ApiClient {
  constructor(
    private base: string = '',
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { 'content-type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(`${this.base}${path}`, init);
    if (!response.ok) {
      throw await asError(response);
    }
    return (await response.json()) as T;
  }

  createSession(body: {
    kind: string;
    seed?: number;
    params?: Partial<EvolutionParams>;
    lease_seconds?: number;
    verify_fraction?: number;
  }): Promise<SessionInfo> {
    return this.request('POST', '/api/sessions', body);
  }

  listSessions(): Promise<SessionInfo[]> {
    return this.request('GET', '/api/sessions');
  }

  getSession(id: string): Promise<SessionInfo> {
    return this.request('GET', `/api/sessions/${id}`);
  }

  closeSession(id: string): Promise<SessionInfo> {
    return this.request('POST', `/api/sessions/${id}/close`);
  }

  patchParams(id: string, patch: Partial<EvolutionParams>): Promise<EvolutionParams> {
    return this.request('PATCH', `/api/sessions/${id}/params`, patch);
  }

  getHistory(id: string, since = 0): Promise<EvalRecord[]> {
    return this.request('GET', `/api/sessions/${id}/history?since=${since}`);
  }

  getBest(id: string): Promise<EvalRecord | null> {
    return this.request('GET', `/api/sessions/${id}/best`);
  }

  nextTask(id: string, worker: string): Promise<TaskMsg> {
    return this.request('GET', `/api/sessions/${id}/task?worker=${encodeURIComponent(worker)}`);
  }

  // Returns the raw response so large logs can be consumed as a stream.
  async getLogResponse(id: string, evalIndex: number): Promise<Response> {
    const response = await this.fetchFn(`${this.base}/api/sessions/${id}/logs/${evalIndex}`, {
      method: 'GET',
    });
    if (!response.ok) {
      throw await asError(response);
    }
    return response;
  }

  async getLogText(id: string, evalIndex: number): Promise<string> {
    const response = await this.getLogResponse(id, evalIndex);
    return response.text();
  }
}

// EventSource-shaped, so tests can inject a fake.
export interface EventSourceLike {
  onmessage: ((event: { data: string }) => void) | null;
  onerror: ((event: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface EventStream {
  close(): void;
}

export function openEvents(
  base: string,
  sessionId: string,
  onEvent: (event: ServerEvent) => void,
  onError: (message: string) => void = () => {},
  makeSource: EventSourceFactory = (url) => new EventSource(url) as EventSourceLike,
): EventStream {
  const source = makeSource(`${base}/api/sessions/${sessionId}/events`);
  source.onmessage = (message) => {
    let parsed: ServerEvent;
    try {
      parsed = JSON.parse(message.data) as ServerEvent;
    } catch {
      onError(`unparseable event: ${message.data.slice(0, 80)}`);
      return;
    }
    onEvent(parsed);
    if (parsed.event === 'session-closed' || parsed.event === 'lagged') {
      source.close();
    }
  };
  source.onerror = () => {
    onError('event stream interrupted');
  };
  return { close: () => source.close() };
}
