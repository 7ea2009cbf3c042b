// Event-stream subscription with resume. The server stamps every event
// with a monotonically increasing id; on drop we reconnect (bounded
// backoff) passing the last id seen, and the server replays what we
// missed. One subscription per session tab; the stream ends at turn_end.

import type { StreamEvent } from './types.js';

export interface EventSourceLike {
  onmessage: ((ev: { data: string; lastEventId?: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  addEventListener(type: string, handler: (ev: { data: string; lastEventId?: string }) => void): void;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface Subscription {
  close(): void;
}

export interface SubscribeOptions {
  onEvent: (event: StreamEvent) => void;
  onEnd: () => void;
  onReconnect?: (attempt: number) => void;
  makeUrl: (lastEventId: number) => string;
  factory?: EventSourceFactory;
  maxRetries?: number;
  retryDelayMs?: number;
}

export function subscribe(options: SubscribeOptions): Subscription {
  const factory: EventSourceFactory =
    options.factory ?? ((url) => new EventSource(url) as unknown as EventSourceLike);
  const maxRetries = options.maxRetries ?? 5;
  let lastEventId = 0;
  let attempts = 0;
  let closed = false;
  let source: EventSourceLike | null = null;

  const handle = (ev: { data: string; lastEventId?: string }, type: string) => {
    if (ev.lastEventId) {
      const parsed = parseInt(ev.lastEventId, 10);
      if (!Number.isNaN(parsed)) lastEventId = parsed;
    }
    if (type === 'heartbeat') return;
    if (type === 'turn_end') {
      options.onEvent(JSON.parse(ev.data) as StreamEvent);
      stop();
      options.onEnd();
      return;
    }
    options.onEvent(JSON.parse(ev.data) as StreamEvent);
  };

  const connect = () => {
    if (closed) return;
    source = factory(options.makeUrl(lastEventId));
    for (const type of ['action', 'turn_end', 'heartbeat']) {
      source.addEventListener(type, (ev) => handle(ev, type));
    }
    source.onerror = () => {
      if (closed) return;
      source?.close();
      attempts += 1;
      if (attempts > maxRetries) {
        stop();
        options.onEnd();
        return;
      }
      options.onReconnect?.(attempts);
      const delay = Math.min((options.retryDelayMs ?? 250) * 2 ** (attempts - 1), 5000);
      setTimeout(connect, delay);
    };
  };

  const stop = () => {
    closed = true;
    source?.close();
  };

  connect();
  return { close: stop };
}
