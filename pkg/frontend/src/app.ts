// Application wiring: one session per page, one event-stream subscription
// per in-flight turn, full re-render on every state change.

import { ApiClient, ApiRequestError, type FetchLike } from './api.js';
import { render, type Handlers } from './render.js';
import { subscribe, type EventSourceFactory, type Subscription } from './sse.js';
import type { ActionEvent, StateView } from './types.js';
import {
  actionArrived,
  bannerCleared,
  computeViewDiff,
  initialState,
  reconnecting,
  sendStarted,
  sessionStarted,
  stateLoaded,
  streamResumed,
  toggleFeedItem,
  toggleOldQuery,
  turnCompleted,
  turnFailed,
  turnRejectedBusy,
  versionPinned,
  type ViewState,
} from './viewmodel.js';

export interface AppOptions {
  baseUrl: string;
  root: HTMLElement;
  fetchImpl?: FetchLike;
  eventSourceFactory?: EventSourceFactory;
  retryDelayMs?: number;
  clipboard?: (text: string) => void;
}

export class App {
  state: ViewState = initialState();
  private api: ApiClient;
  private subscription: Subscription | null = null;

  constructor(private options: AppOptions) {
    this.api = new ApiClient(options.baseUrl, options.fetchImpl);
  }

  async start(): Promise<void> {
    const record = await this.api.createSession();
    this.state = sessionStarted(this.state, record.id);
    const view = await this.api.getState(record.id);
    this.state = stateLoaded(this.state, view);
    this.paint();
  }

  private paint(): void {
    const handlers: Handlers = {
      onSend: (text) => void this.sendMessage(text),
      onToggleFeedItem: (index) => {
        this.state = toggleFeedItem(this.state, index);
        this.paint();
      },
      onVersionStep: (delta) => void this.stepVersion(delta),
      onToggleOldQuery: (index) => {
        this.state = toggleOldQuery(this.state, index);
        this.paint();
      },
      onCopyQuery: (text) => (this.options.clipboard ?? defaultClipboard)(text),
    };
    render(this.state, this.options.root, handlers);
  }

  async sendMessage(text: string): Promise<void> {
    const sessionId = this.state.sessionId;
    if (!sessionId || this.state.busy) return;
    this.state = sendStarted(this.state, text);
    this.paint();

    this.subscription?.close();
    this.subscription = subscribe({
      makeUrl: (lastEventId) => this.api.eventsUrl(sessionId, lastEventId),
      factory: this.options.eventSourceFactory,
      retryDelayMs: this.options.retryDelayMs,
      onEvent: (event) => {
        if (event.type === 'action') {
          this.state = streamResumed(this.state);
          this.state = actionArrived(this.state, event as ActionEvent);
          this.paint();
        }
      },
      onReconnect: () => {
        this.state = reconnecting(this.state);
        this.paint();
      },
      onEnd: () => {
        this.subscription = null;
      },
    });

    try {
      const result = await this.api.sendMessage(sessionId, text);
      this.state = turnCompleted(this.state, result);
      const view = await this.api.getState(sessionId);
      this.state = stateLoaded(this.state, view, result.state_diff);
    } catch (err) {
      if (err instanceof ApiRequestError && err.status === 409) {
        this.state = turnRejectedBusy(this.state);
      } else {
        this.state = turnFailed(
          this.state,
          err instanceof Error ? err.message : 'request failed',
        );
      }
      this.subscription?.close();
      this.subscription = null;
    }
    this.paint();
  }

  async stepVersion(delta: number): Promise<void> {
    const sessionId = this.state.sessionId;
    const view = this.state.view;
    if (!sessionId || !view) return;
    const target = view.version + delta;
    if (target < 0 || target > view.current_version) return;

    const nextView = await this.api.getState(sessionId, target);
    let diff = null;
    if (target > 0) {
      const prevView = await this.api.getState(sessionId, target - 1);
      diff = computeViewDiff(prevView, nextView);
    }
    this.state = stateLoaded(this.state, nextView, diff);
    this.state = versionPinned(
      this.state,
      target === nextView.current_version ? null : target,
    );
    this.paint();
  }

  clearBanner(): void {
    this.state = bannerCleared(this.state);
    this.paint();
  }

  currentStateView(): StateView | null {
    return this.state.view;
  }
}

function defaultClipboard(text: string): void {
  void navigator.clipboard?.writeText(text);
}

export function mount(options: AppOptions): App {
  const app = new App(options);
  void app.start();
  return app;
}
