// UI integration tests against the scripted server double: message flow
// ordering, busy handling, stream reconnect, version stepping.

import { beforeEach, describe, expect, it } from 'vitest';

import { App } from '../src/app.js';
import type { StateView, TurnResult } from '../src/types.js';
import { FakeServer, actionEvent, emptyDiff, emptyState } from './fakeServer.js';

function makeApp(server: FakeServer, clipboard: string[] = []) {
  const root = document.createElement('div');
  document.body.appendChild(root);
  const app = new App({
    baseUrl: '',
    root,
    fetchImpl: server.fetch,
    eventSourceFactory: server.eventSourceFactory,
    retryDelayMs: 1,
    clipboard: (text) => clipboard.push(text),
  });
  return { app, root };
}

function turnResult(overrides: Partial<TurnResult> = {}): TurnResult {
  return {
    final_message: 'here is what I found',
    forced: false,
    failed: false,
    state_version: 1,
    state_diff: emptyDiff(0, 1),
    actions: [],
    usage: { input_tokens: 10, output_tokens: 2 },
    ...overrides,
  };
}

const JOINED_VIEW: StateView = {
  version: 1,
  current_version: 1,
  tables: [
    {
      name: 'procurement_data_joined',
      materialized: true,
      provenance: ['table:procurement_data', 'web:tariffs'],
      columns: [
        { name: 'price', dtype: 'float' },
        { name: 'new_tariff', dtype: 'float' },
        { name: 'previous_tariff', dtype: 'float' },
      ],
      row_count: 1,
      sample_rows: [[100.0, 0.1, 0.05]],
    },
  ],
  queries: [
    'SELECT price * (1 + new_tariff - previous_tariff) AS new_price FROM procurement_data_joined',
  ],
  rendering: '',
};

async function flush(ms = 20) {
  await new Promise((resolve) => setTimeout(resolve, ms));
}

beforeEach(() => {
  document.body.textContent = '';
});

describe('send_message flow', () => {
  it('renders user bubble, then action feed, then system reply, in order', async () => {
    const server = new FakeServer();
    server.turns.push({
      events: [
        actionEvent('reason', 'weighing the request', 0),
        actionEvent('tool_call', 'ir_search {"query": "tariffs"} -> ok', 1),
        actionEvent('user_message', 'here is what I found', 2),
      ],
      result: turnResult(),
      stateAfter: emptyState(1),
    });
    const { app, root } = makeApp(server);
    await app.start();
    await app.sendMessage('what about tariffs?');
    await flush();

    const log = root.querySelector('.chat-log')!;
    const sequence: string[] = [];
    log.querySelectorAll('.bubble, .feed-item').forEach((node) => {
      if (node.classList.contains('bubble')) {
        sequence.push(`bubble:${node.getAttribute('data-role')}`);
      } else {
        sequence.push(`action:${node.getAttribute('data-kind')}`);
      }
    });
    expect(sequence).toEqual([
      'bubble:user',
      'action:reason',
      'action:tool_call',
      'action:user_message',
      'bubble:system',
    ]);
    expect(log.querySelector('.bubble.system')?.textContent).toContain(
      'here is what I found',
    );
  });

  it('marks forced summaries with a badge', async () => {
    const server = new FakeServer();
    server.turns.push({
      events: [actionEvent('user_message', 'forced recap', 5)],
      result: turnResult({ final_message: 'forced recap', forced: true }),
      stateAfter: emptyState(0),
    });
    const { app, root } = makeApp(server);
    await app.start();
    await app.sendMessage('explore');
    await flush();
    expect(root.querySelector('.bubble.system .forced-badge')).not.toBeNull();
  });

  it('keeps reasoning collapsed until expanded', async () => {
    const server = new FakeServer();
    server.turns.push({
      events: [
        actionEvent('reason', 'secret internal notes', 0),
        actionEvent('user_message', 'done', 1),
      ],
      result: turnResult(),
      stateAfter: emptyState(0),
    });
    const { app, root } = makeApp(server);
    await app.start();
    await app.sendMessage('go');
    await flush();
    const item = root.querySelector('.feed-item.kind-reason')!;
    expect(item.textContent).not.toContain('secret internal notes');
    (item.querySelector('.collapser') as HTMLButtonElement).click();
    expect(
      root.querySelector('.feed-item.kind-reason .summary')?.textContent,
    ).toContain('secret internal notes');
  });

  it('shows the busy banner and disables input on 409', async () => {
    const server = new FakeServer();
    server.turns.push({
      events: [],
      result: turnResult(),
      stateAfter: emptyState(0),
      status: 409,
    });
    const { app, root } = makeApp(server);
    await app.start();
    await app.sendMessage('while busy');
    await flush();
    expect(root.querySelector('.banner')?.textContent).toMatch(/busy/);
    expect(
      (root.querySelector('.composer input') as HTMLInputElement).disabled,
    ).toBe(true);
    // the optimistic bubble is withdrawn
    expect(root.querySelectorAll('.bubble.user')).toHaveLength(0);
  });

  it('resumes the event stream after a mid-turn drop', async () => {
    const server = new FakeServer();
    server.turns.push({
      events: [
        actionEvent('reason', 'first', 0),
        actionEvent('tool_call', 'second', 1),
        actionEvent('user_message', 'third', 2),
      ],
      result: turnResult(),
      stateAfter: emptyState(1),
      dropAfter: 1, // connection dies after the first event
    });
    const { app, root } = makeApp(server);
    await app.start();
    await app.sendMessage('fragile network');
    await flush(60); // give the 1ms-backoff reconnect time to replay
    const kinds = Array.from(root.querySelectorAll('.feed-item')).map((n) =>
      n.getAttribute('data-kind'),
    );
    expect(kinds).toEqual(['reason', 'tool_call', 'user_message']);
  });
});

describe('state panel and version stepping', () => {
  it('shows sample rows after materialization', async () => {
    const server = new FakeServer();
    server.turns.push({
      events: [actionEvent('user_message', 'materialized', 0)],
      result: turnResult({
        state_version: 1,
        state_diff: {
          ...emptyDiff(0, 1),
          added_tables: JOINED_VIEW.tables,
          query_edits: [{ index: 0, old: null, new: JOINED_VIEW.queries[0] }],
        },
      }),
      stateAfter: JOINED_VIEW,
    });
    const { app, root } = makeApp(server);
    await app.start();
    expect(root.querySelector('.empty-state')).not.toBeNull(); // v0 placeholder
    await app.sendMessage('materialize it');
    await flush();

    const card = root.querySelector('.table-card')!;
    expect(card.querySelector('.badge-materialized')).not.toBeNull();
    expect(card.querySelector('.badge-added')).not.toBeNull();
    const cells = Array.from(card.querySelectorAll('[role="cell"]')).map(
      (c) => c.textContent,
    );
    expect(cells).toEqual(['100', '0.1', '0.05']);
    expect(root.querySelector('.query-list')?.textContent).toContain('new_price');
  });

  it('steps versions back and forward with diff badges', async () => {
    const server = new FakeServer();
    server.turns.push({
      events: [actionEvent('user_message', 'drafted', 0)],
      result: turnResult({
        state_version: 1,
        state_diff: { ...emptyDiff(0, 1), added_tables: JOINED_VIEW.tables },
      }),
      stateAfter: JOINED_VIEW,
    });
    const { app, root } = makeApp(server);
    await app.start();
    await app.sendMessage('draft the table');
    await flush();
    expect(root.querySelector('.version-label')?.textContent).toContain(
      'version 1 (latest)',
    );

    (root.querySelector('.step-back') as HTMLButtonElement).click();
    await flush();
    expect(root.querySelector('.version-label')?.textContent).toContain(
      'version 0 of 1 (pinned)',
    );
    // v0 is the origin: empty placeholder, no cards, back disabled
    expect(root.querySelectorAll('.table-card')).toHaveLength(0);
    expect(root.querySelector('.empty-state')).not.toBeNull();
    expect((root.querySelector('.step-back') as HTMLButtonElement).disabled).toBe(true);

    (root.querySelector('.step-forward') as HTMLButtonElement).click();
    await flush();
    expect(root.querySelector('.version-label')?.textContent).toContain(
      'version 1 (latest)',
    );
    const badge = root.querySelector('.table-card .badge-added');
    expect(badge).not.toBeNull();
    expect((root.querySelector('.step-forward') as HTMLButtonElement).disabled).toBe(true);
  });

  it('edited queries expose the inline old/new toggle', async () => {
    const server = new FakeServer();
    const v1: StateView = {
      ...emptyState(1),
      queries: ['SELECT price FROM t'],
    };
    const v2: StateView = {
      ...emptyState(2),
      queries: ['SELECT price * 2 AS doubled FROM t'],
    };
    server.states.set(1, v1);
    server.turns.push(
      {
        events: [actionEvent('user_message', 'q drafted', 0)],
        result: turnResult({ state_version: 1 }),
        stateAfter: v1,
      },
      {
        events: [actionEvent('user_message', 'q edited', 0)],
        result: turnResult({
          state_version: 2,
          state_diff: {
            ...emptyDiff(1, 2),
            query_edits: [
              { index: 0, old: v1.queries[0], new: v2.queries[0] },
            ],
          },
        }),
        stateAfter: v2,
      },
    );
    const { app, root } = makeApp(server);
    await app.start();
    await app.sendMessage('draft');
    await flush();
    await app.sendMessage('edit');
    await flush();

    const row = root.querySelector('.query-row')!;
    expect(row.querySelector('.badge-edited')).not.toBeNull();
    expect(row.querySelector('.query-old')).toBeNull();
    (row.querySelector('.old-toggle') as HTMLButtonElement).click();
    await flush();
    expect(root.querySelector('.query-row .query-old')?.textContent).toBe(
      'SELECT price FROM t',
    );
  });

  it('copy affordance hands the query text to the clipboard', async () => {
    const server = new FakeServer();
    const copied: string[] = [];
    server.turns.push({
      events: [actionEvent('user_message', 'ok', 0)],
      result: turnResult({ state_version: 1 }),
      stateAfter: { ...emptyState(1), queries: ['SELECT 42 AS answer'] },
    });
    const { app, root } = makeApp(server, copied);
    await app.start();
    await app.sendMessage('go');
    await flush();
    (root.querySelector('.query-row .copy') as HTMLButtonElement).click();
    expect(copied).toEqual(['SELECT 42 AS answer']);
  });
});
