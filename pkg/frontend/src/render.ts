// DOM rendering of the view state. Full re-render per update keeps the
// logic obvious; the only stateful widget is the virtualized sample-row
// grid, which renders a window of rows into a fixed-height scroller once
// a grid exceeds 100 rows.

import type { StateView } from './types.js';
import {
  diffIsEmpty,
  queryRows,
  tableCards,
  type FeedItem,
  type ViewState,
} from './viewmodel.js';

export interface Handlers {
  onSend(text: string): void;
  onToggleFeedItem(index: number): void;
  onVersionStep(delta: number): void;
  onToggleOldQuery(index: number): void;
  onCopyQuery(text: string): void;
}

const KIND_ICONS: Record<string, string> = {
  reason: '[~]',
  tool_call: '[>]',
  state_update: '[=]',
  user_message: '[@]',
};

export const VIRTUALIZE_THRESHOLD = 100;
const ROW_HEIGHT = 22;
const WINDOW_ROWS = 40;

function el(
  tag: string,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) node.textContent = text;
  return node;
}

export function render(state: ViewState, root: HTMLElement, handlers: Handlers): void {
  root.textContent = '';
  root.appendChild(renderChatPane(state, handlers));
  root.appendChild(renderStatePanel(state, handlers));
}

// -- chat pane: messages, action feed, input ---------------------------------------

function renderChatPane(state: ViewState, handlers: Handlers): HTMLElement {
  const pane = el('section', { class: 'chat-pane' });

  if (state.banner) {
    pane.appendChild(
      el('div', { class: 'banner', role: 'alert' }, state.banner),
    );
  }

  const log = el('div', { class: 'chat-log', role: 'log', 'aria-label': 'conversation' });
  for (const message of state.messages) {
    const bubble = el(
      'div',
      {
        class: `bubble ${message.role}${message.pending ? ' pending' : ''}`,
        'data-role': message.role,
      },
      message.text,
    );
    if (message.forced) {
      bubble.appendChild(
        el(
          'span',
          { class: 'forced-badge', title: 'action budget ran out; summary was forced' },
          'forced summary',
        ),
      );
    }
    log.appendChild(bubble);
    if (message.role === 'user') {
      // the live action feed for the in-flight (or last) turn sits between
      // the user bubble and the system reply
      const isLastUser =
        state.messages.filter((m) => m.role === 'user').slice(-1)[0] === message;
      if (isLastUser && state.feed.length) {
        log.appendChild(renderFeed(state.feed, handlers));
      }
    }
  }
  pane.appendChild(log);

  if (state.connection === 'reconnecting') {
    pane.appendChild(
      el('div', { class: 'stream-status', role: 'status' }, 'reconnecting to event stream...'),
    );
  }

  const form = el('form', { class: 'composer' });
  const input = el('input', {
    type: 'text',
    name: 'message',
    'aria-label': 'message to the system',
  }) as HTMLInputElement;
  if (!state.inputEnabled || state.busy) input.setAttribute('disabled', '');
  const button = el('button', { type: 'submit' }, 'Send') as HTMLButtonElement;
  if (!state.inputEnabled || state.busy) button.setAttribute('disabled', '');
  form.appendChild(input);
  form.appendChild(button);
  form.addEventListener('submit', (ev) => {
    ev.preventDefault();
    if (input.value.trim()) handlers.onSend(input.value.trim());
  });
  pane.appendChild(form);
  return pane;
}

function renderFeed(feed: FeedItem[], handlers: Handlers): HTMLElement {
  const list = el('ol', { class: 'action-feed', 'aria-label': 'actions this turn' });
  feed.forEach((item, i) => {
    const entry = el('li', {
      class: `feed-item kind-${item.kind}`,
      'data-kind': item.kind,
    });
    const icon = el('span', { class: 'kind-icon', 'aria-hidden': 'true' }, KIND_ICONS[item.kind] ?? '[?]');
    entry.appendChild(icon);
    // every event keeps a text equivalent for assistive tech
    const label = el('span', { class: 'sr-label' }, item.kind.replace('_', ' '));
    entry.appendChild(label);
    if (item.kind === 'reason') {
      const toggle = el(
        'button',
        {
          type: 'button',
          class: 'collapser',
          'aria-expanded': item.collapsed ? 'false' : 'true',
        },
        item.collapsed ? 'show reasoning' : 'hide reasoning',
      );
      toggle.addEventListener('click', () => handlers.onToggleFeedItem(i));
      entry.appendChild(toggle);
      if (!item.collapsed) {
        entry.appendChild(el('div', { class: 'summary' }, item.summary));
      }
    } else {
      entry.appendChild(el('div', { class: 'summary' }, item.summary));
    }
    list.appendChild(entry);
  });
  return list;
}

// -- state panel: table cards, sample grids, queries, version stepper ---------------

function renderStatePanel(state: ViewState, handlers: Handlers): HTMLElement {
  const panel = el('section', { class: 'state-panel', 'aria-label': 'state view' });
  const view = state.view;
  if (!view) {
    panel.appendChild(el('div', { class: 'empty-state' }, 'No session state yet.'));
    return panel;
  }

  panel.appendChild(renderVersionBar(state, view, handlers));

  if (view.tables.length === 0 && view.queries.length === 0) {
    panel.appendChild(
      el(
        'div',
        { class: 'empty-state' },
        'T and Q are empty. Describe what you are looking for to get started.',
      ),
    );
    return panel;
  }

  const diff = state.diff;
  if (!diffIsEmpty(diff)) {
    panel.appendChild(
      el(
        'div',
        { class: 'diff-note', role: 'status' },
        `changes from version ${diff!.from_version} to ${diff!.to_version}`,
      ),
    );
  }

  const cardsHost = el('div', { class: 'table-cards' });
  for (const card of tableCards(view, diff)) {
    const cardEl = el('article', {
      class: `table-card${card.ghost ? ' ghost' : ''}`,
      'data-table': card.table.name,
      tabindex: '0',
    });
    const head = el('header', {}, card.table.name);
    if (card.badge) {
      head.appendChild(
        el('span', { class: `badge badge-${card.badge}` }, card.badge),
      );
    }
    if (card.table.materialized) {
      head.appendChild(
        el('span', { class: 'badge badge-materialized' }, 'materialized'),
      );
    }
    cardEl.appendChild(head);

    if (card.table.columns.length) {
      const cols = el('ul', { class: 'columns' });
      for (const col of card.table.columns) {
        cols.appendChild(el('li', {}, `${col.name}: ${col.dtype}`));
      }
      cardEl.appendChild(cols);
    }
    if (card.table.sample_rows?.length) {
      cardEl.appendChild(
        renderSampleGrid(card.table.name, card.table.columns.map((c) => c.name), card.table.sample_rows),
      );
      if (card.table.row_count !== undefined) {
        cardEl.appendChild(
          el('div', { class: 'row-count' }, `${card.table.row_count} rows total`),
        );
      }
    }
    cardsHost.appendChild(cardEl);
  }
  panel.appendChild(cardsHost);

  const queryList = el('ol', { class: 'query-list', 'aria-label': 'queries' });
  for (const row of queryRows(view, diff, state.openOldQueries)) {
    const entry = el('li', { class: 'query-row', 'data-index': String(row.index) });
    if (row.badge) {
      entry.appendChild(el('span', { class: `badge badge-${row.badge}` }, row.badge));
    }
    entry.appendChild(el('code', { class: 'query-text' }, row.text));
    const copy = el('button', { type: 'button', class: 'copy' }, 'copy');
    copy.addEventListener('click', () => handlers.onCopyQuery(row.text));
    entry.appendChild(copy);
    if (row.badge === 'edited' && row.oldText !== null) {
      const toggle = el(
        'button',
        { type: 'button', class: 'old-toggle', 'aria-expanded': row.showOld ? 'true' : 'false' },
        row.showOld ? 'hide previous' : 'show previous',
      );
      toggle.addEventListener('click', () => handlers.onToggleOldQuery(row.index));
      entry.appendChild(toggle);
      if (row.showOld) {
        entry.appendChild(el('code', { class: 'query-old' }, row.oldText));
      }
    }
    queryList.appendChild(entry);
  }
  panel.appendChild(queryList);
  return panel;
}

function renderVersionBar(state: ViewState, view: StateView, handlers: Handlers): HTMLElement {
  const bar = el('div', { class: 'version-bar' });
  const back = el('button', { type: 'button', class: 'step-back' }, '<') as HTMLButtonElement;
  if (view.version === 0) back.setAttribute('disabled', '');
  back.addEventListener('click', () => handlers.onVersionStep(-1));
  const forward = el('button', { type: 'button', class: 'step-forward' }, '>') as HTMLButtonElement;
  if (view.version >= view.current_version) forward.setAttribute('disabled', '');
  forward.addEventListener('click', () => handlers.onVersionStep(1));
  const label = el(
    'span',
    { class: 'version-label', role: 'status' },
    state.pinnedVersion === null
      ? `version ${view.version} (latest)`
      : `version ${view.version} of ${view.current_version} (pinned)`,
  );
  bar.appendChild(back);
  bar.appendChild(label);
  bar.appendChild(forward);
  return bar;
}

export function renderSampleGrid(
  tableName: string,
  columnNames: string[],
  rows: (string | number | boolean | null)[][],
): HTMLElement {
  const host = el('div', {
    class: 'sample-grid',
    role: 'table',
    'aria-label': `sample rows of ${tableName}`,
    'data-rows': String(rows.length),
  });
  const headerRow = el('div', { role: 'row', class: 'grid-header' });
  for (const name of columnNames) {
    headerRow.appendChild(el('span', { role: 'columnheader', tabindex: '0' }, name));
  }
  host.appendChild(headerRow);

  const renderRow = (row: (string | number | boolean | null)[], index: number) => {
    const rowEl = el('div', {
      role: 'row',
      class: 'grid-row',
      'data-row-index': String(index),
    });
    for (const cell of row) {
      rowEl.appendChild(
        el('span', { role: 'cell', tabindex: '0' }, cell === null ? '∅' : String(cell)),
      );
    }
    return rowEl;
  };

  if (rows.length <= VIRTUALIZE_THRESHOLD) {
    rows.forEach((row, i) => host.appendChild(renderRow(row, i)));
    return host;
  }

  // windowed rendering: a spacer keeps the scroll height honest while only
  // WINDOW_ROWS row nodes exist at a time
  host.classList.add('virtual');
  const viewport = el('div', { class: 'grid-viewport' });
  viewport.style.height = `${WINDOW_ROWS * ROW_HEIGHT}px`;
  viewport.style.overflowY = 'auto';
  const spacer = el('div', { class: 'grid-spacer' });
  spacer.style.height = `${rows.length * ROW_HEIGHT}px`;
  spacer.style.position = 'relative';
  const windowHost = el('div', { class: 'grid-window' });
  windowHost.style.position = 'absolute';
  spacer.appendChild(windowHost);
  viewport.appendChild(spacer);
  host.appendChild(viewport);

  const paint = () => {
    const first = Math.max(
      0,
      Math.min(
        Math.floor(viewport.scrollTop / ROW_HEIGHT),
        rows.length - WINDOW_ROWS,
      ),
    );
    windowHost.style.top = `${first * ROW_HEIGHT}px`;
    windowHost.textContent = '';
    for (let i = first; i < Math.min(first + WINDOW_ROWS, rows.length); i++) {
      windowHost.appendChild(renderRow(rows[i], i));
    }
  };
  viewport.addEventListener('scroll', paint);
  paint();
  return host;
}
