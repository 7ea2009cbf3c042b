// Pure presentation state. Every mutation is a function from (state,
// event) to state, so the whole UI flow is testable without a DOM. The
// client computes nothing beyond presentation: diffs shown while version
// stepping are derived from two already-served state views.

import type {
  ActionEvent,
  ActionKind,
  StateDiff,
  StateView,
  TableView,
  TurnResult,
} from './types.js';

export interface ChatMessage {
  role: 'user' | 'system';
  text: string;
  forced: boolean;
  pending: boolean;
}

export interface FeedItem {
  kind: ActionKind;
  summary: string;
  indexInTurn: number;
  collapsed: boolean; // reasoning starts collapsed
}

export type TableBadge = 'added' | 'removed' | 'modified';

export interface TableCard {
  table: TableView;
  badge: TableBadge | null;
  ghost: boolean; // removed tables render as ghosts of the previous version
}

export interface QueryRow {
  index: number;
  text: string;
  badge: 'added' | 'edited' | 'removed' | null;
  oldText: string | null;
  showOld: boolean;
}

export type Connection = 'idle' | 'streaming' | 'reconnecting';

export interface ViewState {
  sessionId: string | null;
  messages: ChatMessage[];
  feed: FeedItem[];
  busy: boolean;
  banner: string | null;
  connection: Connection;
  view: StateView | null; // the rendered version
  pinnedVersion: number | null; // null = follow latest
  diff: StateDiff | null; // drives badges for the rendered version
  inputEnabled: boolean;
  openOldQueries: number[]; // query indexes with the old/new toggle expanded
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    messages: [],
    feed: [],
    busy: false,
    banner: null,
    connection: 'idle',
    view: null,
    pinnedVersion: null,
    diff: null,
    inputEnabled: true,
    openOldQueries: [],
  };
}

// -- reducers -----------------------------------------------------------------

export function sessionStarted(state: ViewState, sessionId: string): ViewState {
  return { ...initialState(), sessionId };
}

export function sendStarted(state: ViewState, text: string): ViewState {
  return {
    ...state,
    busy: true,
    banner: null,
    feed: [],
    connection: 'streaming',
    messages: [
      ...state.messages,
      { role: 'user', text, forced: false, pending: true },
    ],
  };
}

export function actionArrived(state: ViewState, event: ActionEvent): ViewState {
  const item: FeedItem = {
    kind: event.kind,
    summary: event.summary,
    indexInTurn: event.index_in_turn,
    collapsed: event.kind === 'reason',
  };
  return { ...state, feed: [...state.feed, item] };
}

export function reconnecting(state: ViewState): ViewState {
  return { ...state, connection: 'reconnecting' };
}

export function streamResumed(state: ViewState): ViewState {
  return { ...state, connection: 'streaming' };
}

export function turnCompleted(state: ViewState, result: TurnResult): ViewState {
  const messages = state.messages.map((m) =>
    m.pending ? { ...m, pending: false } : m,
  );
  messages.push({
    role: 'system',
    text: result.final_message,
    forced: result.forced,
    pending: false,
  });
  return {
    ...state,
    messages,
    busy: false,
    connection: 'idle',
    diff: result.state_diff,
    pinnedVersion: null,
    inputEnabled: true,
  };
}

export function turnRejectedBusy(state: ViewState): ViewState {
  return {
    ...state,
    busy: false,
    connection: 'idle',
    banner: 'Session is busy with another turn; wait for it to finish.',
    inputEnabled: false,
    messages: state.messages.filter((m) => !m.pending),
  };
}

export function turnFailed(state: ViewState, message: string): ViewState {
  return {
    ...state,
    busy: false,
    connection: 'idle',
    banner: message,
    inputEnabled: true,
    messages: state.messages.map((m) => (m.pending ? { ...m, pending: false } : m)),
  };
}

export function bannerCleared(state: ViewState): ViewState {
  return { ...state, banner: null, inputEnabled: true };
}

export function stateLoaded(
  state: ViewState,
  view: StateView,
  diff: StateDiff | null = null,
): ViewState {
  return { ...state, view, diff, openOldQueries: [] };
}

export function toggleOldQuery(state: ViewState, index: number): ViewState {
  const open = state.openOldQueries.includes(index)
    ? state.openOldQueries.filter((i) => i !== index)
    : [...state.openOldQueries, index];
  return { ...state, openOldQueries: open };
}

export function versionPinned(state: ViewState, version: number | null): ViewState {
  return { ...state, pinnedVersion: version };
}

export function toggleFeedItem(state: ViewState, index: number): ViewState {
  return {
    ...state,
    feed: state.feed.map((f, i) =>
      i === index ? { ...f, collapsed: !f.collapsed } : f,
    ),
  };
}

// -- presentation diffing ---------------------------------------------------------

/** Diff two served state views for version-stepping badges. */
export function computeViewDiff(prev: StateView, next: StateView): StateDiff {
  const prevByName = new Map(prev.tables.map((t) => [t.name, t]));
  const nextByName = new Map(next.tables.map((t) => [t.name, t]));
  const added = next.tables.filter((t) => !prevByName.has(t.name));
  const removed = prev.tables
    .filter((t) => !nextByName.has(t.name))
    .map((t) => t.name);
  const modified = next.tables.filter((t) => {
    const before = prevByName.get(t.name);
    return before !== undefined && !sameTable(before, t);
  });

  const edits: StateDiff['query_edits'] = [];
  const common = Math.min(prev.queries.length, next.queries.length);
  for (let i = 0; i < common; i++) {
    if (prev.queries[i] !== next.queries[i]) {
      edits.push({ index: i, old: prev.queries[i], new: next.queries[i] });
    }
  }
  for (let i = common; i < next.queries.length; i++) {
    edits.push({ index: i, old: null, new: next.queries[i] });
  }
  for (let i = prev.queries.length - 1; i >= common; i--) {
    edits.push({ index: i, old: prev.queries[i], new: null });
  }
  return {
    from_version: prev.version,
    to_version: next.version,
    added_tables: added,
    removed_tables: removed,
    modified_tables: modified,
    query_edits: edits,
  };
}

function sameTable(a: TableView, b: TableView): boolean {
  if (a.materialized !== b.materialized) return false;
  if (a.columns.length !== b.columns.length) return false;
  return a.columns.every(
    (c, i) => c.name === b.columns[i].name && c.dtype === b.columns[i].dtype,
  );
}

export function diffIsEmpty(diff: StateDiff | null): boolean {
  return (
    !diff ||
    (diff.added_tables.length === 0 &&
      diff.removed_tables.length === 0 &&
      diff.modified_tables.length === 0 &&
      diff.query_edits.length === 0)
  );
}

/** Annotate the rendered view's tables with diff badges; removed tables
 * come back as ghost cards so the step makes visual sense. */
export function tableCards(view: StateView, diff: StateDiff | null): TableCard[] {
  const added = new Set(diff?.added_tables.map((t) => t.name) ?? []);
  const modified = new Set(diff?.modified_tables.map((t) => t.name) ?? []);
  const cards: TableCard[] = view.tables.map((table) => ({
    table,
    badge: added.has(table.name)
      ? 'added'
      : modified.has(table.name)
        ? 'modified'
        : null,
    ghost: false,
  }));
  for (const name of diff?.removed_tables ?? []) {
    cards.push({
      table: { name, columns: [], materialized: false, provenance: [] },
      badge: 'removed',
      ghost: true,
    });
  }
  return cards;
}

/** Annotate Q with per-edit badges; edited rows carry the old text for the
 * inline old/new toggle. */
export function queryRows(
  view: StateView,
  diff: StateDiff | null,
  openOldQueries: number[] = [],
): QueryRow[] {
  const edits = new Map((diff?.query_edits ?? []).map((e) => [e.index, e]));
  const rows: QueryRow[] = view.queries.map((text, index) => {
    const edit = edits.get(index);
    if (!edit) {
      return { index, text, badge: null, oldText: null, showOld: false };
    }
    if (edit.old === null) {
      return { index, text, badge: 'added', oldText: null, showOld: false };
    }
    return {
      index,
      text,
      badge: 'edited',
      oldText: edit.old,
      showOld: openOldQueries.includes(index),
    };
  });
  for (const edit of diff?.query_edits ?? []) {
    if (edit.new === null && edit.old !== null) {
      rows.push({
        index: edit.index,
        text: edit.old,
        badge: 'removed',
        oldText: null,
        showOld: false,
      });
    }
  }
  return rows;
}
