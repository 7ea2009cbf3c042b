// Wire types for the session service. These mirror the JSON the backend
// serves; the client computes nothing beyond presentation.

export type Dtype = 'int' | 'float' | 'text' | 'date' | 'bool';
export type ActionKind = 'reason' | 'tool_call' | 'state_update' | 'user_message';

export interface ColumnSpec {
  name: string;
  dtype: Dtype;
  description?: string;
}

export interface TableView {
  name: string;
  columns: ColumnSpec[];
  materialized: boolean;
  provenance: string[];
  row_count?: number;
  sample_rows?: (string | number | boolean | null)[][];
}

export interface StateView {
  version: number;
  current_version: number;
  tables: TableView[];
  queries: string[];
  rendering: string;
}

export interface QueryEdit {
  index: number;
  old: string | null;
  new: string | null;
}

export interface StateDiff {
  from_version: number;
  to_version: number;
  added_tables: TableView[];
  removed_tables: string[];
  modified_tables: TableView[];
  query_edits: QueryEdit[];
}

export interface SessionRecord {
  id: string;
  created_at: string;
  config: Record<string, unknown>;
  state_version: number;
  status: 'idle' | 'busy' | 'closed';
}

export interface ActionRecord {
  kind: ActionKind;
  index_in_turn: number;
  text?: string;
  tool?: string;
  arguments?: Record<string, unknown>;
  forced?: boolean;
}

export interface TurnResult {
  final_message: string;
  forced: boolean;
  failed: boolean;
  state_version: number;
  state_diff: StateDiff;
  actions: ActionRecord[];
  usage: { input_tokens: number; output_tokens: number };
}

export interface ActionEvent {
  type: 'action';
  kind: ActionKind;
  index_in_turn: number;
  summary: string;
  state_version: number;
}

export interface TurnEndEvent {
  type: 'turn_end';
  turn: number;
}

export type StreamEvent = ActionEvent | TurnEndEvent;

export interface ApiError {
  code: string;
  message: string;
  detail?: Record<string, unknown>;
}
