// DOM rendering tests (jsdom): structure, accessibility hooks, and the
// virtualized sample-row grid.

import { describe, expect, it } from 'vitest';

import { render, renderSampleGrid, VIRTUALIZE_THRESHOLD } from '../src/render.js';
import type { StateView } from '../src/types.js';
import { initialState, stateLoaded } from '../src/viewmodel.js';

const noopHandlers = {
  onSend: () => {},
  onToggleFeedItem: () => {},
  onVersionStep: () => {},
  onToggleOldQuery: () => {},
  onCopyQuery: () => {},
};

function host(): HTMLElement {
  const el = document.createElement('div');
  document.body.appendChild(el);
  return el;
}

describe('state panel rendering', () => {
  it('v0 renders the empty-state placeholder', () => {
    const root = host();
    const view: StateView = {
      version: 0,
      current_version: 0,
      tables: [],
      queries: [],
      rendering: 'T: (empty)\nQ: []',
    };
    render(stateLoaded(initialState(), view), root, noopHandlers);
    expect(root.querySelector('.empty-state')?.textContent).toMatch(/empty/i);
  });

  it('materialized tables show schema, badge, and sample rows', () => {
    const root = host();
    const view: StateView = {
      version: 2,
      current_version: 2,
      tables: [
        {
          name: 'procurement_data_joined',
          materialized: true,
          provenance: ['table:procurement_data'],
          columns: [
            { name: 'price', dtype: 'float' },
            { name: 'new_tariff', dtype: 'float' },
          ],
          row_count: 2,
          sample_rows: [
            [100.0, 0.1],
            [55.0, 0.02],
          ],
        },
      ],
      queries: ['SELECT price FROM procurement_data_joined'],
      rendering: '',
    };
    render(stateLoaded(initialState(), view), root, noopHandlers);
    const card = root.querySelector('.table-card')!;
    expect(card.querySelector('header')?.textContent).toContain('procurement_data_joined');
    expect(card.querySelector('.badge-materialized')).not.toBeNull();
    expect(card.querySelectorAll('.columns li')).toHaveLength(2);
    const grid = card.querySelector('.sample-grid')!;
    expect(grid.querySelectorAll('.grid-row')).toHaveLength(2);
    expect(grid.textContent).toContain('100');
    const queries = root.querySelectorAll('.query-row code.query-text');
    expect(queries[0].textContent).toBe('SELECT price FROM procurement_data_joined');
    expect(root.querySelector('.query-row .copy')).not.toBeNull();
  });

  it('keeps keyboard access: cards and cells are tabbable, log has a role', () => {
    const root = host();
    const view: StateView = {
      version: 1,
      current_version: 1,
      tables: [
        {
          name: 't',
          materialized: true,
          provenance: [],
          columns: [{ name: 'x', dtype: 'int' }],
          sample_rows: [[1]],
        },
      ],
      queries: [],
      rendering: '',
    };
    render(stateLoaded(initialState(), view), root, noopHandlers);
    expect(root.querySelector('.table-card')?.getAttribute('tabindex')).toBe('0');
    expect(root.querySelector('[role="cell"]')?.getAttribute('tabindex')).toBe('0');
    expect(root.querySelector('[role="log"]')).not.toBeNull();
  });
});

describe('sample grid virtualization', () => {
  it(`renders all rows up to ${VIRTUALIZE_THRESHOLD}`, () => {
    const rows = Array.from({ length: 100 }, (_, i) => [i]);
    const grid = renderSampleGrid('t', ['x'], rows);
    expect(grid.classList.contains('virtual')).toBe(false);
    expect(grid.querySelectorAll('.grid-row')).toHaveLength(100);
  });

  it('windows the DOM beyond the threshold and repaints on scroll', () => {
    const rows = Array.from({ length: 500 }, (_, i) => [i]);
    const grid = renderSampleGrid('t', ['x'], rows);
    document.body.appendChild(grid);
    expect(grid.classList.contains('virtual')).toBe(true);
    const rendered = grid.querySelectorAll('.grid-row');
    expect(rendered.length).toBeLessThan(100);
    expect(rendered[0].textContent).toBe('0');

    const viewport = grid.querySelector('.grid-viewport') as HTMLElement;
    const spacer = grid.querySelector('.grid-spacer') as HTMLElement;
    expect(spacer.style.height).toBe(`${500 * 22}px`);
    Object.defineProperty(viewport, 'scrollTop', { value: 220 * 22, writable: true });
    viewport.dispatchEvent(new Event('scroll'));
    const after = grid.querySelectorAll('.grid-row');
    expect(after[0].getAttribute('data-row-index')).toBe('220');
  });
});
