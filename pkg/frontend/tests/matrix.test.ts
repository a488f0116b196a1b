import { describe, expect, it, vi } from 'vitest'
import { renderMatrix } from '../src/views/matrix.js'
import { loadArtifact } from './helpers.js'

const matrix = loadArtifact().matrix

function rows(view: HTMLElement): HTMLTableRowElement[] {
  return Array.from(view.querySelectorAll('tbody tr'))
}

describe('compliance matrix grid', () => {
  it('renders one column per region, sorted, after the standard column', () => {
    const view = renderMatrix(matrix, () => {})
    const headers = Array.from(view.querySelectorAll('thead th'))
      .map((th) => th.textContent)
    expect(headers).toEqual(['Standard', 'CN', 'US'])
  })

  it('shows exactly three Mandatory cells in the CN column', () => {
    const view = renderMatrix(matrix, () => {})
    // cells[0] is the row-header th, cells[1] the CN column
    const mandatory = rows(view).filter((row) =>
      row.cells[1].textContent?.includes('Mandatory'))
    expect(mandatory).toHaveLength(3)
    const ids = mandatory.map((row) => row.dataset.groupKey).sort()
    expect(ids).toEqual(['yy1234', 'yyt0314', 'yyt0612'])
  })

  it('marks the yy1234 row absent in US with a textual gap badge', () => {
    const view = renderMatrix(matrix, () => {})
    const row = rows(view).find((r) => r.dataset.groupKey === 'yy1234')
    expect(row).toBeDefined()
    const usCell = row!.cells[2]
    const badge = usCell.querySelector('.gap-badge')
    expect(badge).not.toBeNull()
    expect(badge!.textContent).toBe('✕ absent in US')
  })

  it('conveys severity with an icon glyph plus the label text', () => {
    const view = renderMatrix(matrix, () => {})
    const row = rows(view).find((r) => r.dataset.groupKey === 'yy1234')!
    const cnCell = row.cells[1]
    expect(cnCell.querySelector('.label-icon')!.textContent).toBe('◆')
    expect(cnCell.textContent).toContain('Mandatory')
    expect(cnCell.textContent).toContain('Clause 4.2')
  })

  it('flags conflicted rows with a visible marker, not color alone', () => {
    const view = renderMatrix(matrix, () => {})
    // every group in this fixture carries a Conflict_Detected flag
    for (const row of rows(view)) {
      expect(row.querySelector('.flag-mark')!.textContent).toBe('⚑ flagged')
    }
  })

  it('reports per-region label counts in the summary line', () => {
    const view = renderMatrix(matrix, () => {})
    const summary = view.querySelector('.matrix-summary')!.textContent!
    expect(summary).toContain('CN: 3 Mandatory, 1 Recommended, 1 Not Applicable')
    expect(summary).toContain('US: 0 Mandatory, 3 Recommended, 2 Not Applicable')
  })

  it('raises the group key when a standard name is clicked', () => {
    const onSelect = vi.fn()
    const view = renderMatrix(matrix, onSelect)
    const row = rows(view).find((r) => r.dataset.groupKey === 'yyt0612')!
    row.querySelector<HTMLButtonElement>('.group-link')!.click()
    expect(onSelect).toHaveBeenCalledWith('yyt0612')
  })

  it('keeps the wide table inside a horizontal scroll container', () => {
    const view = renderMatrix(matrix, () => {})
    expect(view.querySelector('.matrix-scroll table')).not.toBeNull()
  })
})
