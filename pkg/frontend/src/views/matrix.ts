import type { ComplianceMatrix, Group, Label } from '../types.js'

// Severity is always conveyed by text and an icon glyph, never color
// alone; the CSS classes only add emphasis on top.

const LABEL_ICON: Record<Label, string> = {
  'Mandatory': '◆',
  'Recommended': '◈',
  'Not Applicable': '◇',
}

const LABEL_CLASS: Record<Label, string> = {
  'Mandatory': 'label-mandatory',
  'Recommended': 'label-recommended',
  'Not Applicable': 'label-na',
}

function regionsOf(matrix: ComplianceMatrix): string[] {
  return Object.keys(matrix.region_summaries).sort()
}

function flaggedGroups(matrix: ComplianceMatrix): Set<string> {
  return new Set(matrix.conflict_flags.map((f) => f.group_key))
}

function labelCell(group: Group, region: string): HTMLTableCellElement {
  const cell = document.createElement('td')
  const judgment = group.members[region]
  if (!judgment) {
    cell.className = 'cell-gap'
    const badge = document.createElement('span')
    badge.className = 'gap-badge'
    badge.textContent = `✕ absent in ${region}`
    cell.append(badge)
    return cell
  }
  cell.className = `cell-label ${LABEL_CLASS[judgment.applicability]}`
  const icon = document.createElement('span')
  icon.className = 'label-icon'
  icon.setAttribute('aria-hidden', 'true')
  icon.textContent = LABEL_ICON[judgment.applicability]
  cell.append(icon, document.createTextNode(` ${judgment.applicability}`))
  if (judgment.clause) {
    const clause = document.createElement('small')
    clause.className = 'clause-ref'
    clause.textContent = judgment.clause
    cell.append(document.createElement('br'), clause)
  }
  return cell
}

function summaryLine(matrix: ComplianceMatrix): HTMLElement {
  const line = document.createElement('p')
  line.className = 'matrix-summary'
  const parts = regionsOf(matrix).map((region) => {
    const counts = matrix.region_summaries[region]
    const inner = (['Mandatory', 'Recommended', 'Not Applicable'] as Label[])
      .map((label) => `${counts[label] ?? 0} ${label}`)
      .join(', ')
    return `${region}: ${inner}`
  })
  line.textContent = parts.join(' · ')
  return line
}

/**
 * Region-by-standard label grid. One row per aligned group; a missing
 * member renders as a gap badge, and rows carrying any conflict flag
 * get a flagged marker in the first column.
 */
export function renderMatrix(
  matrix: ComplianceMatrix,
  onSelectGroup: (key: string) => void,
): HTMLElement {
  const container = document.createElement('section')
  container.className = 'matrix-view'
  container.setAttribute('aria-label', 'compliance matrix')

  container.append(summaryLine(matrix))

  const table = document.createElement('table')
  table.className = 'matrix-grid'
  const regions = regionsOf(matrix)
  const flagged = flaggedGroups(matrix)

  const head = table.createTHead().insertRow()
  for (const title of ['Standard', ...regions]) {
    const th = document.createElement('th')
    th.textContent = title
    head.append(th)
  }

  const body = table.createTBody()
  for (const group of matrix.groups) {
    const row = body.insertRow()
    row.dataset.groupKey = group.key

    const name = document.createElement('th')
    name.scope = 'row'
    const anyMember = Object.values(group.members)[0]
    const button = document.createElement('button')
    button.type = 'button'
    button.className = 'group-link'
    button.textContent = anyMember ? anyMember.standard_id : group.key
    button.addEventListener('click', () => onSelectGroup(group.key))
    name.append(button)
    if (flagged.has(group.key)) {
      const mark = document.createElement('span')
      mark.className = 'flag-mark'
      mark.textContent = '⚑ flagged'
      name.append(' ', mark)
      row.classList.add('row-flagged')
    }
    row.append(name)

    for (const region of regions) {
      row.append(labelCell(group, region))
    }
  }

  const scroller = document.createElement('div')
  scroller.className = 'matrix-scroll'
  scroller.append(table)
  container.append(scroller)
  return container
}
