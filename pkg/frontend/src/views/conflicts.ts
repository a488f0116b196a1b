import { diffWords } from '../diff.js'
import type { ComplianceMatrix, ConflictFlag, FlagKind, Group } from '../types.js'

const KIND_ICON: Record<FlagKind, string> = {
  Conflict_Detected: '⚠',
  Clause_Mismatch: '§',
  Justification_Divergence: '≠',
}

function flagItem(flag: ConflictFlag,
                  onSelect: (key: string) => void): HTMLLIElement {
  const item = document.createElement('li')
  item.className = `flag-item kind-${flag.kind.toLowerCase()}`

  const pick = document.createElement('button')
  pick.type = 'button'
  pick.className = 'flag-pick'
  const icon = document.createElement('span')
  icon.setAttribute('aria-hidden', 'true')
  icon.textContent = `${KIND_ICON[flag.kind]} `
  pick.append(icon,
              document.createTextNode(
                `${flag.kind.replace(/_/g, ' ')}: ${flag.group_key}`))
  pick.addEventListener('click', () => onSelect(flag.group_key))

  const details = document.createElement('span')
  details.className = 'flag-details'
  details.textContent = flag.details
  if (flag.similarity !== null) {
    details.textContent += ` (similarity ${flag.similarity.toFixed(3)})`
  }
  item.append(pick, details)
  return item
}

function clauseDiff(left: string, right: string,
                    leftRegion: string, rightRegion: string): HTMLElement {
  const panel = document.createElement('div')
  panel.className = 'clause-diff'
  const caption = document.createElement('p')
  caption.textContent = `Clause text ${leftRegion} vs ${rightRegion}:`
  panel.append(caption)
  const line = document.createElement('p')
  for (const segment of diffWords(left, right)) {
    if (segment.kind === 'same') {
      line.append(document.createTextNode(segment.text + ' '))
      continue
    }
    const mark = document.createElement('mark')
    mark.className = segment.kind === 'left' ? 'diff-left' : 'diff-right'
    mark.textContent = segment.text
    line.append(mark, document.createTextNode(' '))
  }
  panel.append(line)
  return panel
}

function memberBlock(region: string, group: Group): HTMLElement {
  const block = document.createElement('div')
  block.className = 'member-block'
  const judgment = group.members[region]
  const heading = document.createElement('h4')
  heading.textContent = region
  block.append(heading)
  if (!judgment) {
    const absent = document.createElement('p')
    absent.className = 'absence-notice'
    absent.textContent = `absent in ${region}`
    block.append(absent)
    return block
  }
  const dl = document.createElement('dl')
  const add = (term: string, value: string) => {
    const dt = document.createElement('dt')
    dt.textContent = term
    const dd = document.createElement('dd')
    dd.textContent = value
    dl.append(dt, dd)
  }
  add('Standard', judgment.standard_id)
  add('Applicability', judgment.applicability)
  add('Clause', judgment.clause ?? 'none cited')
  add('Justification', judgment.justification)
  block.append(dl)
  return block
}

/**
 * Flag list plus a detail panel for the selected group: all member
 * judgments side by side, clause diff when the clauses disagree, and
 * the raw judgment JSON behind a collapsed-by-default toggle (the JSON
 * is not in the DOM until expanded).
 */
export function renderConflictExplorer(
  matrix: ComplianceMatrix,
  selectedGroup: string | null,
  onSelect: (key: string) => void,
): HTMLElement {
  const container = document.createElement('section')
  container.className = 'conflict-view'
  container.setAttribute('aria-label', 'conflict explorer')

  const list = document.createElement('ul')
  list.className = 'flag-list'
  if (matrix.conflict_flags.length === 0) {
    const none = document.createElement('li')
    none.textContent = 'No conflicts detected.'
    list.append(none)
  }
  for (const flag of matrix.conflict_flags) {
    list.append(flagItem(flag, onSelect))
  }
  container.append(list)

  if (!selectedGroup) {
    return container
  }
  const group = matrix.groups.find((g) => g.key === selectedGroup)
  if (!group) {
    return container
  }

  const detail = document.createElement('div')
  detail.className = 'group-detail'
  const title = document.createElement('h3')
  title.textContent = `Group ${group.key}`
  detail.append(title)

  const regions = Object.keys(matrix.region_summaries).sort()
  for (const region of regions) {
    detail.append(memberBlock(region, group))
  }

  const present = regions.filter((r) => group.members[r])
  if (present.length === 2) {
    const [a, b] = present
    const clauseA = group.members[a].clause ?? ''
    const clauseB = group.members[b].clause ?? ''
    if (clauseA.trim() !== clauseB.trim()) {
      detail.append(clauseDiff(clauseA, clauseB, a, b))
    }
  }

  const rawToggle = document.createElement('button')
  rawToggle.type = 'button'
  rawToggle.className = 'raw-toggle'
  rawToggle.textContent = 'Show raw judgment JSON'
  rawToggle.setAttribute('aria-expanded', 'false')
  const rawHost = document.createElement('div')
  rawHost.className = 'raw-host'
  rawToggle.addEventListener('click', () => {
    const expanded = rawToggle.getAttribute('aria-expanded') === 'true'
    if (expanded) {
      rawHost.textContent = ''
      rawToggle.setAttribute('aria-expanded', 'false')
      rawToggle.textContent = 'Show raw judgment JSON'
    } else {
      const pre = document.createElement('pre')
      pre.textContent = JSON.stringify(group.members, null, 2)
      rawHost.append(pre)
      rawToggle.setAttribute('aria-expanded', 'true')
      rawToggle.textContent = 'Hide raw judgment JSON'
    }
  })
  detail.append(rawToggle, rawHost)

  container.append(detail)
  return container
}
