import type { RunArtifact, ComplianceMatrix } from '../types.js'

// Raw payload inspector. The JSON body is serialized lazily: nothing is
// stringified or inserted into the DOM until the section is expanded, so
// large artifacts cost nothing while collapsed.

interface InspectorSource {
  label: string
  payload: unknown
}

function sources(
  artifact: RunArtifact | null,
  matrix: ComplianceMatrix | null,
): InspectorSource[] {
  if (artifact !== null) {
    return [
      { label: 'artifact', payload: artifact },
      { label: 'matrix', payload: artifact.matrix },
      { label: 'retrieval', payload: artifact.retrieval },
      { label: 'transcripts', payload: artifact.transcripts },
    ]
  }
  if (matrix !== null) {
    return [{ label: 'matrix', payload: matrix }]
  }
  return []
}

export function renderInspector(
  artifact: RunArtifact | null,
  matrix: ComplianceMatrix | null,
): HTMLElement {
  const container = document.createElement('section')
  container.className = 'inspector-view'
  container.setAttribute('aria-label', 'raw artifacts')

  const heading = document.createElement('h2')
  heading.textContent = 'Raw payloads'
  container.append(heading)

  const entries = sources(artifact, matrix)
  if (entries.length === 0) {
    const empty = document.createElement('p')
    empty.textContent = 'Run a judgment to inspect its payloads.'
    container.append(empty)
    return container
  }

  for (const entry of entries) {
    container.append(inspectorBlock(entry))
  }
  return container
}

function inspectorBlock(entry: InspectorSource): HTMLElement {
  const block = document.createElement('div')
  block.className = 'inspector-block'

  const toggle = document.createElement('button')
  toggle.type = 'button'
  toggle.className = 'inspector-toggle'
  toggle.textContent = `Show ${entry.label} JSON`
  toggle.setAttribute('aria-expanded', 'false')
  block.append(toggle)

  let pre: HTMLPreElement | null = null
  toggle.addEventListener('click', () => {
    if (pre === null) {
      pre = document.createElement('pre')
      pre.className = 'inspector-json'
      pre.textContent = JSON.stringify(entry.payload, null, 2)
      block.append(pre)
      toggle.setAttribute('aria-expanded', 'true')
      toggle.textContent = `Hide ${entry.label} JSON`
    } else {
      pre.remove()
      pre = null
      toggle.setAttribute('aria-expanded', 'false')
      toggle.textContent = `Show ${entry.label} JSON`
    }
  })
  return block
}
