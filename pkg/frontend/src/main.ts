import { ApiClient, ApiFailure } from './api.js'
import {
  applyArtifact,
  applyError,
  applyMatrix,
  beginRequest,
  createState,
  selectGroup,
} from './state.js'
import { renderQueryPanel } from './views/query.js'
import { renderMatrix } from './views/matrix.js'
import { renderConflictExplorer } from './views/conflicts.js'
import { renderRecommendations } from './views/recommendations.js'
import { renderInspector } from './views/inspector.js'

function byId<T extends HTMLElement>(id: string): T {
  const element = document.getElementById(id)
  if (!element) {
    throw new Error(`missing required element: #${id}`)
  }
  return element as T
}

const api = new ApiClient()
const state = createState()

const banner = byId<HTMLDivElement>('error-banner')
const status = byId<HTMLParagraphElement>('run-status')
const matrixMount = byId<HTMLDivElement>('matrix-mount')
const conflictsMount = byId<HTMLDivElement>('conflicts-mount')
const recsMount = byId<HTMLDivElement>('recommendations-mount')
const inspectorMount = byId<HTMLDivElement>('inspector-mount')

function placeholder(text: string): HTMLParagraphElement {
  const p = document.createElement('p')
  p.className = 'placeholder'
  p.textContent = text
  return p
}

function render(): void {
  banner.hidden = state.error === null
  banner.textContent = state.error ?? ''

  if (state.pending) {
    status.textContent = 'Judging…'
  } else if (state.artifactId) {
    status.textContent = `Run ${state.artifactId.slice(0, 12)}… ` +
      (state.artifact ? '(full artifact)' : '(matrix only, from deep link)')
  } else {
    status.textContent = 'No run loaded.'
  }

  if (state.matrix) {
    matrixMount.replaceChildren(renderMatrix(state.matrix, onSelectGroup))
    conflictsMount.replaceChildren(
      renderConflictExplorer(state.matrix, state.selectedGroup, onSelectGroup))
    recsMount.replaceChildren(
      renderRecommendations(state.matrix.recommendations))
  } else {
    matrixMount.replaceChildren(
      placeholder('Submit a device description to build the matrix.'))
    conflictsMount.replaceChildren(placeholder('No run yet.'))
    recsMount.replaceChildren(placeholder('No run yet.'))
  }
  inspectorMount.replaceChildren(renderInspector(state.artifact, state.matrix))
  queryPanel.setBusy(state.pending)
}

function onSelectGroup(key: string): void {
  selectGroup(state, key)
  render()
}

function failureMessage(err: unknown): string {
  if (err instanceof ApiFailure) {
    return `${err.code}: ${err.message}`
  }
  return String(err)
}

const queryPanel = renderQueryPanel(({ deviceText, regions }) => {
  const token = beginRequest(state)
  render()
  api.judge({ device_text: deviceText, regions }).then(
    (artifact) => {
      if (applyArtifact(state, token, artifact)) {
        window.location.hash = `#/run/${artifact.artifact_id}`
        render()
      }
    },
    (err: unknown) => {
      if (applyError(state, token, failureMessage(err))) {
        render()
      }
    },
  )
})
byId('query-mount').append(queryPanel.root)

// ── Deep links ──────────────────────────────────────────────────────
// #/run/<artifact_id> reloads a stored run's matrix via the compare
// endpoint. The hash written after a fresh judge matches the id we are
// already showing, so that write does not trigger a refetch.

function parseRunHash(hash: string): string | null {
  const match = /^#\/run\/([0-9a-f]{64})$/.exec(hash)
  return match ? match[1] : null
}

function loadFromHash(): void {
  const id = parseRunHash(window.location.hash)
  if (!id || id === state.artifactId) {
    return
  }
  const token = beginRequest(state)
  render()
  api.compare(id).then(
    (matrix) => {
      if (applyMatrix(state, token, id, matrix)) {
        render()
      }
    },
    (err: unknown) => {
      if (applyError(state, token, failureMessage(err))) {
        render()
      }
    },
  )
}

window.addEventListener('hashchange', loadFromHash)
loadFromHash()
render()
