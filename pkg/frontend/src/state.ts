import type { ComplianceMatrix, RunArtifact } from './types.js'

// ── View state ──────────────────────────────────────────────────────
// One judge request may be in flight per tab. Every submission bumps
// the token; a response is applied only if its token is still current,
// so a slow earlier response can never clobber a newer one.

export interface ViewState {
  requestToken: number
  pending: boolean
  artifact: RunArtifact | null
  matrix: ComplianceMatrix | null
  artifactId: string | null
  selectedGroup: string | null
  expandedRaw: Set<string>
  error: string | null
}

export function createState(): ViewState {
  return {
    requestToken: 0,
    pending: false,
    artifact: null,
    matrix: null,
    artifactId: null,
    selectedGroup: null,
    expandedRaw: new Set(),
    error: null,
  }
}

export function beginRequest(state: ViewState): number {
  state.requestToken += 1
  state.pending = true
  state.error = null
  return state.requestToken
}

/** Apply a fresh judge response; stale tokens are discarded. */
export function applyArtifact(state: ViewState, token: number,
                              artifact: RunArtifact): boolean {
  if (token !== state.requestToken) {
    return false
  }
  state.pending = false
  state.artifact = artifact
  state.matrix = artifact.matrix
  state.artifactId = artifact.artifact_id
  state.selectedGroup = null
  state.expandedRaw = new Set()
  state.error = null
  return true
}

/** Apply a matrix loaded by artifact id (deep link); no transcripts. */
export function applyMatrix(state: ViewState, token: number,
                            artifactId: string,
                            matrix: ComplianceMatrix): boolean {
  if (token !== state.requestToken) {
    return false
  }
  state.pending = false
  state.artifact = null
  state.matrix = matrix
  state.artifactId = artifactId
  state.selectedGroup = null
  state.expandedRaw = new Set()
  state.error = null
  return true
}

export function applyError(state: ViewState, token: number,
                           message: string): boolean {
  if (token !== state.requestToken) {
    return false
  }
  state.pending = false
  state.error = message
  return true
}

export function selectGroup(state: ViewState, key: string | null): void {
  state.selectedGroup = key
}

export function toggleRaw(state: ViewState, panel: string): boolean {
  if (state.expandedRaw.has(panel)) {
    state.expandedRaw.delete(panel)
    return false
  }
  state.expandedRaw.add(panel)
  return true
}
