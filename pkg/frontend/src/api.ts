import type {
  ApiErrorBody,
  ComplianceMatrix,
  RunArtifact,
  StandardRecord,
} from './types.js'

/** Backend failure with the envelope's code preserved for the banner. */
export class ApiFailure extends Error {
  readonly code: string
  readonly status: number

  constructor(status: number, code: string, message: string) {
    super(message)
    this.code = code
    this.status = status
  }
}

async function asFailure(response: Response): Promise<ApiFailure> {
  let code = 'internal'
  let message = `request failed with status ${response.status}`
  try {
    const body = (await response.json()) as ApiErrorBody
    if (body?.error?.code) {
      code = body.error.code
      message = body.error.message
    }
  } catch {
    // non-JSON error body: keep the status-based message
  }
  return new ApiFailure(response.status, code, message)
}

export interface JudgeRequest {
  device_text: string
  regions?: string[]
  k?: number
}

export class ApiClient {
  constructor(private readonly base: string = '') {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response
    try {
      response = await fetch(this.base + path, init)
    } catch (err) {
      throw new ApiFailure(0, 'unreachable',
        `backend unreachable: ${(err as Error).message}`)
    }
    if (!response.ok) {
      throw await asFailure(response)
    }
    return (await response.json()) as T
  }

  judge(body: JudgeRequest): Promise<RunArtifact> {
    return this.request<RunArtifact>('/api/v1/judge', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    })
  }

  compare(artifactId: string): Promise<ComplianceMatrix> {
    return this.request<ComplianceMatrix>(
      `/api/v1/compare/${encodeURIComponent(artifactId)}`)
  }

  standard(normId: string, region?: string): Promise<StandardRecord> {
    const query = region ? `?region=${encodeURIComponent(region)}` : ''
    return this.request<StandardRecord>(
      `/api/v1/standards/${encodeURIComponent(normId)}${query}`)
  }

  health(): Promise<Record<string, unknown>> {
    return this.request('/healthz')
  }
}
