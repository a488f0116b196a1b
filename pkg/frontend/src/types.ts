// ── API payload shapes ──────────────────────────────────────────────
// Mirrors the JSON the backend serves. Nothing in the UI recomputes
// these values; every rendered fact traces back to one of these fields.

export type Label = 'Mandatory' | 'Recommended' | 'Not Applicable'

export type FlagKind =
  | 'Conflict_Detected'
  | 'Clause_Mismatch'
  | 'Justification_Divergence'

export interface Judgment {
  standard_id: string
  name: string
  applicability: Label
  justification: string
  clause: string | null
  region: string
  provenance: string
}

export interface Group {
  key: string
  members: Record<string, Judgment>
}

export interface ConflictFlag {
  kind: FlagKind
  group_key: string
  details: string
  similarity: number | null
}

export interface Recommendation {
  kind: string
  text: string
  triggered_by: string
  related: string[]
}

export type RegionSummary = Partial<Record<Label, number>>

export interface ComplianceMatrix {
  schema: string
  device_text: string
  region_summaries: Record<string, RegionSummary>
  groups: Group[]
  conflict_flags: ConflictFlag[]
  recommendations: Recommendation[]
  meta: {
    divergence_checked: boolean
    divergence_threshold: number
    [key: string]: unknown
  }
}

export interface RetrievalCandidate {
  norm_id: string
  region: string
  rank: number
  dense_score: number
  keyword_score: number
  final_score: number
  rerank_score: number | null
}

export interface Transcript {
  prompt: string
  raw_response: string
  attempts: number
  model_id: string
  temperature: number
}

export interface RunArtifact {
  schema: string
  artifact_id: string
  device_text: string
  config: Record<string, unknown>
  retrieval: Record<string, RetrievalCandidate[]>
  transcripts: Record<string, Transcript>
  judgments: Judgment[]
  dropped: Record<string, number>
  matrix: ComplianceMatrix
  timings: Record<string, number>
}

export interface StandardRecord {
  id: string
  norm_id: string
  region: string
  status: string
  [key: string]: unknown
}

export interface ApiErrorBody {
  error: {
    code: string
    message: string
    [key: string]: unknown
  }
}
