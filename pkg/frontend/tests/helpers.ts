import artifactData from './fixtures/artifact.json'
import type {
  ComplianceMatrix,
  Judgment,
  Label,
  RunArtifact,
} from '../src/types.js'

/** Captured judge response for the bundled blood-collection-tube demo. */
export function loadArtifact(): RunArtifact {
  return structuredClone(artifactData) as unknown as RunArtifact
}

export function judgment(region: string, standardId: string, label: Label,
                         clause: string | null): Judgment {
  return {
    standard_id: standardId,
    name: `${standardId} title`,
    applicability: label,
    justification: `why ${standardId} is ${label.toLowerCase()}`,
    clause,
    region,
    provenance: 'LLM',
  }
}

/**
 * Hand-built two-region matrix with one aligned group whose clause
 * strings disagree, for exercising the mismatch diff path the captured
 * fixture (all single-region groups) cannot reach.
 */
export function mismatchMatrix(): ComplianceMatrix {
  return {
    schema: 'regjudge.matrix.v1',
    device_text: 'infusion pump with occlusion alarm',
    region_summaries: {
      CN: { Mandatory: 1 },
      US: { Mandatory: 1 },
    },
    groups: [
      {
        key: 'gb9706',
        members: {
          CN: judgment('CN', 'GB 9706.1-2020', 'Mandatory',
                       'Clause 12.4 alarm limits'),
          US: judgment('US', 'IEC 60601-1', 'Mandatory',
                       'Clause 12.9 alarm limits'),
        },
      },
    ],
    conflict_flags: [
      {
        kind: 'Clause_Mismatch',
        group_key: 'gb9706',
        details: 'clauses differ between CN and US',
        similarity: 0.82,
      },
    ],
    recommendations: [],
    meta: { divergence_checked: true, divergence_threshold: 0.75 },
  }
}
