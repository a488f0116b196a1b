import { beforeAll, describe, expect, it, vi } from 'vitest'
import { loadArtifact } from './helpers.js'

// A page opened directly on #/run/<id> must restore that run's matrix
// from the compare endpoint before any form interaction.

const matrix = loadArtifact().matrix
const runId = 'c'.repeat(64)
const fetchMock = vi.fn()

beforeAll(async () => {
  document.body.innerHTML = `
    <div id="query-mount"></div>
    <div id="error-banner" role="alert" hidden></div>
    <p id="run-status"></p>
    <div id="matrix-mount"></div>
    <div id="conflicts-mount"></div>
    <div id="recommendations-mount"></div>
    <div id="inspector-mount"></div>`
  window.location.hash = `#/run/${runId}`
  fetchMock.mockResolvedValue(
    new Response(JSON.stringify(matrix), { status: 200 }))
  vi.stubGlobal('fetch', fetchMock)
  await import('../src/main.js')
})

describe('deep link boot', () => {
  it('loads the stored matrix for the id in the hash', async () => {
    await vi.waitFor(() => {
      expect(document.querySelectorAll('#matrix-mount tbody tr'))
        .toHaveLength(10)
    })
    expect(fetchMock.mock.calls[0][0]).toBe(`/api/v1/compare/${runId}`)
  })

  it('labels the context as matrix-only: no transcripts available', () => {
    expect(document.getElementById('run-status')!.textContent)
      .toContain('matrix only')
    const inspector = document.querySelector('#inspector-mount')!
    expect(inspector.textContent).toContain('matrix')
    expect(inspector.textContent).not.toContain('transcripts')
  })

  it('ignores hashes that are not run links', () => {
    const calls = fetchMock.mock.calls.length
    window.location.hash = '#/run/not-a-real-id'
    window.dispatchEvent(new HashChangeEvent('hashchange'))
    expect(fetchMock.mock.calls.length).toBe(calls)
  })
})
