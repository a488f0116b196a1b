import { beforeAll, describe, expect, it, vi } from 'vitest'
import { loadArtifact } from './helpers.js'

// Boots the real entry module against a stubbed fetch and drives the
// page through the form, exactly as a browser would.

const artifact = loadArtifact()
const fetchMock = vi.fn()

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), { status })
}

beforeAll(async () => {
  document.body.innerHTML = `
    <div id="query-mount"></div>
    <div id="error-banner" role="alert" hidden></div>
    <p id="run-status"></p>
    <div id="matrix-mount"></div>
    <div id="conflicts-mount"></div>
    <div id="recommendations-mount"></div>
    <div id="inspector-mount"></div>`
  vi.stubGlobal('fetch', fetchMock)
  await import('../src/main.js')
})

function submitText(text: string): void {
  const textarea = document.querySelector<HTMLTextAreaElement>('#device-text')!
  textarea.value = text
  document.querySelector('form.query-panel')!
    .dispatchEvent(new Event('submit', { cancelable: true }))
}

describe('judge flow wiring', () => {
  it('renders the matrix and deep link after a successful judge', async () => {
    fetchMock.mockResolvedValueOnce(jsonResponse(artifact))
    submitText('vacuum blood collection tube')

    await vi.waitFor(() => {
      expect(document.querySelectorAll('#matrix-mount tbody tr'))
        .toHaveLength(10)
    })
    expect(fetchMock).toHaveBeenCalledTimes(1)
    expect(fetchMock.mock.calls[0][0]).toBe('/api/v1/judge')

    // hash now addresses the run; the guard must not refetch it
    expect(window.location.hash).toBe(`#/run/${artifact.artifact_id}`)
    expect(fetchMock).toHaveBeenCalledTimes(1)

    const banner = document.getElementById('error-banner')!
    expect(banner.hidden).toBe(true)
    expect(document.getElementById('run-status')!.textContent)
      .toContain(artifact.artifact_id.slice(0, 12))
    // full artifact: the inspector offers transcripts too
    expect(document.querySelector('#inspector-mount')!.textContent)
      .toContain('transcripts')
  })

  it('shows a banner naming the failed stage on a 502', async () => {
    fetchMock.mockResolvedValueOnce(jsonResponse({
      error: {
        code: 'provider_error',
        message: "stage 'reasoning' failed: gateway down",
      },
    }, 502))
    submitText('infusion pump')

    const banner = document.getElementById('error-banner')!
    await vi.waitFor(() => {
      expect(banner.hidden).toBe(false)
    })
    expect(banner.textContent).toContain('provider_error')
    expect(banner.textContent).toContain("stage 'reasoning' failed")
  })

  it('clears the banner when the next run succeeds', async () => {
    fetchMock.mockResolvedValueOnce(jsonResponse(artifact))
    submitText('vacuum blood collection tube again')

    const banner = document.getElementById('error-banner')!
    await vi.waitFor(() => {
      expect(banner.hidden).toBe(true)
    })
    expect(document.querySelectorAll('#matrix-mount tbody tr'))
      .toHaveLength(10)
  })
})
