export interface QuerySubmission {
  deviceText: string
  regions: string[]
}

export interface QueryPanelHandles {
  root: HTMLElement
  setBusy(busy: boolean): void
}

const REGIONS = ['CN', 'US']

/**
 * Sidebar form: description textarea plus region checkboxes.
 * Empty or whitespace-only input never reaches the submit callback;
 * the validation message is rendered inline instead.
 */
export function renderQueryPanel(
  onSubmit: (submission: QuerySubmission) => void,
): QueryPanelHandles {
  const root = document.createElement('form')
  root.className = 'query-panel'
  root.setAttribute('aria-label', 'device description input')

  const label = document.createElement('label')
  label.textContent = 'Device description'
  label.htmlFor = 'device-text'

  const textarea = document.createElement('textarea')
  textarea.id = 'device-text'
  textarea.rows = 5
  textarea.placeholder =
    'e.g. Disposable vacuum blood collection tube with EDTA additive'

  const regionRow = document.createElement('fieldset')
  regionRow.className = 'region-row'
  const legend = document.createElement('legend')
  legend.textContent = 'Regions'
  regionRow.append(legend)
  const boxes: HTMLInputElement[] = []
  for (const region of REGIONS) {
    const wrap = document.createElement('label')
    const box = document.createElement('input')
    box.type = 'checkbox'
    box.value = region
    box.checked = true
    boxes.push(box)
    wrap.append(box, document.createTextNode(` ${region}`))
    regionRow.append(wrap)
  }

  const submit = document.createElement('button')
  submit.type = 'submit'
  submit.textContent = 'Judge'

  const validation = document.createElement('p')
  validation.className = 'validation'
  validation.setAttribute('role', 'alert')
  validation.hidden = true

  root.append(label, textarea, regionRow, submit, validation)

  root.addEventListener('submit', (event) => {
    event.preventDefault()
    const text = textarea.value.trim()
    if (!text) {
      validation.textContent = 'Enter a device description first.'
      validation.hidden = false
      return
    }
    const regions = boxes.filter((b) => b.checked).map((b) => b.value)
    if (regions.length === 0) {
      validation.textContent = 'Pick at least one region.'
      validation.hidden = false
      return
    }
    validation.hidden = true
    onSubmit({ deviceText: text, regions })
  })

  return {
    root,
    setBusy(busy: boolean) {
      submit.disabled = busy
      submit.textContent = busy ? 'Judging…' : 'Judge'
    },
  }
}
