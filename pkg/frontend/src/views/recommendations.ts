import type { Recommendation } from '../types.js'

export function renderRecommendations(
  recommendations: Recommendation[],
): HTMLElement {
  const container = document.createElement('section')
  container.className = 'recommendations-view'
  container.setAttribute('aria-label', 'recommendations')

  if (recommendations.length === 0) {
    const empty = document.createElement('p')
    empty.textContent = 'No follow-up recommendations.'
    container.append(empty)
    return container
  }

  const list = document.createElement('ol')
  for (const rec of recommendations) {
    const item = document.createElement('li')
    item.className = 'rec-item'

    const kind = document.createElement('span')
    kind.className = 'rec-kind'
    kind.textContent = rec.kind
    const text = document.createElement('p')
    text.textContent = rec.text
    item.append(kind, text)

    if (rec.related.length > 0) {
      const related = document.createElement('small')
      related.className = 'rec-related'
      related.textContent = `Related: ${rec.related.join(', ')}`
      item.append(related)
    }
    list.append(item)
  }
  container.append(list)
  return container
}
