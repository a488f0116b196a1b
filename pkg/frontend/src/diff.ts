// Word-level diff for the clause comparison panel. Small inputs only
// (clause strings are a few words), so a plain LCS table is fine.

export type DiffSegment =
  | { kind: 'same'; text: string }
  | { kind: 'left'; text: string }
  | { kind: 'right'; text: string }

function split(text: string): string[] {
  return text.split(/\s+/).filter((w) => w.length > 0)
}

export function diffWords(left: string, right: string): DiffSegment[] {
  const a = split(left)
  const b = split(right)
  const rows = a.length + 1
  const cols = b.length + 1
  const lcs: number[][] = Array.from({ length: rows }, () =>
    new Array<number>(cols).fill(0))
  for (let i = a.length - 1; i >= 0; i--) {
    for (let j = b.length - 1; j >= 0; j--) {
      lcs[i][j] = a[i] === b[j]
        ? lcs[i + 1][j + 1] + 1
        : Math.max(lcs[i + 1][j], lcs[i][j + 1])
    }
  }

  const segments: DiffSegment[] = []
  const push = (kind: DiffSegment['kind'], word: string) => {
    const last = segments[segments.length - 1]
    if (last && last.kind === kind) {
      last.text += ` ${word}`
    } else {
      segments.push({ kind, text: word })
    }
  }

  let i = 0
  let j = 0
  while (i < a.length && j < b.length) {
    if (a[i] === b[j]) {
      push('same', a[i])
      i++
      j++
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      push('left', a[i])
      i++
    } else {
      push('right', b[j])
      j++
    }
  }
  while (i < a.length) push('left', a[i++])
  while (j < b.length) push('right', b[j++])
  return segments
}
