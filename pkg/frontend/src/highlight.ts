/**
 * Render a snippet whose matched terms are wrapped in **double asterisks**
 * into DOM nodes, emphasizing each match. Text nodes only, so snippet
 * content can never inject markup.
 */
export function renderSnippet(snippet: string): DocumentFragment {
  const frag = document.createDocumentFragment();
  const marker = /\*\*([^*]+)\*\*/g;
  let last = 0;
  let m: RegExpExecArray | null;
  while ((m = marker.exec(snippet)) !== null) {
    if (m.index > last) {
      frag.appendChild(document.createTextNode(snippet.slice(last, m.index)));
    }
    const em = document.createElement("em");
    em.className = "hit-term";
    em.textContent = m[1] ?? "";
    frag.appendChild(em);
    last = m.index + m[0].length;
  }
  // unmatched tail, including any stray asterisks, stays literal
  if (last < snippet.length) {
    frag.appendChild(document.createTextNode(snippet.slice(last)));
  }
  return frag;
}

/**
 * Two-line caret display for a query parse error: the query itself, then
 * a caret under the offending 0-based character position.
 */
export function renderCaret(query: string, position: number, message: string): HTMLElement {
  const pre = document.createElement("pre");
  pre.className = "parse-error";
  const pos = Math.max(0, Math.min(position, query.length));
  pre.textContent = `${query}\n${" ".repeat(pos)}^ ${message}`;
  return pre;
}
