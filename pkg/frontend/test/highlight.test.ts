// @vitest-environment jsdom
import { describe, expect, it } from "vitest";
import { renderCaret, renderSnippet } from "../src/highlight";

function renderToHost(snippet: string): HTMLElement {
  const host = document.createElement("div");
  host.appendChild(renderSnippet(snippet));
  return host;
}

describe("renderSnippet", () => {
  it("wraps marked terms in em elements", () => {
    const host = renderToHost("plain **hit** tail");
    const ems = host.querySelectorAll("em.hit-term");
    expect(ems).toHaveLength(1);
    expect(ems[0]!.textContent).toBe("hit");
    expect(host.textContent).toBe("plain hit tail");
  });

  it("handles multiple and adjacent markers", () => {
    const host = renderToHost("**a** and **b**");
    const ems = [...host.querySelectorAll("em")].map((e) => e.textContent);
    expect(ems).toEqual(["a", "b"]);
  });

  it("leaves unmatched asterisks literal", () => {
    const host = renderToHost("2 ** 8 = 256");
    expect(host.querySelectorAll("em")).toHaveLength(0);
    expect(host.textContent).toBe("2 ** 8 = 256");
  });

  it("never interprets snippet content as markup", () => {
    const host = renderToHost('<img src=x onerror=alert(1)> **<b>bold</b>**');
    expect(host.querySelector("img")).toBeNull();
    expect(host.querySelector("b")).toBeNull();
    expect(host.querySelector("em")!.textContent).toBe("<b>bold</b>");
  });
});

describe("renderCaret", () => {
  it("places the caret under the error position", () => {
    const el = renderCaret('abc "def', 4, "unbalanced quote");
    const lines = el.textContent!.split("\n");
    expect(lines[0]).toBe('abc "def');
    expect(lines[1]).toBe('    ^ unbalanced quote');
  });

  it("clamps out-of-range positions to the query length", () => {
    const el = renderCaret("ab", 99, "oops");
    const lines = el.textContent!.split("\n");
    expect(lines[1]).toBe("  ^ oops");
  });
});
