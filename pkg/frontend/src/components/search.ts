import { ApiClient, ApiError } from "../api";
import type { ResultPage, SearchMode } from "../api";
import { renderCaret, renderSnippet } from "../highlight";
import { showBanner, clearBanner } from "./banner";

const MODES: SearchMode[] = ["keyword", "semantic", "hybrid"];
const PAGE_SIZE = 10;

export class SearchView {
  readonly element: HTMLElement;
  private readonly input: HTMLInputElement;
  private readonly mode: HTMLSelectElement;
  private readonly results: HTMLElement;
  private readonly pager: HTMLElement;
  private readonly prev: HTMLButtonElement;
  private readonly next: HTMLButtonElement;
  private readonly status: HTMLElement;

  private page = 1;
  private lastPage: ResultPage | null = null;
  private controller: AbortController | null = null;

  constructor(private readonly api: ApiClient) {
    this.element = document.createElement("section");
    this.element.className = "view search-view";

    const form = document.createElement("form");
    form.className = "search-form";
    this.input = document.createElement("input");
    this.input.type = "search";
    this.input.placeholder = 'Query, e.g. cache AND NOT source:notes';
    this.input.setAttribute("aria-label", "search query");
    this.mode = document.createElement("select");
    this.mode.setAttribute("aria-label", "search mode");
    for (const m of MODES) {
      const opt = document.createElement("option");
      opt.value = m;
      opt.textContent = m;
      this.mode.appendChild(opt);
    }
    this.mode.value = "hybrid";
    const go = document.createElement("button");
    go.type = "submit";
    go.textContent = "Search";
    form.append(this.input, this.mode, go);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      this.page = 1;
      void this.run();
    });

    this.status = document.createElement("p");
    this.status.className = "search-status muted";

    this.results = document.createElement("div");
    this.results.className = "search-results";

    this.pager = document.createElement("nav");
    this.pager.className = "pager";
    this.prev = document.createElement("button");
    this.prev.type = "button";
    this.prev.textContent = "Prev";
    this.prev.addEventListener("click", () => {
      if (this.page > 1) {
        this.page -= 1;
        void this.run();
      }
    });
    this.next = document.createElement("button");
    this.next.type = "button";
    this.next.textContent = "Next";
    this.next.addEventListener("click", () => {
      this.page += 1;
      void this.run();
    });
    this.pager.append(this.prev, this.next);
    this.pager.hidden = true;

    this.element.append(form, this.status, this.results, this.pager);
  }

  /** Issue the current query; a newer call aborts the one before it. */
  private async run(): Promise<void> {
    const q = this.input.value.trim();
    if (!q) return;
    this.controller?.abort();
    this.controller = new AbortController();
    clearBanner(this.element);
    this.status.textContent = "Searching…";
    try {
      const page = await this.api.search(
        q,
        this.mode.value as SearchMode,
        this.page,
        PAGE_SIZE,
        this.controller.signal,
      );
      this.lastPage = page;
      this.renderPage(page);
    } catch (err) {
      if (err instanceof Error && err.name === "AbortError") return;
      this.status.textContent = "";
      this.renderError(q, err);
    }
  }

  private renderError(q: string, err: unknown): void {
    this.results.textContent = "";
    this.pager.hidden = true;
    if (err instanceof ApiError && err.position !== null) {
      this.results.appendChild(renderCaret(q, err.position, err.message));
      return;
    }
    const message = err instanceof ApiError ? err.message : "search failed";
    showBanner(this.element, message);
  }

  private renderPage(page: ResultPage): void {
    this.results.textContent = "";
    this.status.textContent = `${page.total_hits} hit${page.total_hits === 1 ? "" : "s"} (page ${page.page})`;

    if (page.hits.length === 0) {
      const empty = document.createElement("p");
      empty.className = "muted";
      empty.textContent = page.total_hits === 0 ? "No results." : "No results on this page.";
      this.results.appendChild(empty);
    }
    for (const hit of page.hits) {
      const card = document.createElement("article");
      card.className = "hit";
      const head = document.createElement("header");
      const path = document.createElement("span");
      path.className = "source-path";
      path.textContent = hit.source_path;
      const score = document.createElement("span");
      score.className = "score";
      score.textContent = hit.score.toFixed(4);
      head.append(path, score);
      const snippet = document.createElement("p");
      snippet.className = "snippet";
      snippet.appendChild(renderSnippet(hit.snippet));
      card.append(head, snippet);
      this.results.appendChild(card);
    }

    // prev stays enabled past the end so an overshot page can walk back
    this.pager.hidden = false;
    this.prev.disabled = page.page <= 1;
    this.next.disabled = page.page * page.page_size >= page.total_hits;
  }
}
