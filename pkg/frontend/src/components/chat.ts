import { ApiClient, ApiError } from "../api";
import type { Source } from "../api";
import {
  ChatSession,
  ChatTurn,
  appendTurn,
  clearSession,
  loadSession,
  loadSettings,
  saveSession,
} from "../state";
import { showBanner, clearBanner } from "./banner";

function sourceList(sources: Source[]): HTMLElement {
  const details = document.createElement("details");
  details.className = "sources";
  const summary = document.createElement("summary");
  summary.textContent = `${sources.length} source${sources.length === 1 ? "" : "s"}`;
  details.appendChild(summary);
  const list = document.createElement("ol");
  for (const s of sources) {
    const item = document.createElement("li");
    const path = document.createElement("span");
    path.className = "source-path";
    path.textContent = s.source_path;
    const snippet = document.createElement("p");
    snippet.className = "source-snippet";
    snippet.textContent = s.snippet;
    item.append(path, snippet);
    list.appendChild(item);
  }
  details.appendChild(list);
  return details;
}

export class ChatView {
  readonly element: HTMLElement;
  private session: ChatSession;
  private readonly history: HTMLElement;
  private readonly input: HTMLInputElement;
  private readonly send: HTMLButtonElement;
  private inFlight = false;

  constructor(private readonly api: ApiClient) {
    this.session = loadSession();

    this.element = document.createElement("section");
    this.element.className = "view chat-view";

    this.history = document.createElement("div");
    this.history.className = "chat-history";

    const form = document.createElement("form");
    form.className = "chat-form";
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.placeholder = "Ask about your documents";
    this.input.setAttribute("aria-label", "question");
    this.send = document.createElement("button");
    this.send.type = "submit";
    this.send.textContent = "Send";
    form.append(this.input, this.send);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submit();
    });

    const clear = document.createElement("button");
    clear.type = "button";
    clear.className = "chat-clear";
    clear.textContent = "New session";
    clear.addEventListener("click", () => {
      this.session = clearSession();
      this.renderHistory();
    });

    this.element.append(this.history, form, clear);
    this.renderHistory();
  }

  private async submit(): Promise<void> {
    const question = this.input.value.trim();
    if (!question || this.inFlight) return;
    this.input.value = "";
    const turn: ChatTurn = { role: "user", text: question, timestamp: Date.now() };
    appendTurn(this.session, turn);
    this.renderHistory();
    await this.ask(turn);
  }

  // One ask in flight at a time; the input stays disabled until it settles.
  private async ask(userTurn: ChatTurn): Promise<void> {
    this.inFlight = true;
    this.setBusy(true);
    clearBanner(this.element);
    try {
      const answer = await this.api.ask(userTurn.text, loadSettings().k);
      if (userTurn.failed) {
        userTurn.failed = false;
        saveSession(this.session);
      }
      appendTurn(this.session, {
        role: "assistant",
        text: answer.answer_text,
        sources: answer.sources,
        timestamp: Date.now(),
      });
    } catch (err) {
      userTurn.failed = true;
      saveSession(this.session);
      const message = err instanceof ApiError ? err.message : "request failed";
      showBanner(this.element, message);
    } finally {
      this.inFlight = false;
      this.setBusy(false);
      this.renderHistory();
    }
  }

  private setBusy(busy: boolean): void {
    this.input.disabled = busy;
    this.send.disabled = busy;
  }

  private renderHistory(): void {
    this.history.textContent = "";
    if (this.session.turns.length === 0) {
      const empty = document.createElement("p");
      empty.className = "muted";
      empty.textContent = "No questions yet.";
      this.history.appendChild(empty);
      return;
    }
    for (const turn of this.session.turns) {
      this.history.appendChild(this.renderTurn(turn));
    }
    this.history.scrollTop = this.history.scrollHeight;
  }

  private renderTurn(turn: ChatTurn): HTMLElement {
    const article = document.createElement("article");
    article.className = `turn ${turn.role}${turn.failed ? " failed" : ""}`;
    const who = document.createElement("strong");
    who.textContent = turn.role;
    const body = document.createElement("p");
    body.textContent = turn.text;
    article.append(who, body);
    if (turn.sources && turn.sources.length > 0) {
      article.appendChild(sourceList(turn.sources));
    }
    if (turn.failed) {
      const retry = document.createElement("button");
      retry.type = "button";
      retry.className = "retry";
      retry.textContent = "Retry";
      retry.addEventListener("click", () => {
        if (!this.inFlight) void this.ask(turn);
      });
      article.appendChild(retry);
    }
    return article;
  }
}
