import { ApiClient, ApiError } from "../api";
import type { IngestReport } from "../api";
import { showBanner, clearBanner } from "./banner";

function reportCard(report: IngestReport): HTMLElement {
  const card = document.createElement("div");
  card.className = "report-card";
  const rows: [string, string][] = [
    ["files seen", String(report.files_seen)],
    ["ingested", String(report.files_ingested)],
    ["skipped (unchanged)", String(report.files_skipped_unchanged)],
    ["chunks added", String(report.chunks_added)],
  ];
  const dl = document.createElement("dl");
  for (const [label, value] of rows) {
    const dt = document.createElement("dt");
    dt.textContent = label;
    const dd = document.createElement("dd");
    dd.textContent = value;
    dl.append(dt, dd);
  }
  card.appendChild(dl);
  if (report.errors.length > 0) {
    const errs = document.createElement("ul");
    errs.className = "ingest-errors";
    for (const e of report.errors) {
      const li = document.createElement("li");
      li.textContent = e;
      errs.appendChild(li);
    }
    card.appendChild(errs);
  }
  return card;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class AdminView {
  readonly element: HTMLElement;
  private readonly path: HTMLInputElement;
  private readonly submit: HTMLButtonElement;
  private readonly busyNote: HTMLElement;
  private readonly report: HTMLElement;
  private readonly configPanel: HTMLElement;

  constructor(
    private readonly api: ApiClient,
    private readonly retryDelayMs = 2000,
  ) {
    this.element = document.createElement("section");
    this.element.className = "view admin-view";

    const heading = document.createElement("h2");
    heading.textContent = "Ingest";

    const form = document.createElement("form");
    form.className = "ingest-form";
    this.path = document.createElement("input");
    this.path.type = "text";
    this.path.placeholder = "Folder path on the server";
    this.path.setAttribute("aria-label", "folder path");
    this.submit = document.createElement("button");
    this.submit.type = "submit";
    this.submit.textContent = "Ingest";
    form.append(this.path, this.submit);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.ingest();
    });

    this.busyNote = document.createElement("p");
    this.busyNote.className = "busy-note";
    this.busyNote.textContent = "ingestion in progress";
    this.busyNote.hidden = true;

    this.report = document.createElement("div");
    this.report.className = "ingest-report";

    const configHeading = document.createElement("h2");
    configHeading.textContent = "Configuration";
    this.configPanel = document.createElement("pre");
    this.configPanel.className = "config-panel";

    this.element.append(heading, form, this.busyNote, this.report, configHeading, this.configPanel);
    void this.loadConfig();
  }

  /**
   * Run one ingest. While the store is 409-locked by another writer the
   * form stays disabled with the busy note showing, and the request is
   * retried until the lock clears (re-ingesting unchanged files is cheap).
   */
  private async ingest(): Promise<void> {
    const path = this.path.value.trim();
    if (!path || this.submit.disabled) return;
    this.setBusy(true);
    clearBanner(this.element);
    this.report.textContent = "";
    try {
      for (;;) {
        try {
          const report = await this.api.ingest(path);
          this.report.appendChild(reportCard(report));
          return;
        } catch (err) {
          if (err instanceof ApiError && err.status === 409) {
            await sleep(this.retryDelayMs);
            continue;
          }
          const message = err instanceof ApiError ? err.message : "ingest failed";
          showBanner(this.element, message);
          return;
        }
      }
    } finally {
      this.setBusy(false);
    }
  }

  private setBusy(busy: boolean): void {
    this.submit.disabled = busy;
    this.path.disabled = busy;
    this.busyNote.hidden = !busy;
  }

  private async loadConfig(): Promise<void> {
    try {
      const config = await this.api.config();
      this.configPanel.textContent = JSON.stringify(config, null, 2);
    } catch {
      this.configPanel.textContent = "configuration unavailable";
    }
  }
}
