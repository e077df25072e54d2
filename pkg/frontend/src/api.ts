// Wire types mirror the service's JSON bodies exactly (snake_case kept).

export interface Hit {
  chunk_id: string;
  score: number;
  snippet: string;
  source_path: string;
}

export interface ResultPage {
  hits: Hit[];
  total_hits: number;
  page: number;
  page_size: number;
}

export interface Source {
  chunk_id: string;
  source_path: string;
  snippet: string;
  score: number;
}

export interface Answer {
  question: string;
  answer_text: string;
  sources: Source[];
  prompt_used: string;
}

export interface IngestReport {
  files_seen: number;
  files_ingested: number;
  files_skipped_unchanged: number;
  chunks_added: number;
  errors: string[];
}

export interface Health {
  status: string;
  version: string;
}

export type SearchMode = "keyword" | "semantic" | "hybrid";

export interface ApiErrorBody {
  code: string;
  message: string;
  detail?: unknown;
}

/** Non-2xx response, carrying the service's structured error body. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
    public readonly detail?: unknown,
  ) {
    super(message);
    this.name = "ApiError";
  }

  /** 0-based character offset for parse errors, when the service sent one. */
  get position(): number | null {
    if (this.code !== "parse_error") return null;
    const d = this.detail as { position?: unknown } | undefined;
    return typeof d?.position === "number" ? d.position : null;
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let resp: Response;
  try {
    resp = await fetch(url, init);
  } catch (err) {
    // node and browsers disagree on the abort error's class; the name is stable
    if (err instanceof Error && err.name === "AbortError") throw err;
    throw new ApiError(0, "unreachable", "service unreachable");
  }
  const body = await resp.json().catch(() => null);
  if (!resp.ok) {
    const e = (body ?? {}) as Partial<ApiErrorBody>;
    throw new ApiError(
      resp.status,
      e.code ?? "http_error",
      e.message ?? `HTTP ${resp.status}`,
      e.detail,
    );
  }
  return body as T;
}

export class ApiClient {
  constructor(private readonly baseUrl: string) {}

  health(): Promise<Health> {
    return request(`${this.baseUrl}/health`);
  }

  config(): Promise<Record<string, unknown>> {
    return request(`${this.baseUrl}/config`);
  }

  search(
    q: string,
    mode: SearchMode,
    page: number,
    pageSize: number,
    signal?: AbortSignal,
  ): Promise<ResultPage> {
    const params = new URLSearchParams({
      q,
      mode,
      page: String(page),
      page_size: String(pageSize),
    });
    return request(`${this.baseUrl}/search?${params}`, { signal });
  }

  ask(question: string, k: number): Promise<Answer> {
    return request(`${this.baseUrl}/ask`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ question, k }),
    });
  }

  ingest(path: string): Promise<IngestReport> {
    return request(`${this.baseUrl}/ingest`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ path }),
    });
  }
}
