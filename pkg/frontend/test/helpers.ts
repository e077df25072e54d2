// Shared test plumbing: a fetch recorder for the no-external-requests
// assertion, and small DOM conveniences for driving views.

export interface FetchRecorder {
  urls: string[];
  restore(): void;
}

/** Wrap global fetch so every absolute request URL is recorded. */
export function recordFetch(): FetchRecorder {
  const original = globalThis.fetch;
  const urls: string[] = [];
  globalThis.fetch = ((input: RequestInfo | URL, init?: RequestInit) => {
    urls.push(typeof input === "string" ? input : input instanceof URL ? input.href : input.url);
    return original(input, init);
  }) as typeof fetch;
  return {
    urls,
    restore() {
      globalThis.fetch = original;
    },
  };
}

/** Let pending promises and any short timers settle. */
export async function settle(ms = 0): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, ms));
  await Promise.resolve();
}

/** Wait until `cond` returns true, polling; throws after `timeoutMs`. */
export async function waitFor(cond: () => boolean, timeoutMs = 3000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!cond()) {
    if (Date.now() > deadline) throw new Error("condition not met in time");
    await settle(10);
  }
}

export function type(input: HTMLInputElement, value: string): void {
  input.value = value;
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

export function submit(form: HTMLFormElement): void {
  form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}
