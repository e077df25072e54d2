import type { Source } from "./api";

export type Role = "user" | "assistant";

export interface ChatTurn {
  role: Role;
  text: string;
  sources?: Source[];
  timestamp: number;
  // present on a user turn whose ask failed; enables retry
  failed?: boolean;
}

export interface ChatSession {
  session_id: string;
  turns: ChatTurn[];
}

const SESSION_KEY = "docintel.chat.session";
const SETTINGS_KEY = "docintel.settings";

function randomId(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) {
    return crypto.randomUUID();
  }
  return Math.random().toString(36).slice(2) + Date.now().toString(36);
}

/** Load the per-profile session, creating a fresh one when absent or corrupt. */
export function loadSession(): ChatSession {
  try {
    const raw = localStorage.getItem(SESSION_KEY);
    if (raw) {
      const parsed = JSON.parse(raw) as ChatSession;
      if (parsed && typeof parsed.session_id === "string" && Array.isArray(parsed.turns)) {
        return parsed;
      }
    }
  } catch {
    // fall through to a new session
  }
  return { session_id: randomId(), turns: [] };
}

export function saveSession(session: ChatSession): void {
  try {
    localStorage.setItem(SESSION_KEY, JSON.stringify(session));
  } catch {
    // storage may be unavailable; chat still works for the page lifetime
  }
}

/** Turns are append-only: mutation goes through this helper alone. */
export function appendTurn(session: ChatSession, turn: ChatTurn): void {
  session.turns.push(turn);
  saveSession(session);
}

export function clearSession(): ChatSession {
  const fresh: ChatSession = { session_id: randomId(), turns: [] };
  saveSession(fresh);
  return fresh;
}

export interface Settings {
  k: number;
}

export function loadSettings(): Settings {
  try {
    const raw = localStorage.getItem(SETTINGS_KEY);
    if (raw) {
      const parsed = JSON.parse(raw) as Partial<Settings>;
      if (typeof parsed.k === "number" && parsed.k >= 1) return { k: Math.floor(parsed.k) };
    }
  } catch {
    // ignore and use defaults
  }
  return { k: 5 };
}

export function saveSettings(settings: Settings): void {
  try {
    localStorage.setItem(SETTINGS_KEY, JSON.stringify(settings));
  } catch {
    // ignore
  }
}
