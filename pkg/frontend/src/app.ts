import { ApiClient } from "./api";
import { ChatView } from "./components/chat";
import { SearchView } from "./components/search";
import { AdminView } from "./components/admin";
import { loadSettings, saveSettings } from "./state";

const SERVICE_URL_KEY = "docintel.service_url";
const DEFAULT_SERVICE_URL = "http://127.0.0.1:8080";

type TabName = "chat" | "search" | "admin";

function serviceUrl(): string {
  try {
    return localStorage.getItem(SERVICE_URL_KEY) ?? DEFAULT_SERVICE_URL;
  } catch {
    return DEFAULT_SERVICE_URL;
  }
}

export function mountApp(root: HTMLElement): void {
  const api = new ApiClient(serviceUrl());

  const header = document.createElement("header");
  header.className = "app-header";
  const title = document.createElement("h1");
  title.textContent = "Document Intelligence";
  const version = document.createElement("span");
  version.className = "muted version";
  header.append(title, version);
  api
    .health()
    .then((h) => {
      version.textContent = `service ${h.version}`;
    })
    .catch(() => {
      version.textContent = "service unreachable";
    });

  const nav = document.createElement("nav");
  nav.className = "tabs";

  const views: Record<TabName, { element: HTMLElement }> = {
    chat: new ChatView(api),
    search: new SearchView(api),
    admin: new AdminView(api),
  };

  const buttons = new Map<TabName, HTMLButtonElement>();
  const show = (name: TabName) => {
    for (const [tab, view] of Object.entries(views) as [TabName, { element: HTMLElement }][]) {
      view.element.hidden = tab !== name;
      buttons.get(tab)?.classList.toggle("active", tab === name);
    }
    location.hash = `#/${name}`;
  };
  for (const name of ["chat", "search", "admin"] as TabName[]) {
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = name;
    button.addEventListener("click", () => show(name));
    buttons.set(name, button);
    nav.appendChild(button);
  }

  const settings = document.createElement("div");
  settings.className = "settings";
  const kLabel = document.createElement("label");
  kLabel.textContent = "k ";
  const kInput = document.createElement("input");
  kInput.type = "number";
  kInput.min = "1";
  kInput.max = "20";
  kInput.value = String(loadSettings().k);
  kInput.addEventListener("change", () => {
    const k = Math.max(1, Math.min(20, Number(kInput.value) || 5));
    kInput.value = String(k);
    saveSettings({ k });
  });
  kLabel.appendChild(kInput);
  const urlLabel = document.createElement("label");
  urlLabel.textContent = "service ";
  const urlInput = document.createElement("input");
  urlInput.type = "text";
  urlInput.value = serviceUrl();
  urlInput.addEventListener("change", () => {
    try {
      localStorage.setItem(SERVICE_URL_KEY, urlInput.value.trim());
    } catch {
      // ignore
    }
    location.reload();
  });
  urlLabel.appendChild(urlInput);
  settings.append(kLabel, urlLabel);

  root.append(header, nav, settings, views.chat.element, views.search.element, views.admin.element);

  const fromHash = location.hash.replace("#/", "") as TabName;
  show(fromHash in views ? fromHash : "chat");
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mountApp(document.getElementById("app") as HTMLElement);
}
