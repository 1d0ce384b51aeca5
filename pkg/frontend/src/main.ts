import { ServiceClient, ServiceError } from "./api.js";
import { renderError, renderHistory, renderPath, renderTaxonomy } from "./render.js";
import { SteeringSession } from "./session.js";
import type { DocumentIn } from "./types.js";

const DEFAULT_DOC_TYPES = ["title", "keywords", "fields", "abstract"];

export function mountApp(root: HTMLElement, client: ServiceClient): SteeringSession {
  root.innerHTML = `
    <header>
      <h1>Proposal steering</h1>
      <div id="banner" class="banner"></div>
    </header>
    <main>
      <section class="panel">
        <h2>Documents</h2>
        <div id="documents"></div>
        <h2>Expert prefix</h2>
        <div class="prefix-row">
          <input id="prefix-input" placeholder="comma-separated codes, e.g. F,F06" />
          <button id="predict" type="button">Predict</button>
        </div>
        <div id="error" class="error"></div>
      </section>
      <section class="panel">
        <h2>Predicted path</h2>
        <div id="path"></div>
        <h2>History</h2>
        <div id="history"></div>
      </section>
      <section class="panel">
        <h2>Taxonomy</h2>
        <div id="taxonomy"></div>
      </section>
    </main>
  `;

  const el = (id: string) => root.querySelector<HTMLElement>(`#${id}`)!;
  const session = new SteeringSession(client);

  const docsBox = el("documents");
  for (const docType of DEFAULT_DOC_TYPES) {
    const row = document.createElement("div");
    row.className = "doc-row";
    const label = document.createElement("label");
    label.textContent = docType;
    const area = document.createElement("textarea");
    area.dataset.docType = docType;
    area.rows = docType === "abstract" ? 4 : 1;
    row.append(label, area);
    docsBox.append(row);
  }

  const collectDocuments = (): DocumentIn[] =>
    Array.from(docsBox.querySelectorAll<HTMLTextAreaElement>("textarea"))
      .map((area) => ({ type: area.dataset.docType!, text: area.value }))
      .filter((d) => d.text.trim() !== "");

  const showError = (message: string | null) => renderError(el("error"), message);

  const refresh = () => {
    if (session.latest) {
      renderPath(el("path"), session.latest, (level, code) => {
        void lock(level, code);
      });
    }
    renderHistory(el("history"), session.history, (index) => {
      session.revert(index);
    });
  };
  session.onChange(refresh);

  const submit = async () => {
    showError(null);
    const prefixText = (el("prefix-input") as HTMLInputElement).value.trim();
    const prefix = prefixText === "" ? [] : prefixText.split(",").map((s) => s.trim());
    session.setDocuments(collectDocuments());
    try {
      await session.submit(prefix);
    } catch (err) {
      showError(err instanceof ServiceError ? err.detail : String(err));
    }
  };

  const lock = async (level: number, code: string) => {
    showError(null);
    try {
      await session.lockAlternative(level, code);
    } catch (err) {
      showError(err instanceof ServiceError ? err.detail : String(err));
    }
  };

  el("predict").addEventListener("click", () => {
    void submit();
  });

  const loadTree = async () => {
    try {
      const tree = await session.loadTaxonomy();
      renderError(el("banner"), null);
      renderTaxonomy(el("taxonomy"), tree, (node) => {
        void lock(node.level, node.code);
      });
    } catch {
      el("banner").textContent = "service unreachable — ";
      const retry = document.createElement("button");
      retry.type = "button";
      retry.textContent = "retry";
      retry.addEventListener("click", () => {
        void loadTree();
      });
      el("banner").append(retry);
      el("banner").classList.add("visible");
    }
  };
  void loadTree();
  return session;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const base = new URLSearchParams(window.location.search).get("service") ?? "";
  mountApp(document.getElementById("app")!, new ServiceClient(base));
}
