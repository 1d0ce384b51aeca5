import type { HistoryEntry } from "./session.js";
import type { PredictResponse, TaxonomyNode, TaxonomyResponse } from "./types.js";
import { STOP_CODE } from "./types.js";

/** Pure DOM builders: everything shown is a direct transcription of the
 * last service response (no client-side probability math). */

export function renderTaxonomy(
  container: HTMLElement,
  tree: TaxonomyResponse,
  onPick?: (node: TaxonomyNode) => void,
): void {
  container.textContent = "";
  const byParent = new Map<string | null, TaxonomyNode[]>();
  for (const node of tree.nodes) {
    const list = byParent.get(node.parent) ?? [];
    list.push(node);
    byParent.set(node.parent, list);
  }

  const build = (parent: string | null): HTMLElement | null => {
    const children = byParent.get(parent);
    if (!children || children.length === 0) {
      return null;
    }
    const ul = document.createElement("ul");
    ul.className = "tax-level";
    for (const node of children) {
      const li = document.createElement("li");
      const sub = build(node.code);
      if (sub) {
        const details = document.createElement("details");
        const summary = document.createElement("summary");
        summary.append(nodeChip(node, onPick));
        details.append(summary, sub);
        li.append(details);
      } else {
        li.append(nodeChip(node, onPick));
      }
      ul.append(li);
    }
    return ul;
  };

  const root = build(null);
  if (root) {
    container.append(root);
  }
}

function nodeChip(node: TaxonomyNode, onPick?: (node: TaxonomyNode) => void): HTMLElement {
  const chip = document.createElement("button");
  chip.type = "button";
  chip.className = "tax-node";
  chip.dataset.code = node.code;
  chip.dataset.level = String(node.level);
  chip.textContent = node.code;
  if (onPick) {
    chip.addEventListener("click", () => onPick(node));
  }
  return chip;
}

export function renderPath(
  container: HTMLElement,
  response: PredictResponse,
  onLock?: (level: number, code: string) => void,
): void {
  container.textContent = "";

  const summary = document.createElement("div");
  summary.className = "path-summary" + (response.valid_path ? "" : " invalid");
  const labels = response.labels.length ? response.labels.join(" > ") : "(stopped at the root)";
  summary.textContent = `${labels}  —  score ${response.score.toFixed(4)}`;
  if (!response.valid_path) {
    summary.textContent += "  [not a valid taxonomy path]";
  }
  container.append(summary);

  // locked prefix levels come back without distributions; show them first
  for (let i = 0; i < response.prefix.length; i++) {
    const row = document.createElement("div");
    row.className = "level-row locked";
    row.dataset.level = String(i + 1);
    row.dataset.code = response.prefix[i];
    row.textContent = `level ${i + 1}: ${response.prefix[i]} (locked)`;
    container.append(row);
  }

  for (const step of response.path) {
    const row = document.createElement("div");
    row.className = "level-row";
    row.dataset.level = String(step.level);
    row.dataset.code = step.code;

    const head = document.createElement("div");
    head.className = "level-head";
    head.textContent = `level ${step.level}: ${step.code}`;
    row.append(head);

    const bar = document.createElement("div");
    bar.className = "prob-bar";
    const fill = document.createElement("div");
    fill.className = "prob-fill";
    fill.style.width = `${Math.round(step.prob * 100)}%`;
    fill.title = step.prob.toFixed(4);
    bar.append(fill);
    const value = document.createElement("span");
    value.className = "prob-value";
    value.textContent = step.prob.toFixed(3);
    row.append(bar, value);

    const alts = document.createElement("div");
    alts.className = "alternatives";
    for (const alt of step.alternatives) {
      const chip = document.createElement("button");
      chip.type = "button";
      chip.className = "alt-chip" + (alt.code === step.code ? " chosen" : "");
      chip.dataset.level = String(step.level);
      chip.dataset.code = alt.code;
      chip.textContent = `${alt.code} ${alt.prob.toFixed(3)}`;
      if (onLock && alt.code !== STOP_CODE) {
        chip.addEventListener("click", () => onLock(step.level, alt.code));
      } else {
        chip.disabled = alt.code === STOP_CODE;
      }
      alts.append(chip);
    }
    row.append(alts);
    container.append(row);
  }
}

export function renderHistory(
  container: HTMLElement,
  entries: readonly HistoryEntry[],
  onRevert?: (index: number) => void,
): void {
  container.textContent = "";
  const ol = document.createElement("ol");
  ol.className = "history";
  entries.forEach((entry, index) => {
    const li = document.createElement("li");
    const button = document.createElement("button");
    button.type = "button";
    button.className = "history-entry";
    button.dataset.index = String(index);
    const path = entry.response.labels.join(" > ") || "(root)";
    button.textContent = `${entry.action} -> ${path}`;
    if (onRevert) {
      button.addEventListener("click", () => onRevert(index));
    }
    li.append(button);
    ol.append(li);
  });
  container.append(ol);
}

export function renderError(container: HTMLElement, message: string | null): void {
  container.textContent = message ?? "";
  container.classList.toggle("visible", message !== null);
}
