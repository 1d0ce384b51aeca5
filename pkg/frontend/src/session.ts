import type { ServiceClient } from "./api.js";
import type { DocumentIn, PredictResponse, TaxonomyNode, TaxonomyResponse } from "./types.js";
import { STOP_CODE } from "./types.js";

export interface HistoryEntry {
  action: string;
  prefix: string[];
  documents: DocumentIn[];
  response: PredictResponse;
}

export type SessionListener = (session: SteeringSession) => void;

/** Client-side session state: documents, the locked expert prefix, the
 * latest service response, and an append-only history of lock actions.
 *
 * The session never invents path data; everything displayed comes from
 * the last service response. One request is in flight at a time; newer
 * submissions win (stale responses are dropped).
 */
export class SteeringSession {
  taxonomy: TaxonomyResponse | null = null;
  documents: DocumentIn[] = [];
  lockedPrefix: string[] = [];
  latest: PredictResponse | null = null;
  readonly history: HistoryEntry[] = [];

  private byCode = new Map<string, TaxonomyNode>();
  private requestCounter = 0;
  private listeners: SessionListener[] = [];

  constructor(private readonly client: ServiceClient) {}

  onChange(listener: SessionListener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const l of this.listeners) {
      l(this);
    }
  }

  async loadTaxonomy(): Promise<TaxonomyResponse> {
    const tree = await this.client.fetchTaxonomy();
    this.taxonomy = tree;
    this.byCode = new Map(tree.nodes.map((n) => [n.code, n]));
    this.emit();
    return tree;
  }

  node(code: string): TaxonomyNode | undefined {
    return this.byCode.get(code);
  }

  /** Levels 1..k must chain parent -> child from the root; rejects
   * unknown codes and gaps before anything reaches the service. */
  validatePrefix(prefix: string[]): string | null {
    if (!this.taxonomy) {
      return "taxonomy not loaded yet";
    }
    let parent: string | null = null;
    for (let i = 0; i < prefix.length; i++) {
      const node = this.byCode.get(prefix[i]);
      if (!node) {
        return `unknown label code '${prefix[i]}'`;
      }
      if (node.level !== i + 1) {
        return `'${prefix[i]}' is a level-${node.level} label but sits at position ${i + 1}`;
      }
      if (node.parent !== parent) {
        return `'${prefix[i]}' is not a child of '${parent ?? "root"}'`;
      }
      parent = node.code;
    }
    return null;
  }

  setDocuments(documents: DocumentIn[]): void {
    this.documents = documents.filter((d) => d.type.trim() !== "");
    this.emit();
  }

  /** Submit the current documents with a locked prefix. */
  async submit(prefix: string[], action = "predict"): Promise<PredictResponse> {
    const problem = this.validatePrefix(prefix);
    if (problem) {
      throw new Error(problem);
    }
    if (!this.documents.some((d) => d.text.trim() !== "")) {
      throw new Error("enter at least one non-empty document");
    }
    const token = ++this.requestCounter;
    const response = await this.client.predict({
      documents: this.documents,
      expert_prefix: prefix,
      mode: "greedy",
      top_k: 5,
    });
    if (token !== this.requestCounter) {
      // a newer submission already went out; keep its rendering
      return response;
    }
    this.lockedPrefix = [...prefix];
    this.latest = response;
    this.history.push({
      action,
      prefix: [...prefix],
      documents: this.documents.map((d) => ({ ...d })),
      response,
    });
    this.emit();
    return response;
  }

  /** Labels currently displayed: the locked prefix plus decoded levels. */
  displayedLabels(): string[] {
    return this.latest ? [...this.latest.labels] : [];
  }

  /** Lock `code` at `level`: keep the displayed labels above it, replace
   * the rest, and re-decode. Fails on gaps (nothing displayed at
   * level-1) and on codes that break the parent chain. */
  async lockAlternative(level: number, code: string): Promise<PredictResponse> {
    if (!this.latest) {
      throw new Error("nothing predicted yet");
    }
    if (code === STOP_CODE) {
      throw new Error("the stop marker cannot be locked as a label");
    }
    const shown = this.displayedLabels();
    if (shown.length < level - 1) {
      throw new Error(
        `cannot lock level ${level}: levels ${shown.length + 1}..${level - 1} are undecided`,
      );
    }
    const node = this.byCode.get(code);
    if (!node) {
      throw new Error(`unknown label code '${code}'`);
    }
    if (node.level !== level) {
      throw new Error(`'${code}' is a level-${node.level} label, not level ${level}`);
    }
    const prefix = [...shown.slice(0, level - 1), code];
    return this.submit(prefix, `lock L${level}=${code}`);
  }

  /** Restore a history snapshot exactly as rendered back then; the
   * revert itself is appended so history stays append-only. */
  revert(index: number): void {
    const entry = this.history[index];
    if (!entry) {
      throw new Error(`no history entry #${index}`);
    }
    this.documents = entry.documents.map((d) => ({ ...d }));
    this.lockedPrefix = [...entry.prefix];
    this.latest = entry.response;
    this.history.push({
      action: `revert to #${index + 1}`,
      prefix: [...entry.prefix],
      documents: entry.documents.map((d) => ({ ...d })),
      response: entry.response,
    });
    this.emit();
  }
}
