import { ServiceClient } from "./api.js";
import type { SessionSnapshot } from "./types.js";

/** Read-only requester dashboard: progress, live count, final verdict. */
export class RequesterView {
  snapshot: SessionSnapshot | null = null;

  constructor(
    private root: HTMLElement,
    private client: ServiceClient,
    private sessionId: string,
  ) {}

  async refresh(): Promise<SessionSnapshot> {
    const snap = await this.client.session(this.sessionId);
    this.snapshot = snap;
    this.render(snap);
    return snap;
  }

  private render(snap: SessionSnapshot): void {
    const doc = this.root.ownerDocument;
    this.root.innerHTML = "";
    const title = doc.createElement("h3");
    title.textContent = `session ${snap.session_id} (${snap.algorithm})`;
    this.root.appendChild(title);

    const total = Math.max(1, snap.tasks.published);
    const progress = doc.createElement("div");
    progress.className = "progress";
    const bar = doc.createElement("div");
    bar.className = "bar";
    bar.style.width = `${Math.round((100 * snap.tasks.resolved) / total)}%`;
    progress.appendChild(bar);
    this.root.appendChild(progress);

    const stats = doc.createElement("p");
    stats.className = "stats";
    stats.textContent =
      `${snap.tasks.resolved} resolved / ${snap.tasks.published} issued, ` +
      `${snap.tasks.canceled} canceled` +
      (snap.cnt !== null ? `, count so far ${snap.cnt}` : "");
    this.root.appendChild(stats);

    const verdict = doc.createElement("p");
    verdict.className = "verdict";
    if (snap.status === "done" && snap.verdict) {
      const covered = snap.verdict["covered"];
      const cnt = snap.verdict["cnt"];
      verdict.textContent =
        covered === undefined
          ? "finished"
          : `verdict: ${covered ? "covered" : "uncovered"} (cnt ${cnt})`;
      verdict.classList.add(covered ? "covered" : "uncovered");
    } else if (snap.status === "failed") {
      verdict.textContent = `failed: ${snap.error}`;
    } else {
      verdict.textContent = "running...";
    }
    this.root.appendChild(verdict);
  }
}
