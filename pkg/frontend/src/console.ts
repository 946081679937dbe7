import { ServiceClient } from "./api.js";
import { TaskFeed } from "./worker.js";
import type { Answer, TaskView } from "./types.js";

/**
 * The worker-facing view: an image grid plus yes/no buttons for set
 * queries, or one button per attribute value for point queries.
 *
 * Submit stays disabled until an answer is selected, and is disabled again
 * while a submission is in flight, so double submits cannot happen; the
 * (worker, task) pair is the server-side idempotency key on top of that.
 * Every POST originates from an explicit click on the submit button.
 */
export class WorkerConsole {
  readonly feed = new TaskFeed();
  currentTask: TaskView | null = null;
  banners: string[] = [];
  private selected: Answer | null = null;
  private pointChoices: Record<string, string> = {};
  private inFlight = false;

  constructor(
    private root: HTMLElement,
    private client: ServiceClient,
    private sessionId: string,
    readonly workerId: string,
  ) {
    this.renderIdle("loading tasks...");
  }

  async refresh(): Promise<void> {
    const pending = await this.client.pendingTasks(this.sessionId);
    if (this.currentTask) {
      // keep the current selection unless it vanished from the board
      const still = pending.find((t) => t.task_id === this.currentTask!.task_id);
      if (still) return;
    }
    const next = this.feed.nextTask(pending);
    this.currentTask = next;
    if (next) {
      this.renderTask(next);
    } else {
      this.renderIdle("none pending");
    }
  }

  /** Pin a specific pending task (scripted clients and tests use this). */
  async selectTask(taskId: string): Promise<void> {
    const pending = await this.client.pendingTasks(this.sessionId);
    const task = pending.find((t) => t.task_id === taskId);
    if (!task) throw new Error(`task ${taskId} is not pending`);
    this.currentTask = task;
    this.renderTask(task);
  }

  /** The answer a click on the yes/no (or value) buttons selects. */
  choose(answer: Answer): void {
    this.selected = answer;
    const submit = this.root.querySelector<HTMLButtonElement>("button.submit");
    if (submit) submit.disabled = false;
  }

  async submitSelected(): Promise<void> {
    if (!this.currentTask || this.selected === null || this.inFlight) return;
    const task = this.currentTask;
    this.inFlight = true;
    const button = this.root.querySelector<HTMLButtonElement>("button.submit");
    if (button) button.disabled = true;
    try {
      const outcome = await this.client.submit(task.task_id, this.workerId, this.selected);
      this.feed.markAnswered(task.task_id);
      if (outcome.kind === "accepted") {
        const given = task.required_assignments - (outcome.remaining ?? 0);
        this.banner(`recorded (${given} of ${task.required_assignments} assignments)`);
      } else if (outcome.kind === "canceled") {
        this.banner("task no longer needed");
      } else {
        this.banner(`submission rejected: ${outcome.reason}`);
      }
    } finally {
      this.inFlight = false;
    }
    this.currentTask = null;
    this.selected = null;
    this.pointChoices = {};
    await this.refresh();
  }

  lastBanner(): string | null {
    return this.banners.length ? this.banners[this.banners.length - 1] : null;
  }

  private banner(text: string): void {
    this.banners.push(text);
    const el = this.root.querySelector(".banner");
    if (el) el.textContent = text;
  }

  private renderIdle(message: string): void {
    this.root.innerHTML =
      `<div class="banner">${this.lastBanner() ?? ""}</div>` +
      `<p class="idle">${message}</p>`;
  }

  private renderTask(task: TaskView): void {
    const doc = this.root.ownerDocument;
    this.selected = null;
    this.pointChoices = {};
    this.root.innerHTML = "";

    const banner = doc.createElement("div");
    banner.className = "banner";
    banner.textContent = this.lastBanner() ?? "";
    this.root.appendChild(banner);

    const question = doc.createElement("h2");
    question.className = "question";
    question.textContent = task.question_text;
    this.root.appendChild(question);

    const grid = doc.createElement("div");
    grid.className = "grid"; // scrolls beyond 25 thumbnails via CSS
    for (const item of task.items) {
      const cell = doc.createElement("figure");
      cell.className = "thumb";
      const img = doc.createElement("img");
      img.src = item.image_url;
      img.alt = item.id;
      img.onerror = () => cell.classList.add("placeholder");
      const caption = doc.createElement("figcaption");
      caption.textContent = item.id;
      cell.appendChild(img);
      cell.appendChild(caption);
      grid.appendChild(cell);
    }
    this.root.appendChild(grid);

    const controls = doc.createElement("div");
    controls.className = "controls";
    if (task.kind === "set") {
      for (const answer of ["yes", "no"] as const) {
        const button = doc.createElement("button");
        button.className = `answer answer-${answer}`;
        button.dataset.answer = answer;
        button.textContent = answer;
        button.addEventListener("click", () => {
          controls.querySelectorAll("button.answer").forEach((b) =>
            b.classList.remove("chosen"),
          );
          button.classList.add("chosen");
          this.choose(answer);
        });
        controls.appendChild(button);
      }
    } else {
      for (const attr of task.attributes ?? []) {
        const row = doc.createElement("div");
        row.className = "attribute-row";
        const label = doc.createElement("span");
        label.textContent = attr;
        row.appendChild(label);
        for (const value of task.options?.[attr] ?? []) {
          const button = doc.createElement("button");
          button.className = "answer value";
          button.dataset.attribute = attr;
          button.dataset.value = value;
          button.textContent = value;
          button.addEventListener("click", () => {
            row.querySelectorAll("button.value").forEach((b) =>
              b.classList.remove("chosen"),
            );
            button.classList.add("chosen");
            this.pointChoices[attr] = value;
            if ((task.attributes ?? []).every((a) => this.pointChoices[a])) {
              this.choose({ ...this.pointChoices });
            }
          });
          row.appendChild(button);
        }
        controls.appendChild(row);
      }
    }
    const submit = doc.createElement("button");
    submit.className = "submit";
    submit.textContent = "submit answer";
    submit.disabled = true;
    submit.addEventListener("click", () => void this.submitSelected());
    controls.appendChild(submit);
    this.root.appendChild(controls);
  }
}
