// @vitest-environment jsdom
//
// End-to-end: spawns the real task service and completes the 16-image
// session through the console's own client layer and DOM, with a second
// worker exercising the sibling-cancellation banner.
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { ServiceClient } from "../src/api.js";
import { WorkerConsole } from "../src/console.js";
import { RequesterView } from "../src/requester.js";

const TRIANGLES = new Set(["i04", "i07", "i12", "i13", "i15"]);

function fig5Manifest() {
  const triangleAt = [4, 7, 12, 13, 15];
  const items = Array.from({ length: 16 }, (_, i) => ({
    id: `i${String(i).padStart(2, "0")}`,
    truth: { shape: triangleAt.includes(i) ? "triangle" : "square" },
  }));
  return {
    schema: { attributes: [{ name: "shape", values: ["square", "triangle"] }] },
    items,
  };
}

let service: ChildProcess;
let base: string;

beforeAll(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), "crowdcover-e2e-"));
  service = spawn(
    "python3",
    ["-m", "crowdcover.cli", "serve", "--port", "0", "--data-dir", dataDir],
    { cwd: join(__dirname, "..", ".."), stdio: ["ignore", "pipe", "inherit"] },
  );
  base = await new Promise<string>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("service did not start")), 15000);
    service.stdout!.on("data", (chunk: Buffer) => {
      const match = chunk.toString().match(/listening on (http:\/\/[\d.:]+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]);
      }
    });
  });
}, 20000);

afterAll(() => {
  service?.kill();
});

function mount(id: string): HTMLElement {
  const el = document.createElement("div");
  el.id = id;
  document.body.appendChild(el);
  return el;
}

async function waitFor(check: () => boolean, what: string, ms = 5000): Promise<void> {
  const deadline = Date.now() + ms;
  while (!check()) {
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}

function truthfulAnswer(konsole: WorkerConsole): "yes" | "no" {
  const ids = konsole.currentTask!.items.map((item) => item.id);
  const hasTriangle = ids.some((id) => TRIANGLES.has(id));
  return hasTriangle ? "yes" : "no";
}

async function clickAnswerAndSubmit(
  root: HTMLElement,
  konsole: WorkerConsole,
  answer: "yes" | "no",
): Promise<void> {
  const banners = konsole.banners.length;
  const button = root.querySelector<HTMLButtonElement>(
    `button.answer[data-answer="${answer}"]`,
  );
  expect(button, "answer button rendered").toBeTruthy();
  button!.click();
  const submit = root.querySelector<HTMLButtonElement>("button.submit")!;
  expect(submit.disabled).toBe(false);
  submit.click();
  await waitFor(() => konsole.banners.length > banners, "submission outcome");
}

describe("worker console end to end", () => {
  it(
    "completes the 16-image session in exactly 7 resolved tasks and " +
      "shows the cancellation banner to a raced worker",
    async () => {
      const client = new ServiceClient(base);
      const sessionId = await client.createSession({
        algorithm: "group",
        manifest: fig5Manifest(),
        group: { shape: "triangle" },
        n: 16,
        tau: 3,
        k: 1,
        seed: 0,
      });

      const rootA = mount("worker-a");
      const rootB = mount("worker-b");
      const alice = new WorkerConsole(rootA, client, sessionId, "alice");
      const bert = new WorkerConsole(rootB, client, sessionId, "bert");
      const requester = new RequesterView(mount("requester"), client, sessionId);

      // walk the first two levels truthfully (root, both halves: all yes)
      for (let step = 0; step < 3; step++) {
        await alice.refresh();
        await waitFor(() => alice.currentTask !== null, "next task");
        await clickAnswerAndSubmit(rootA, alice, truthfulAnswer(alice));
      }

      // four quarter-range tasks are now pending; Bert picks the second
      // (the right sibling of the all-squares quarter) before Alice answers
      const pending = await client.pendingTasks(sessionId);
      expect(pending.length).toBe(4);
      await bert.selectTask(pending[1].task_id);

      // Alice truthfully answers "no" on the all-squares quarter, which
      // resolves Bert's task by inference and cancels it
      await alice.refresh();
      expect(alice.currentTask!.task_id).toBe(pending[0].task_id);
      expect(truthfulAnswer(alice)).toBe("no");
      await clickAnswerAndSubmit(rootA, alice, "no");

      // Bert's late answer hits the canceled task and gets the banner
      await clickAnswerAndSubmit(rootB, bert, "yes");
      expect(bert.lastBanner()).toBe("task no longer needed");

      // Alice finishes the session truthfully
      for (let guard = 0; guard < 20; guard++) {
        await alice.refresh();
        if (!alice.currentTask) {
          const snap = await requester.refresh();
          if (snap.status === "done") break;
          continue;
        }
        await clickAnswerAndSubmit(rootA, alice, truthfulAnswer(alice));
      }

      const snap = await requester.refresh();
      expect(snap.status).toBe("done");
      expect(snap.tasks.resolved).toBe(7);
      expect(snap.verdict).toMatchObject({ covered: true, cnt: 3 });
      const requesterText = document.getElementById("requester")!.textContent!;
      expect(requesterText).toContain("covered (cnt 3)");
      expect(requesterText).toContain("7 resolved");

      // the console never fabricated answers: one submission per click
      expect(alice.banners.filter((b) => b.startsWith("recorded")).length).toBe(7);
    },
    30000,
  );
});
