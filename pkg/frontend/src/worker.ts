import type { TaskView } from "./types.js";

const WORKER_KEY = "crowdcover-worker-id";

/** Pseudonymous local identity; no accounts. */
export function workerIdentity(storage: Storage): string {
  let id = storage.getItem(WORKER_KEY);
  if (!id) {
    id = "w-" + Math.random().toString(36).slice(2, 10);
    storage.setItem(WORKER_KEY, id);
  }
  return id;
}

/**
 * Tracks which tasks this worker already answered and picks the oldest
 * pending task they have not. The server lists tasks oldest-first.
 */
export class TaskFeed {
  private answered = new Set<string>();

  markAnswered(taskId: string): void {
    this.answered.add(taskId);
  }

  hasAnswered(taskId: string): boolean {
    return this.answered.has(taskId);
  }

  nextTask(pending: TaskView[]): TaskView | null {
    for (const task of pending) {
      if (!this.answered.has(task.task_id)) {
        return task;
      }
    }
    return null;
  }
}
