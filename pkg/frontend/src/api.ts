import type { Answer, SessionSnapshot, SubmitOutcome, TaskView } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = typeof fetch;

const RETRIES = 3;
const BACKOFF_MS = 250;

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

/**
 * Typed client for the task-service HTTP API.
 *
 * Network failures retry with exponential backoff and eventually throw;
 * they are never swallowed. HTTP error statuses do not retry (the server
 * answered; retrying a submit could double-count).
 */
export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = globalThis.fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let lastError: unknown;
    for (let attempt = 0; attempt < RETRIES; attempt++) {
      try {
        return await this.fetchImpl(this.baseUrl + path, init);
      } catch (err) {
        lastError = err;
        await sleep(BACKOFF_MS * 2 ** attempt);
      }
    }
    throw new ApiError(0, `network failure after ${RETRIES} attempts: ${lastError}`);
  }

  private async json<T>(response: Response): Promise<T> {
    const body = (await response.json()) as T & { error?: string };
    if (!response.ok) {
      throw new ApiError(response.status, body?.error ?? response.statusText);
    }
    return body;
  }

  async createSession(config: Record<string, unknown>): Promise<string> {
    const response = await this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(config),
    });
    const body = await this.json<{ session_id: string }>(response);
    return body.session_id;
  }

  async session(sessionId: string): Promise<SessionSnapshot> {
    const response = await this.request(`/sessions/${sessionId}`);
    return this.json<SessionSnapshot>(response);
  }

  async pendingTasks(sessionId: string): Promise<TaskView[]> {
    const response = await this.request(`/sessions/${sessionId}/tasks?status=pending`);
    return this.json<TaskView[]>(response);
  }

  /**
   * Submit one assignment. Rejections (duplicate worker, task already
   * resolved) and cancellations come back as structured outcomes so the
   * console can explain them instead of crashing.
   */
  async submit(taskId: string, workerId: string, answer: Answer): Promise<SubmitOutcome> {
    const response = await this.request(`/tasks/${taskId}/assignments`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ worker_id: workerId, answer }),
    });
    if (response.status === 409) {
      const body = (await response.json()) as { error?: string };
      return { kind: "rejected", reason: body?.error ?? "conflict" };
    }
    const body = await this.json<{ status: string; remaining_assignments: number }>(
      response,
    );
    if (body.status === "canceled") {
      return { kind: "canceled", status: body.status, remaining: 0 };
    }
    return {
      kind: "accepted",
      status: body.status,
      remaining: body.remaining_assignments,
    };
  }

  imageUrl(task: TaskView, index: number): string {
    return this.baseUrl + task.items[index].image_url;
  }
}
