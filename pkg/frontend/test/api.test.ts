import { describe, expect, it } from "vitest";
import { ApiError, ServiceClient } from "../src/api.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ServiceClient", () => {
  it("retries network failures with backoff and then succeeds", async () => {
    let calls = 0;
    const flaky: typeof fetch = async () => {
      calls += 1;
      if (calls < 3) throw new TypeError("connection refused");
      return jsonResponse(200, []);
    };
    const client = new ServiceClient("http://example", flaky);
    const tasks = await client.pendingTasks("s1");
    expect(tasks).toEqual([]);
    expect(calls).toBe(3);
  });

  it("surfaces persistent network failures instead of losing them", async () => {
    const dead: typeof fetch = async () => {
      throw new TypeError("no route to host");
    };
    const client = new ServiceClient("http://example", dead);
    await expect(client.pendingTasks("s1")).rejects.toBeInstanceOf(ApiError);
  });

  it("maps accepted submissions to remaining-assignment counts", async () => {
    const stub: typeof fetch = async () =>
      jsonResponse(200, { status: "answering", remaining_assignments: 2 });
    const client = new ServiceClient("http://example", stub);
    const outcome = await client.submit("t1", "w1", "yes");
    expect(outcome).toEqual({ kind: "accepted", status: "answering", remaining: 2 });
  });

  it("maps canceled tasks to a dedicated outcome", async () => {
    const stub: typeof fetch = async () =>
      jsonResponse(200, { status: "canceled", remaining_assignments: 0 });
    const client = new ServiceClient("http://example", stub);
    const outcome = await client.submit("t1", "w1", "no");
    expect(outcome.kind).toBe("canceled");
  });

  it("maps conflicts (duplicate or resolved) to rejections", async () => {
    const stub: typeof fetch = async () =>
      jsonResponse(409, { error: "task already resolved" });
    const client = new ServiceClient("http://example", stub);
    const outcome = await client.submit("t1", "w1", "yes");
    expect(outcome.kind).toBe("rejected");
    expect(outcome.reason).toMatch(/resolved/);
  });

  it("raises ApiError for other HTTP errors", async () => {
    const stub: typeof fetch = async () => jsonResponse(400, { error: "bad answer" });
    const client = new ServiceClient("http://example", stub);
    await expect(client.submit("t1", "w1", "yes")).rejects.toMatchObject({
      status: 400,
    });
  });
});
