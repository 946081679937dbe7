import { ServiceClient } from "./api.js";
import { WorkerConsole } from "./console.js";
import { RequesterView } from "./requester.js";
import { workerIdentity } from "./worker.js";

const POLL_MS = 2000;

function bootstrap(): void {
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session");
  const apiBase = params.get("api") ?? "";
  const pane = document.getElementById("app")!;
  if (!sessionId) {
    pane.innerHTML =
      "<p>Open with <code>?session=&lt;session id&gt;</code> " +
      "(and optional <code>&amp;api=http://host:port</code>).</p>";
    return;
  }
  const client = new ServiceClient(apiBase);
  const workerRoot = document.getElementById("worker")!;
  const requesterRoot = document.getElementById("requester")!;
  const konsole = new WorkerConsole(
    workerRoot,
    client,
    sessionId,
    workerIdentity(window.localStorage),
  );
  const requester = new RequesterView(requesterRoot, client, sessionId);

  const tick = async () => {
    try {
      await konsole.refresh();
      await requester.refresh();
    } catch (err) {
      console.error("poll failed", err);
    }
  };
  void tick();
  window.setInterval(() => void tick(), POLL_MS);
}

bootstrap();
