import { TeleopClient, realScheduler } from "./session.js";
import { DomView } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const url =
  params.get("server") ??
  (window.location.host !== ""
    ? `ws://${window.location.host}/ws`
    : "ws://127.0.0.1:8765/ws");
const session = params.get("session") ?? "ui";

const view = new DomView(document);
const client = new TeleopClient({
  url,
  session,
  view,
  socketFactory: (target) => new WebSocket(target) as any,
  scheduler: realScheduler,
});

window.addEventListener("keydown", (ev) => {
  if (client.pressKey(ev.code)) {
    ev.preventDefault(); // keep arrows from scrolling the page
  }
});

const button = (id: string): HTMLButtonElement =>
  document.getElementById(id) as HTMLButtonElement;

button("start-demo").addEventListener("click", () => client.startDemo());
button("stop-demo").addEventListener("click", () => client.stopDemo());
button("reset").addEventListener("click", () => {
  client.reset();
  view.resetTrail();
  view.clearOutcome();
});

// The protocol carries no episode verdict, so an embedding page that
// launches a policy run reports the finished result here.
window.addEventListener("message", (ev) => {
  const data = ev.data;
  if (
    data !== null &&
    typeof data === "object" &&
    data.type === "episode_result" &&
    typeof data.success === "boolean" &&
    typeof data.steps === "number"
  ) {
    view.showOutcome({ success: data.success, steps: data.steps });
  }
});

client.connect();
