/**
 * Page wiring: one dashboard = one telemetry feed + one state + two panels.
 *
 * Rendering is throttled to the display refresh (requestAnimationFrame over
 * a dirty flag), independent of telemetry rate. A live feed that goes quiet
 * for two seconds raises the stale banner and reconnects with backoff.
 */
import { HistogramView } from "./histogram";
import { controlAction, serializeAction, type OperatorAction } from "./protocol";
import { TrackView } from "./track";
import { ReplayDriver, webSocketFeed, type Feed } from "./transport";
import { applyLine, initialState, type DashboardState } from "./viewmodel";

const STALE_AFTER_MS = 2000;

export function mountDashboard(root: HTMLElement): void {
  root.innerHTML = `
    <header>
      <h1>bciwalk operator console</h1>
      <div class="feed-bar">
        <input id="ws-url" type="text" value="ws://127.0.0.1:8765" spellcheck="false" />
        <button id="connect">connect</button>
        <label class="replay-label">replay log
          <input id="replay-file" type="file" accept=".ndjson,.jsonl,.txt" />
        </label>
        <span id="feed-status" class="feed-status" data-state="idle">no feed</span>
      </div>
      <div id="stale-banner" class="stale-banner" hidden>telemetry stale — reconnecting…</div>
    </header>
    <main>
      <section class="panel">
        <h2>calibration</h2>
        <div id="histogram-panel"></div>
      </section>
      <section class="panel">
        <h2>session</h2>
        <div id="track-panel"></div>
        <div class="controls">
          <button data-verb="start">start</button>
          <button data-verb="pause">pause</button>
          <button data-verb="reset">reset</button>
        </div>
      </section>
    </main>
    <footer id="counters"></footer>
  `;

  const state: DashboardState = initialState();
  let feed: Feed | null = null;
  let lastLineAt = 0;
  let reconnectDelay = 1000;
  let wantedUrl: string | null = null;
  let dirty = true;

  const statusEl = root.querySelector("#feed-status") as HTMLElement;
  const staleEl = root.querySelector("#stale-banner") as HTMLElement;
  const countersEl = root.querySelector("#counters") as HTMLElement;

  const sendAction = (action: OperatorAction): void => {
    feed?.send(serializeAction(action));
  };

  const histogram = new HistogramView(
    root.querySelector("#histogram-panel") as Element,
    { sendAction },
  );
  const track = new TrackView(root.querySelector("#track-panel") as Element);

  const onLine = (line: string): void => {
    applyLine(state, line);
    lastLineAt = performance.now();
    dirty = true;
  };

  const setStatus = (text: string, kind: string): void => {
    statusEl.textContent = text;
    statusEl.dataset.state = kind;
  };

  const connect = (url: string): void => {
    feed?.close();
    wantedUrl = url;
    setStatus(`connecting ${url}`, "connecting");
    feed = webSocketFeed(url, {
      onLine,
      onOpen: () => {
        reconnectDelay = 1000;
        lastLineAt = performance.now();
        setStatus(`live ${url}`, "live");
      },
      onClose: () => {
        setStatus("disconnected", "down");
        if (wantedUrl === null) return;
        const delay = reconnectDelay;
        reconnectDelay = Math.min(reconnectDelay * 2, 15_000);
        setTimeout(() => {
          if (wantedUrl !== null) connect(wantedUrl);
        }, delay);
      },
    });
  };

  (root.querySelector("#connect") as HTMLButtonElement).addEventListener(
    "click",
    () => {
      const url = (root.querySelector("#ws-url") as HTMLInputElement).value.trim();
      if (url.length > 0) connect(url);
    },
  );

  (root.querySelector("#replay-file") as HTMLInputElement).addEventListener(
    "change",
    async (ev) => {
      const input = ev.target as HTMLInputElement;
      const file = input.files?.[0];
      if (file === undefined) return;
      wantedUrl = null;
      feed?.close();
      feed = null;
      const text = await file.text();
      Object.assign(state, initialState());
      const driver = new ReplayDriver(text, onLine);
      setStatus(`replaying ${file.name}`, "replay");
      driver.start();
    },
  );

  for (const button of root.querySelectorAll<HTMLButtonElement>("[data-verb]")) {
    button.addEventListener("click", () => {
      const verb = button.dataset.verb as "start" | "pause" | "reset";
      sendAction(controlAction(verb));
    });
  }

  const frame = (): void => {
    const live = statusEl.dataset.state === "live";
    staleEl.hidden = !(live && performance.now() - lastLineAt > STALE_AFTER_MS);
    if (dirty) {
      dirty = false;
      histogram.render(state);
      track.render(state);
      const { messages, ignored, malformed } = state.counts;
      countersEl.textContent =
        `${messages} messages · ${ignored} ignored · ${malformed} malformed` +
        (state.paused ? " · paused" : "");
    }
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

const rootEl = document.getElementById("app");
if (rootEl !== null) mountDashboard(rootEl);
