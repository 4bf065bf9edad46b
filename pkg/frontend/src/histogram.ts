/**
 * Calibration panel: the two posterior histograms (idle condition vs walk
 * condition) overlaid on [0, 1], dashed 25/50/75% quantile markers per class,
 * and the two draggable threshold handles. Dragging previews locally;
 * releasing emits exactly one threshold_update through `sendAction`.
 */
import { ThresholdDrag, type Handle } from "./drag";
import type { OperatorAction } from "./protocol";
import { histogramQuantile, type DashboardState } from "./viewmodel";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface HistogramOptions {
  width?: number;
  height?: number;
  sendAction: (action: OperatorAction) => void;
}

const MARGIN = { left: 34, right: 12, top: 18, bottom: 24 };

export class HistogramView {
  readonly svg: SVGSVGElement;
  readonly drag: ThresholdDrag;
  private readonly width: number;
  private readonly height: number;
  private readonly plot: SVGGElement;
  private readonly handles: SVGGElement;
  private readonly onWindowMove = (ev: Event) => this.pointerMove(ev);
  private readonly onWindowUp = () => this.pointerUp();

  constructor(container: Element, private readonly opts: HistogramOptions) {
    this.width = opts.width ?? 560;
    this.height = opts.height ?? 240;
    this.svg = document.createElementNS(SVG_NS, "svg");
    this.svg.setAttribute("viewBox", `0 0 ${this.width} ${this.height}`);
    this.svg.setAttribute("class", "histogram");
    this.plot = document.createElementNS(SVG_NS, "g");
    this.handles = document.createElementNS(SVG_NS, "g");
    this.svg.append(this.plot, this.handles);
    container.append(this.svg);

    this.drag = new ThresholdDrag(0.25, 0.65, {
      onPreview: () => this.renderHandles(),
      onCommit: (action) => this.opts.sendAction(action),
    });
    this.svg.addEventListener("pointerdown", (ev) => this.pointerDown(ev));
    this.renderHandles();
  }

  // --- geometry -----------------------------------------------------------

  private xOf(value: number): number {
    const span = this.width - MARGIN.left - MARGIN.right;
    return MARGIN.left + value * span;
  }

  private valueAt(clientX: number): number {
    const rect = this.svg.getBoundingClientRect();
    // jsdom reports a zero-size rect; fall back to the viewBox scale.
    const scale = rect.width > 0 ? this.width / rect.width : 1;
    const x = (clientX - rect.left) * scale;
    const span = this.width - MARGIN.left - MARGIN.right;
    return (x - MARGIN.left) / span;
  }

  // --- pointer handling ----------------------------------------------------

  private pointerDown(ev: Event): void {
    const target = ev.target as Element | null;
    const hit = target?.closest?.("[data-handle]") ?? null;
    if (hit === null) return;
    ev.preventDefault?.();
    const handle = hit.getAttribute("data-handle") as Handle;
    this.drag.begin(handle);
    window.addEventListener("pointermove", this.onWindowMove);
    window.addEventListener("pointerup", this.onWindowUp);
  }

  private pointerMove(ev: Event): void {
    const clientX = (ev as PointerEvent).clientX;
    if (typeof clientX === "number") this.drag.move(this.valueAt(clientX));
  }

  private pointerUp(): void {
    window.removeEventListener("pointermove", this.onWindowMove);
    window.removeEventListener("pointerup", this.onWindowUp);
    this.drag.end();
  }

  // --- rendering -----------------------------------------------------------

  render(state: DashboardState): void {
    const hist = state.histogram;
    if (state.thresholds !== null) {
      this.drag.sync(state.thresholds.tIdle, state.thresholds.tWalk);
    } else if (hist?.medianIdle != null && hist.medianWalk != null) {
      // No engine-confirmed thresholds yet (mid-calibration): handles
      // default to the class medians, ordered.
      this.drag.sync(
        Math.min(hist.medianIdle, hist.medianWalk),
        Math.max(hist.medianIdle, hist.medianWalk),
      );
    }
    this.renderPlot(state);
    this.renderHandles();
  }

  private renderPlot(state: DashboardState): void {
    this.plot.replaceChildren();
    const bottom = this.height - MARGIN.bottom;
    const axis = this.line(this.xOf(0), bottom, this.xOf(1), bottom, "axis");
    this.plot.append(axis);
    for (const tick of [0, 0.25, 0.5, 0.75, 1]) {
      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("x", String(this.xOf(tick)));
      label.setAttribute("y", String(bottom + 16));
      label.setAttribute("class", "tick");
      label.textContent = tick.toFixed(2);
      this.plot.append(label);
    }
    const hist = state.histogram;
    if (hist === null) return;

    const peak = Math.max(1, ...hist.idle, ...hist.walk);
    const plotH = bottom - MARGIN.top;
    const drawBars = (counts: number[], cls: string) => {
      counts.forEach((count, i) => {
        if (count === 0) return;
        const x0 = this.xOf(hist.edges[i] ?? 0);
        const x1 = this.xOf(hist.edges[i + 1] ?? 1);
        const h = (count / peak) * plotH;
        const rect = document.createElementNS(SVG_NS, "rect");
        rect.setAttribute("x", String(x0));
        rect.setAttribute("y", String(bottom - h));
        rect.setAttribute("width", String(Math.max(0, x1 - x0)));
        rect.setAttribute("height", String(h));
        rect.setAttribute("class", cls);
        this.plot.append(rect);
      });
    };
    drawBars(hist.idle, "bar-idle");
    drawBars(hist.walk, "bar-walk");

    for (const [counts, cls] of [
      [hist.idle, "quantile-idle"],
      [hist.walk, "quantile-walk"],
    ] as const) {
      for (const q of [0.25, 0.5, 0.75]) {
        const value = histogramQuantile(hist.edges, counts, q);
        if (value === null) continue;
        const x = this.xOf(value);
        const mark = this.line(x, MARGIN.top, x, bottom, cls);
        mark.setAttribute("stroke-dasharray", "4 3");
        this.plot.append(mark);
      }
    }
  }

  private renderHandles(): void {
    this.handles.replaceChildren();
    const bottom = this.height - MARGIN.bottom;
    const pairs: Array<[Handle, number, string]> = [
      ["t_idle", this.drag.tIdle, "handle-idle"],
      ["t_walk", this.drag.tWalk, "handle-walk"],
    ];
    for (const [name, value, cls] of pairs) {
      const g = document.createElementNS(SVG_NS, "g");
      g.setAttribute("data-handle", name);
      g.setAttribute("class", `handle ${cls}`);
      const x = this.xOf(value);
      g.append(this.line(x, MARGIN.top - 6, x, bottom, "handle-line"));
      const grip = document.createElementNS(SVG_NS, "circle");
      grip.setAttribute("cx", String(x));
      grip.setAttribute("cy", String(MARGIN.top - 6));
      grip.setAttribute("r", "7");
      grip.setAttribute("class", "handle-grip");
      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("x", String(x));
      label.setAttribute("y", String(MARGIN.top - 16));
      label.setAttribute("class", "handle-label");
      label.textContent = `${name === "t_idle" ? "T_I" : "T_W"} ${value.toFixed(2)}`;
      g.append(grip, label);
      this.handles.append(g);
    }
  }

  private line(x1: number, y1: number, x2: number, y2: number, cls: string) {
    const el = document.createElementNS(SVG_NS, "line");
    el.setAttribute("x1", String(x1));
    el.setAttribute("y1", String(y1));
    el.setAttribute("x2", String(x2));
    el.setAttribute("y2", String(y2));
    el.setAttribute("class", cls);
    return el;
  }
}
