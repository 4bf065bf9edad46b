/**
 * Session panel: the linear course with the avatar marker, the ten NPC
 * dwell zones colored by earned credit, the FSM state badge, live score and
 * clock, and — when the stream carries ground-truth intent labels — a
 * false-positive / false-negative tint on the avatar.
 */
import {
  COURSE,
  npcPositionM,
  type DashboardState,
} from "./viewmodel";

const SVG_NS = "http://www.w3.org/2000/svg";

const MARGIN = { left: 16, right: 16 };

export class TrackView {
  readonly root: HTMLElement;
  readonly svg: SVGSVGElement;
  private readonly badge: HTMLElement;
  private readonly scoreBox: HTMLElement;
  private readonly clockBox: HTMLElement;
  private readonly endBanner: HTMLElement;
  private readonly width: number;
  private readonly height = 90;

  constructor(container: Element, width = 720) {
    this.width = width;
    this.root = document.createElement("div");
    this.root.className = "track-view";

    const status = document.createElement("div");
    status.className = "session-status";
    this.badge = document.createElement("span");
    this.badge.className = "fsm-badge";
    this.scoreBox = document.createElement("span");
    this.scoreBox.className = "score-box";
    this.clockBox = document.createElement("span");
    this.clockBox.className = "clock-box";
    status.append(this.badge, this.scoreBox, this.clockBox);

    this.svg = document.createElementNS(SVG_NS, "svg");
    this.svg.setAttribute("viewBox", `0 0 ${this.width} ${this.height}`);
    this.svg.setAttribute("class", "track");

    this.endBanner = document.createElement("div");
    this.endBanner.className = "end-banner";
    this.endBanner.hidden = true;

    this.root.append(status, this.svg, this.endBanner);
    container.append(this.root);
  }

  private xOf(positionM: number): number {
    const span = this.width - MARGIN.left - MARGIN.right;
    return MARGIN.left + (positionM / COURSE.courseEndM) * span;
  }

  render(state: DashboardState): void {
    this.badge.textContent = state.fsmState.toUpperCase();
    this.badge.dataset.state = state.fsmState;
    this.scoreBox.textContent = `score ${formatScore(state.score)}/10`;
    this.clockBox.textContent = `t ${state.clockS.toFixed(1)} s`;

    this.svg.replaceChildren();
    const midY = this.height / 2 + 10;

    const rail = document.createElementNS(SVG_NS, "line");
    rail.setAttribute("x1", String(this.xOf(0)));
    rail.setAttribute("y1", String(midY));
    rail.setAttribute("x2", String(this.xOf(COURSE.courseEndM)));
    rail.setAttribute("y2", String(midY));
    rail.setAttribute("class", "rail");
    this.svg.append(rail);

    for (const npc of state.npcs) {
      const cx = this.xOf(npcPositionM(npc.index));
      const zoneW = this.xOf(COURSE.dwellRadiusM) - this.xOf(0);
      const zone = document.createElementNS(SVG_NS, "rect");
      zone.setAttribute("x", String(cx - zoneW));
      zone.setAttribute("y", String(midY - 12));
      zone.setAttribute("width", String(2 * zoneW));
      zone.setAttribute("height", "24");
      zone.setAttribute("rx", "4");
      zone.setAttribute("class", `zone ${creditClass(npc.credit)}`);
      zone.setAttribute("data-npc", String(npc.index));
      zone.setAttribute("data-credit", String(npc.credit));
      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("x", String(cx));
      label.setAttribute("y", String(midY + 28));
      label.setAttribute("class", "zone-label");
      label.textContent = String(npc.index + 1);
      this.svg.append(zone, label);
    }

    const avatar = document.createElementNS(SVG_NS, "circle");
    avatar.setAttribute("cx", String(this.xOf(state.avatarPositionM)));
    avatar.setAttribute("cy", String(midY));
    avatar.setAttribute("r", "8");
    avatar.setAttribute("class", `avatar ${mismatchClass(state)}`);
    this.svg.append(avatar);

    const end = state.sessionEnd;
    this.endBanner.hidden = end === null;
    if (end !== null) {
      const time =
        end.completionTimeS !== null
          ? `completed in ${end.completionTimeS.toFixed(1)} s`
          : `ended after ${end.durationS.toFixed(1)} s`;
      this.endBanner.textContent = `${end.reason}: score ${formatScore(
        end.stopsScore,
      )}/10, ${time}`;
    }
  }
}

function formatScore(score: number): string {
  return Number.isInteger(score) ? score.toFixed(1) : String(score);
}

function creditClass(credit: number): string {
  if (credit >= 1) return "zone-full";
  if (credit > 0) return "zone-partial";
  return "zone-none";
}

/** Intent labels, when present, color decode mismatches by direction. */
function mismatchClass(state: DashboardState): string {
  if (state.lastIntent === null) return "";
  const intent = state.lastIntent === 1 ? "walk" : "idle";
  if (intent === state.fsmState) return "";
  return state.fsmState === "walk" ? "false-positive" : "false-negative";
}
