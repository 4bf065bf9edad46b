/**
 * Threshold-handle drag logic, in posterior space and free of the DOM so the
 * interaction contract is testable headless: live preview while dragging,
 * exactly one threshold_update committed on release, ordering enforced by
 * clamping so an out-of-order pair can never be sent.
 */
import { thresholdAction, type ThresholdUpdateAction } from "./protocol";

export type Handle = "t_idle" | "t_walk";

export interface DragCallbacks {
  /** Fires on every move with the would-be pair, for immediate redraw. */
  onPreview(tIdle: number, tWalk: number): void;
  /** Fires at most once per begin/end cycle, only when the pair changed. */
  onCommit(action: ThresholdUpdateAction): void;
}

export class ThresholdDrag {
  private active: Handle | null = null;
  private startIdle = 0;
  private startWalk = 0;

  constructor(
    public tIdle: number,
    public tWalk: number,
    private readonly callbacks: DragCallbacks,
  ) {}

  /** Adopt engine-confirmed values (ignored mid-drag; the engine echo that
   *  follows the commit will land after `end`). */
  sync(tIdle: number, tWalk: number): void {
    if (this.active !== null) return;
    this.tIdle = tIdle;
    this.tWalk = tWalk;
  }

  get dragging(): boolean {
    return this.active !== null;
  }

  begin(handle: Handle): void {
    this.active = handle;
    this.startIdle = this.tIdle;
    this.startWalk = this.tWalk;
  }

  /** Move the active handle to `value` (posterior units, any number). */
  move(value: number): void {
    if (this.active === null) return;
    const v = Math.min(1, Math.max(0, value));
    if (this.active === "t_idle") {
      this.tIdle = Math.min(v, this.tWalk);
    } else {
      this.tWalk = Math.max(v, this.tIdle);
    }
    this.callbacks.onPreview(this.tIdle, this.tWalk);
  }

  /** Release: commit one action if the pair changed and passes validation. */
  end(): void {
    if (this.active === null) return;
    this.active = null;
    if (this.tIdle === this.startIdle && this.tWalk === this.startWalk) return;
    const action = thresholdAction(this.tIdle, this.tWalk);
    if (action === null) {
      // Unreachable through move()'s clamping; restore just in case.
      this.tIdle = this.startIdle;
      this.tWalk = this.startWalk;
      return;
    }
    this.callbacks.onCommit(action);
  }

  /** Abort (pointer cancel, Escape): restore the pre-drag pair, commit nothing. */
  cancel(): void {
    if (this.active === null) return;
    this.active = null;
    this.tIdle = this.startIdle;
    this.tWalk = this.startWalk;
    this.callbacks.onPreview(this.tIdle, this.tWalk);
  }
}
