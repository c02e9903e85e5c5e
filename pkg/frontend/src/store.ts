// Session state machine. One refinement request in flight at a time; every
// mask shown comes verbatim from a service response (the client never
// recomputes masks or Dice). A 409 means the service history moved ahead of
// us, so re-sync from GET state and recover the stored mask by resending
// the recorded last click with its original step (documented retry path).

import { ApiError } from "./client";
import type { Api, ClickInfo, MaskResponse } from "./client";
import { CodecError, fromBase64, parseLabels, parseVolume, toBase64 } from "./codec";
import type { Extents, Labels, Volume } from "./codec";
import { intensityWindow } from "./compose";
import { axisExtent } from "./grid";
import type { Axis, Voxel } from "./grid";

export interface HistoryEntry {
  step: number;
  click: ClickInfo | null;
  dice: number[] | null;
  sha256: string;
}

export interface Overlays {
  auto: boolean;
  refined: boolean;
  error: boolean;
}

export interface SessionView {
  phase: "empty" | "creating" | "ready";
  busy: boolean;
  notice: string | null;
  sid: string | null;
  extents: Extents | null;
  categories: number;
  hasGt: boolean;
  volume: Volume | null;
  window: { lo: number; hi: number };
  autoMask: Labels | null;
  mask: Labels | null;
  history: HistoryEntry[];
  axis: Axis;
  index: number;
  category: number;
  overlays: Overlays;
  errorSlice: number[] | null;
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `service error ${err.status}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

export class SessionStore {
  private readonly state: SessionView = {
    phase: "empty",
    busy: false,
    notice: null,
    sid: null,
    extents: null,
    categories: 0,
    hasGt: false,
    volume: null,
    window: { lo: 0, hi: 1 },
    autoMask: null,
    mask: null,
    history: [],
    axis: "z",
    index: 0,
    category: 1,
    overlays: { auto: false, refined: true, error: false },
    errorSlice: null,
  };
  private listeners = new Set<() => void>();
  private errorToken = 0;

  constructor(private readonly api: Api) {}

  get view(): Readonly<SessionView> {
    return this.state;
  }

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }

  // clicks recorded in the history, for slice markers
  get clicks(): ClickInfo[] {
    const out = [];
    for (const entry of this.state.history) {
      if (entry.click) {
        out.push(entry.click);
      }
    }
    return out;
  }

  currentDice(): number[] | null {
    const last = this.state.history[this.state.history.length - 1];
    return last ? last.dice : null;
  }

  // -- session lifecycle ---------------------------------------------------

  async startSession(volumeFile: Uint8Array, gtFile: Uint8Array | null): Promise<void> {
    const s = this.state;
    if (s.busy || s.phase === "creating") {
      return;
    }
    let volume: Volume;
    try {
      volume = parseVolume(volumeFile);
      if (gtFile) {
        parseLabels(gtFile); // surface bad files before any request
      }
    } catch (err) {
      if (err instanceof CodecError) {
        s.notice = err.message;
        this.emit();
        return;
      }
      throw err;
    }
    s.phase = "creating";
    s.notice = null;
    this.emit();
    try {
      const res = await this.api.createSession(
        toBase64(volumeFile), gtFile ? toBase64(gtFile) : undefined);
      s.sid = res.session_id;
      s.extents = res.extents;
      s.categories = res.categories;
      s.hasGt = res.dice !== undefined;
      s.volume = volume;
      s.window = intensityWindow(volume.voxels);
      s.autoMask = parseLabels(fromBase64(res.mask_b64));
      s.mask = s.autoMask;
      s.history = [this.entryOf(res, null)];
      s.axis = "z";
      s.index = Math.floor(axisExtent(res.extents, "z") / 2);
      s.category = Math.min(1, res.categories - 1);
      s.overlays = { auto: false, refined: true, error: false };
      s.errorSlice = null;
      s.phase = "ready";
    } catch (err) {
      s.phase = s.sid ? "ready" : "empty";
      s.notice = describe(err);
    }
    this.emit();
  }

  private entryOf(res: MaskResponse, click: ClickInfo | null): HistoryEntry {
    return { step: res.step, click, dice: res.dice ?? null,
             sha256: res.mask_sha256 };
  }

  // -- interaction ---------------------------------------------------------

  async placeClick(position: Voxel): Promise<void> {
    const s = this.state;
    if (s.phase !== "ready" || s.busy || !s.sid) {
      return;
    }
    s.busy = true;
    s.notice = null;
    this.emit();
    const click: ClickInfo = {
      position: [position[0], position[1], position[2]],
      category: s.category,
    };
    try {
      const res = await this.api.addClick(
        s.sid, click.position, click.category, s.history.length);
      s.mask = parseLabels(fromBase64(res.mask_b64));
      s.history.push(this.entryOf(res, click));
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.resync(err);
      } else {
        s.notice = describe(err);
      }
    }
    s.busy = false;
    this.refreshErrorSlice();
    this.emit();
  }

  async undoClick(): Promise<void> {
    const s = this.state;
    if (s.phase !== "ready" || s.busy || !s.sid) {
      return;
    }
    if (s.history.length <= 1) {
      s.notice = "nothing to undo";
      this.emit();
      return;
    }
    s.busy = true;
    s.notice = null;
    this.emit();
    try {
      const res = await this.api.undo(s.sid);
      s.mask = parseLabels(fromBase64(res.mask_b64));
      s.history.pop();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        await this.resync(err);
      } else {
        s.notice = describe(err);
      }
    }
    s.busy = false;
    this.refreshErrorSlice();
    this.emit();
  }

  // Rebuild history from the service, then recover the latest stored mask.
  // Resending the recorded last click with its original step index is the
  // documented idempotent retry: it returns the stored response without
  // growing the history.
  private async resync(conflict: ApiError): Promise<void> {
    const s = this.state;
    try {
      const st = await this.api.state(s.sid!);
      s.history = st.steps.map((step) => ({
        step: step.step,
        click: step.click,
        dice: step.dice ?? null,
        sha256: step.mask_sha256,
      }));
      const last = st.steps[st.steps.length - 1]!;
      if (last.click === null) {
        s.mask = s.autoMask;
      } else {
        const res = await this.api.addClick(
          s.sid!, last.click.position, last.click.category, last.step);
        s.mask = parseLabels(fromBase64(res.mask_b64));
      }
      s.notice = `history was out of date (${conflict.message}); ` +
        `re-synced to step ${last.step}`;
    } catch (err) {
      s.notice = describe(err);
    }
  }

  // -- view state ----------------------------------------------------------

  setAxis(axis: Axis): void {
    const s = this.state;
    if (s.axis === axis) {
      return;
    }
    s.axis = axis;
    if (s.extents) {
      s.index = Math.min(s.index, axisExtent(s.extents, axis) - 1);
    }
    this.refreshErrorSlice();
    this.emit();
  }

  setSlice(index: number): void {
    const s = this.state;
    const extent = s.extents ? axisExtent(s.extents, s.axis) : 1;
    const clamped = Math.min(Math.max(Math.round(index), 0), extent - 1);
    if (clamped === s.index) {
      return;
    }
    s.index = clamped;
    this.refreshErrorSlice();
    this.emit();
  }

  setCategory(category: number): void {
    const s = this.state;
    if (category >= 0 && category < s.categories) {
      s.category = category;
      this.emit();
    }
  }

  toggleOverlay(layer: keyof Overlays): void {
    const s = this.state;
    s.overlays[layer] = !s.overlays[layer];
    if (layer === "error") {
      this.refreshErrorSlice();
    }
    this.emit();
  }

  // The error layer is served, not derived: refined != gt is the service's
  // call. Fetch it for the displayed slice whenever it could have changed.
  private refreshErrorSlice(): void {
    const s = this.state;
    const token = ++this.errorToken;
    if (!s.overlays.error || !s.hasGt || !s.sid || s.phase !== "ready") {
      s.errorSlice = null;
      return;
    }
    this.api.slice(s.sid, s.axis, s.index, "error").then((res) => {
      if (token === this.errorToken) {
        s.errorSlice = res.values.flat();
        this.emit();
      }
    }).catch((err) => {
      if (token === this.errorToken) {
        s.overlays.error = false;
        s.errorSlice = null;
        s.notice = describe(err);
        this.emit();
      }
    });
  }
}
