// In-memory stand-in for the session service, following the documented
// endpoint semantics: step-index retry/conflict rules, stored per-step
// masks, per-class Dice when ground truth is held, served slice layers.
// Refinement is a deterministic toy: each click paints a radius-1 cube of
// its category over the automatic mask, recomputed from the full prefix.

import { createHash } from "node:crypto";

import { ApiError } from "../src/client";
import type { Api, ClickInfo, CreateResponse, MaskResponse, SliceLayer,
              StateResponse } from "../src/client";
import { cOrderBytes, fromBase64, labelBytes, parseLabels, parseVolume,
         toBase64 } from "../src/codec";
import type { Extents, Labels, Volume } from "../src/codec";
import type { Axis } from "../src/grid";

export function makeVolume(extents: Extents,
                           fn: (x: number, y: number, z: number) => number): Volume {
  const [X, Y, Z] = extents;
  const voxels = new Float32Array(X * Y * Z);
  for (let z = 0; z < Z; z++) {
    for (let y = 0; y < Y; y++) {
      for (let x = 0; x < X; x++) {
        voxels[x + X * (y + Y * z)] = fn(x, y, z);
      }
    }
  }
  return { extents, voxels };
}

export function makeLabels(extents: Extents, categories: number,
                           fn: (x: number, y: number, z: number) => number): Labels {
  const [X, Y, Z] = extents;
  const voxels = new Uint8Array(X * Y * Z);
  for (let z = 0; z < Z; z++) {
    for (let y = 0; y < Y; y++) {
      for (let x = 0; x < X; x++) {
        voxels[x + X * (y + Y * z)] = fn(x, y, z);
      }
    }
  }
  return { extents, categories, voxels };
}

// digest convention from the API notes: u8 bytes, C-contiguous
export function maskSha256(extents: Extents, voxels: Uint8Array): string {
  const bytes = cOrderBytes({ extents, categories: 256, voxels });
  return createHash("sha256").update(bytes).digest("hex");
}

function dicePerClass(pred: Uint8Array, gt: Uint8Array, categories: number): number[] {
  const out = [];
  for (let c = 0; c < categories; c++) {
    let np = 0;
    let ng = 0;
    let overlap = 0;
    for (let i = 0; i < pred.length; i++) {
      const p = pred[i] === c;
      const g = gt[i] === c;
      if (p) np++;
      if (g) ng++;
      if (p && g) overlap++;
    }
    out.push(np + ng === 0 ? 1.0 : (2 * overlap) / (np + ng));
  }
  return out;
}

interface FakeSession {
  volume: Volume;
  gt: Labels | null;
  clicks: ClickInfo[];
  masks: Uint8Array[]; // voxel payloads per step
}

export class FakeService implements Api {
  categories = 3;
  sessions = new Map<string, FakeSession>();
  log: string[] = [];
  // test hook: addClick awaits this before responding when set
  clickGate: Promise<void> | null = null;
  private nextId = 0;

  // toy model: threshold the intensities, clamp to the category range
  autoMask(volume: Volume): Uint8Array {
    const out = new Uint8Array(volume.voxels.length);
    for (let i = 0; i < out.length; i++) {
      const v = volume.voxels[i]!;
      out[i] = Math.min(v > 1 ? 2 : v > 0 ? 1 : 0, this.categories - 1);
    }
    return out;
  }

  refined(session: FakeSession, steps: number): Uint8Array {
    const mask = session.masks[0]!.slice();
    const [X, Y, Z] = session.volume.extents;
    for (const click of session.clicks.slice(0, steps)) {
      const [cx, cy, cz] = click.position;
      for (let z = Math.max(cz - 1, 0); z <= Math.min(cz + 1, Z - 1); z++) {
        for (let y = Math.max(cy - 1, 0); y <= Math.min(cy + 1, Y - 1); y++) {
          for (let x = Math.max(cx - 1, 0); x <= Math.min(cx + 1, X - 1); x++) {
            mask[x + X * (y + Y * z)] = click.category;
          }
        }
      }
    }
    return mask;
  }

  private session(sid: string): FakeSession {
    const session = this.sessions.get(sid);
    if (!session) {
      throw new ApiError(404, `unknown session: ${sid}`);
    }
    return session;
  }

  private maskResponse(sid: string, step: number): MaskResponse {
    const session = this.session(sid);
    const voxels = session.masks[step]!;
    const mask: Labels = { extents: session.volume.extents,
                           categories: this.categories, voxels };
    const out: MaskResponse = {
      session_id: sid,
      step,
      mask_b64: toBase64(labelBytes(mask)),
      mask_sha256: maskSha256(session.volume.extents, voxels),
    };
    if (session.gt) {
      out.dice = dicePerClass(voxels, session.gt.voxels, this.categories);
    }
    return out;
  }

  // out-of-band click by "another client", to stage step conflicts
  bump(sid: string, click: ClickInfo): void {
    const session = this.session(sid);
    session.clicks.push(click);
    session.masks.push(this.refined(session, session.clicks.length));
  }

  async createSession(volumeB64: string, gtB64?: string): Promise<CreateResponse> {
    this.log.push("POST /api/sessions");
    let volume: Volume;
    let gt: Labels | null = null;
    try {
      volume = parseVolume(fromBase64(volumeB64));
      if (gtB64 !== undefined) {
        gt = parseLabels(fromBase64(gtB64));
      }
    } catch (err) {
      throw new ApiError(400, String(err));
    }
    const sid = `fake-${this.nextId++}`;
    const session: FakeSession = { volume, gt, clicks: [], masks: [] };
    session.masks.push(this.autoMask(volume));
    this.sessions.set(sid, session);
    return {
      ...this.maskResponse(sid, 0),
      extents: [...volume.extents] as [number, number, number],
      categories: this.categories,
      created: 1723400000.0,
    };
  }

  async addClick(sid: string, position: [number, number, number],
                 category: number, step: number): Promise<MaskResponse> {
    this.log.push(`POST /api/sessions/${sid}/clicks`);
    if (this.clickGate) {
      await this.clickGate;
    }
    const session = this.session(sid);
    const n = session.clicks.length;
    const last = session.clicks[n - 1];
    if (step === n && n >= 1 && last
        && last.position[0] === position[0] && last.position[1] === position[1]
        && last.position[2] === position[2] && last.category === category) {
      return this.maskResponse(sid, n); // idempotent retry of the last click
    }
    if (step !== n + 1) {
      throw new ApiError(409, `stale step index ${step}; next step is ${n + 1}`);
    }
    for (let d = 0; d < 3; d++) {
      if (position[d]! < 0 || position[d]! >= session.volume.extents[d]!) {
        throw new ApiError(400,
          `position ${position} outside extents ${session.volume.extents}`);
      }
    }
    if (category < 0 || category >= this.categories) {
      throw new ApiError(400, `category ${category} not in [0, ${this.categories})`);
    }
    session.clicks.push({ position, category });
    session.masks.push(this.refined(session, n + 1));
    return this.maskResponse(sid, n + 1);
  }

  async undo(sid: string): Promise<MaskResponse> {
    this.log.push(`POST /api/sessions/${sid}/undo`);
    const session = this.session(sid);
    if (session.clicks.length === 0) {
      throw new ApiError(409, "no clicks to undo");
    }
    session.clicks.pop();
    session.masks.pop();
    return this.maskResponse(sid, session.clicks.length);
  }

  async state(sid: string): Promise<StateResponse> {
    this.log.push(`GET /api/sessions/${sid}`);
    const session = this.session(sid);
    const steps = [];
    for (let t = 0; t <= session.clicks.length; t++) {
      const entry: StateResponse["steps"][number] = {
        step: t,
        click: t === 0 ? null : session.clicks[t - 1]!,
        mask_sha256: maskSha256(session.volume.extents, session.masks[t]!),
      };
      if (session.gt) {
        entry.dice = dicePerClass(session.masks[t]!, session.gt.voxels,
                                  this.categories);
      }
      steps.push(entry);
    }
    return {
      session_id: sid,
      created: 1723400000.0,
      extents: [...session.volume.extents] as [number, number, number],
      categories: this.categories,
      steps,
    };
  }

  // naive per-axis loops straight from the API notes:
  // axis z -> values[y][x], axis y -> values[z][x], axis x -> values[z][y]
  async slice(sid: string, axis: Axis, index: number,
              layer: SliceLayer): Promise<{ axis: Axis; index: number;
                layer: SliceLayer; rows: number; cols: number;
                values: number[][] }> {
    this.log.push(`GET /api/sessions/${sid}/slice?axis=${axis}&index=${index}&layer=${layer}`);
    const session = this.session(sid);
    const [X, Y, Z] = session.volume.extents;
    const extent = axis === "x" ? X : axis === "y" ? Y : Z;
    if (index < 0 || index >= extent) {
      throw new ApiError(400, `index ${index} outside axis extent ${extent}`);
    }
    let data: ArrayLike<number>;
    if (layer === "image") {
      data = session.volume.voxels;
    } else if (layer === "auto") {
      data = session.masks[0]!;
    } else if (layer === "refined") {
      data = session.masks[session.clicks.length]!;
    } else if (layer === "error") {
      if (!session.gt) {
        throw new ApiError(400, "error layer needs ground truth");
      }
      const latest = session.masks[session.clicks.length]!;
      const err = new Uint8Array(latest.length);
      for (let i = 0; i < err.length; i++) {
        err[i] = latest[i] !== session.gt.voxels[i] ? 1 : 0;
      }
      data = err;
    } else {
      throw new ApiError(400, `layer must be image, auto, refined or error, got '${layer}'`);
    }
    const at = (x: number, y: number, z: number) => data[x + X * (y + Y * z)] as number;
    const values: number[][] = [];
    if (axis === "z") {
      for (let y = 0; y < Y; y++) {
        const row = [];
        for (let x = 0; x < X; x++) row.push(at(x, y, index));
        values.push(row);
      }
    } else if (axis === "y") {
      for (let z = 0; z < Z; z++) {
        const row = [];
        for (let x = 0; x < X; x++) row.push(at(x, index, z));
        values.push(row);
      }
    } else {
      for (let z = 0; z < Z; z++) {
        const row = [];
        for (let y = 0; y < Y; y++) row.push(at(index, y, z));
        values.push(row);
      }
    }
    return { axis, index, layer, rows: values.length,
             cols: values[0]!.length, values };
  }
}
