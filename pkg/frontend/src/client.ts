// Typed client for the session service. Every method maps to one endpoint;
// non-2xx responses become ApiError with the service's detail string.

import type { Axis } from "./grid";

export interface ClickInfo {
  position: [number, number, number];
  category: number;
}

export interface MaskResponse {
  session_id: string;
  step: number;
  mask_b64: string;
  mask_sha256: string;
  dice?: number[];
}

export interface CreateResponse extends MaskResponse {
  extents: [number, number, number];
  categories: number;
  created: number;
}

export interface StateStep {
  step: number;
  click: ClickInfo | null;
  mask_sha256: string;
  dice?: number[];
}

export interface StateResponse {
  session_id: string;
  created: number;
  extents: [number, number, number];
  categories: number;
  steps: StateStep[];
}

export type SliceLayer = "image" | "auto" | "refined" | "error";

export interface SliceResponse {
  axis: Axis;
  index: number;
  layer: SliceLayer;
  rows: number;
  cols: number;
  values: number[][];
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

export interface Api {
  createSession(volumeB64: string, gtB64?: string): Promise<CreateResponse>;
  addClick(sid: string, position: [number, number, number], category: number,
           step: number): Promise<MaskResponse>;
  undo(sid: string): Promise<MaskResponse>;
  state(sid: string): Promise<StateResponse>;
  slice(sid: string, axis: Axis, index: number, layer: SliceLayer): Promise<SliceResponse>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export function httpApi(base = "", fetchFn: FetchLike = fetch): Api {
  async function call<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetchFn(base + path, init);
    const body = await res.json().catch(() => ({}));
    if (!res.ok) {
      throw new ApiError(res.status, body.detail ?? res.statusText);
    }
    return body as T;
  }

  function post<T>(path: string, payload?: unknown): Promise<T> {
    return call<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: payload === undefined ? undefined : JSON.stringify(payload),
    });
  }

  return {
    createSession(volumeB64, gtB64) {
      const payload: Record<string, string> = { volume_b64: volumeB64 };
      if (gtB64 !== undefined) {
        payload.gt_b64 = gtB64;
      }
      return post("/api/sessions", payload);
    },
    addClick(sid, position, category, step) {
      return post(`/api/sessions/${sid}/clicks`, { position, category, step });
    },
    undo(sid) {
      return post(`/api/sessions/${sid}/undo`);
    },
    state(sid) {
      return call(`/api/sessions/${sid}`);
    },
    slice(sid, axis, index, layer) {
      const query = `axis=${axis}&index=${index}&layer=${layer}`;
      return call(`/api/sessions/${sid}/slice?${query}`);
    },
  };
}
