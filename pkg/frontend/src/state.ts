// Client state. Everything algorithmic lives server-side; the only local
// state is the stack of strokes not yet posted (for undo), the current
// view, and bookkeeping for the single in-flight request.

import type { JobStatus, ScribbleBody, SessionMeta, TrackRow } from "./schema";
import type { CanvasStroke } from "./transform";

export type Busy = "propagate" | "separate" | null;

export interface AppState {
  session: SessionMeta | null;
  frame: number;
  tracks: TrackRow[]; // dots for the current frame
  pending: CanvasStroke[]; // undo stack, oldest first, not yet posted
  seeds: number; // seed count acknowledged by the service
  busy: Busy;
  job: JobStatus;
  statusText: string;
}

export function initialState(): AppState {
  return {
    session: null,
    frame: 0,
    tracks: [],
    pending: [],
    seeds: 0,
    busy: null,
    job: { state: "idle" },
    statusText: "no session",
  };
}

export function pushStroke(state: AppState, stroke: CanvasStroke): void {
  state.pending.push(stroke);
}

export function undoStroke(state: AppState): CanvasStroke | undefined {
  return state.pending.pop();
}

// at most one propagate or separate on the wire at a time
export function beginRequest(state: AppState, kind: Exclude<Busy, null>): boolean {
  if (state.busy !== null) return false;
  state.busy = kind;
  return true;
}

export function endRequest(state: AppState): void {
  state.busy = null;
}

export function clampFrame(state: AppState, frame: number): number {
  const last = state.session ? state.session.frame_count - 1 : 0;
  return Math.min(last, Math.max(0, Math.round(frame)));
}

// group the pending stack into one service body per frame, ascending;
// single-point strokes are valid (a dab seeds whatever it touches)
export function toScribbleBodies(pending: CanvasStroke[]): ScribbleBody[] {
  const byFrame = new Map<number, CanvasStroke[]>();
  for (const stroke of pending) {
    if (stroke.points.length === 0) continue;
    const group = byFrame.get(stroke.frameIndex);
    if (group) group.push(stroke);
    else byFrame.set(stroke.frameIndex, [stroke]);
  }
  return [...byFrame.keys()].sort((a, b) => a - b).map((frameIndex) => ({
    frame_index: frameIndex,
    strokes: byFrame.get(frameIndex)!.map((s) => ({
      label: s.label,
      radius: s.radius,
      points: s.points.map((p) => [p[0], p[1]] as [number, number]),
    })),
  }));
}

export function strokesOnFrame(
  pending: CanvasStroke[],
  frame: number,
): CanvasStroke[] {
  return pending.filter((s) => s.frameIndex === frame);
}
