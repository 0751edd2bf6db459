// Screen/frame coordinate mapping. The canvas shows the frame scaled by
// zoom and shifted by pan (both in screen pixels):
//
//   screen = frame * zoom + pan        frame = (screen - pan) / zoom
//
// Strokes are captured in screen space and stored in frame coordinates,
// so what gets posted is independent of how the user was zoomed.

import type { LayerName } from "./schema";

export interface Viewport {
  zoom: number;
  panX: number;
  panY: number;
}

export const IDENTITY: Viewport = { zoom: 1, panX: 0, panY: 0 };

export function screenToFrame(
  v: Viewport,
  sx: number,
  sy: number,
): [number, number] {
  return [(sx - v.panX) / v.zoom, (sy - v.panY) / v.zoom];
}

export function frameToScreen(
  v: Viewport,
  fx: number,
  fy: number,
): [number, number] {
  return [fx * v.zoom + v.panX, fy * v.zoom + v.panY];
}

// rescale about a screen point so the frame pixel under the cursor stays
// under the cursor
export function zoomAt(
  v: Viewport,
  sx: number,
  sy: number,
  factor: number,
  minZoom = 0.25,
  maxZoom = 32,
): Viewport {
  const zoom = Math.min(maxZoom, Math.max(minZoom, v.zoom * factor));
  const scale = zoom / v.zoom;
  return {
    zoom,
    panX: sx - (sx - v.panX) * scale,
    panY: sy - (sy - v.panY) * scale,
  };
}

export function panBy(v: Viewport, dx: number, dy: number): Viewport {
  return { zoom: v.zoom, panX: v.panX + dx, panY: v.panY + dy };
}

// center the frame in the canvas at the largest zoom that fits
export function fitViewport(
  frameW: number,
  frameH: number,
  canvasW: number,
  canvasH: number,
  margin = 12,
): Viewport {
  const zoom = Math.max(
    0.25,
    Math.min(
      (canvasW - 2 * margin) / frameW,
      (canvasH - 2 * margin) / frameH,
    ),
  );
  return {
    zoom,
    panX: (canvasW - frameW * zoom) / 2,
    panY: (canvasH - frameH * zoom) / 2,
  };
}

// one in-progress or undoable stroke; points live in frame coordinates
export interface CanvasStroke {
  label: LayerName;
  radius: number; // frame pixels
  frameIndex: number;
  points: [number, number][];
}

export function beginStroke(
  label: LayerName,
  radius: number,
  frameIndex: number,
  v: Viewport,
  sx: number,
  sy: number,
): CanvasStroke {
  return { label, radius, frameIndex, points: [screenToFrame(v, sx, sy)] };
}

// pointermove repeats coordinates; consecutive duplicates add nothing to
// the polyline, so drop them at capture time
export function extendStroke(
  stroke: CanvasStroke,
  v: Viewport,
  sx: number,
  sy: number,
): void {
  const p = screenToFrame(v, sx, sy);
  const last = stroke.points[stroke.points.length - 1];
  if (last && last[0] === p[0] && last[1] === p[1]) return;
  stroke.points.push(p);
}
