// Canvas drawing: the current frame under the viewport transform, track
// dots colored by label, and any pending strokes on this frame.

import type { TrackRow } from "./schema";
import type { CanvasStroke, Viewport } from "./transform";
import { frameToScreen } from "./transform";

export const DOT_COLORS: Record<TrackRow["label"], string> = {
  background: "#2f6fdf", // blue
  reflection: "#d64545", // red
  unlabeled: "#9aa0a6", // gray
};

export const STROKE_COLORS = {
  background: "rgba(47, 111, 223, 0.65)",
  reflection: "rgba(214, 69, 69, 0.65)",
} as const;

export function drawScene(
  ctx: CanvasRenderingContext2D,
  image: CanvasImageSource | null,
  tracks: TrackRow[],
  strokes: CanvasStroke[],
  v: Viewport,
): void {
  const { width, height } = ctx.canvas;
  ctx.save();
  ctx.fillStyle = "#16181c";
  ctx.fillRect(0, 0, width, height);

  if (image) {
    ctx.imageSmoothingEnabled = v.zoom < 1;
    ctx.setTransform(v.zoom, 0, 0, v.zoom, v.panX, v.panY);
    ctx.drawImage(image, 0, 0);
    ctx.setTransform(1, 0, 0, 1, 0, 0);
  }

  for (const stroke of strokes) {
    ctx.strokeStyle = STROKE_COLORS[stroke.label];
    ctx.lineWidth = Math.max(1, 2 * stroke.radius * v.zoom);
    ctx.lineCap = "round";
    ctx.lineJoin = "round";
    ctx.beginPath();
    stroke.points.forEach(([fx, fy], i) => {
      const [sx, sy] = frameToScreen(v, fx, fy);
      if (i === 0) ctx.moveTo(sx, sy);
      else ctx.lineTo(sx, sy);
    });
    if (stroke.points.length === 1) {
      // a dab: zero-length paths do not stroke, draw the cap by hand
      const p = stroke.points[0]!;
      const [sx, sy] = frameToScreen(v, p[0], p[1]);
      ctx.fillStyle = STROKE_COLORS[stroke.label];
      ctx.beginPath();
      ctx.arc(sx, sy, Math.max(1, stroke.radius * v.zoom), 0, 2 * Math.PI);
      ctx.fill();
    } else {
      ctx.stroke();
    }
  }

  for (const t of tracks) {
    const [sx, sy] = frameToScreen(v, t.x, t.y);
    ctx.fillStyle = DOT_COLORS[t.label];
    ctx.strokeStyle = "#111";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.arc(sx, sy, 3.5, 0, 2 * Math.PI);
    ctx.fill();
    ctx.stroke();
  }
  ctx.restore();
}
