// Zod mirrors of the service JSON bodies. Every response the client
// consumes and every body it posts passes through one of these, so a
// contract drift fails loudly instead of rendering garbage.

import { z } from "zod";

export const layerName = z.enum(["background", "reflection"]);
export type LayerName = z.infer<typeof layerName>;

export const trackLabel = z.enum(["background", "reflection", "unlabeled"]);
export type TrackLabel = z.infer<typeof trackLabel>;

export const sessionMeta = z.object({
  id: z.string().min(1),
  frame_count: z.number().int().positive(),
  width: z.number().int().positive(),
  height: z.number().int().positive(),
  track_count: z.number().int().nonnegative(),
});
export type SessionMeta = z.infer<typeof sessionMeta>;

export const trackRow = z.object({
  id: z.number().int().nonnegative(),
  x: z.number(),
  y: z.number(),
  label: trackLabel,
});
export type TrackRow = z.infer<typeof trackRow>;

export const tracksPayload = z.object({
  frame: z.number().int().nonnegative(),
  tracks: z.array(trackRow),
});
export type TracksPayload = z.infer<typeof tracksPayload>;

// outbound: one scribble submission for one frame
export const strokeBody = z.object({
  label: layerName,
  radius: z.number().positive().finite(),
  points: z.array(z.tuple([z.number().finite(), z.number().finite()])).min(1),
});
export type StrokeBody = z.infer<typeof strokeBody>;

export const scribbleBody = z.object({
  frame_index: z.number().int().nonnegative(),
  strokes: z.array(strokeBody).min(1),
});
export type ScribbleBody = z.infer<typeof scribbleBody>;

export const scribbleAck = z.object({
  seeds: z.number().int().nonnegative(),
});

export const propagateResult = z.object({
  labels: z.record(z.string(), layerName),
});
export type PropagateResult = z.infer<typeof propagateResult>;

export const jobStatus = z.discriminatedUnion("state", [
  z.object({ state: z.literal("idle") }),
  z.object({
    state: z.literal("running"),
    stage: z.string().min(1),
    progress: z.number().min(0).max(1),
  }),
  z.object({
    state: z.literal("done"),
    result: z.object({ background: z.string(), reflection: z.string() }),
  }),
  z.object({
    state: z.literal("failed"),
    error: z.object({ code: z.string(), message: z.string() }).passthrough(),
  }),
]);
export type JobStatus = z.infer<typeof jobStatus>;

// every failure body is flat {code, message} plus optional context
export const apiErrorBody = z
  .object({ code: z.string(), message: z.string() })
  .passthrough();
export type ApiErrorBody = z.infer<typeof apiErrorBody>;
