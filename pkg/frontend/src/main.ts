// View wiring only: all state transitions live in state.ts, math in
// transform.ts, network in api.ts. Nothing algorithmic happens here.

import { ApiError, Client } from "./api";
import { drawScene } from "./render";
import type { JobStatus, LayerName } from "./schema";
import { sessionMeta } from "./schema";
import {
  beginRequest,
  clampFrame,
  endRequest,
  initialState,
  pushStroke,
  strokesOnFrame,
  toScribbleBodies,
  undoStroke,
} from "./state";
import type { CanvasStroke, Viewport } from "./transform";
import {
  beginStroke,
  extendStroke,
  fitViewport,
  IDENTITY,
  panBy,
  zoomAt,
} from "./transform";
import "./style.css";

const api = new Client("");
const state = initialState();
let viewport: Viewport = IDENTITY;
let activeStroke: CanvasStroke | null = null;
let brushLabel: LayerName = "background";
let panning: { x: number; y: number } | null = null;

const frameCache = new Map<number, HTMLImageElement>();

const $ = <T extends HTMLElement>(sel: string): T => {
  const el = document.querySelector<T>(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el;
};

const canvas = $<HTMLCanvasElement>("#view");
const ctx = canvas.getContext("2d")!;
const statusBar = $<HTMLDivElement>("#status");
const frameSlider = $<HTMLInputElement>("#frame");
const frameLabel = $<HTMLSpanElement>("#frame-label");
const radiusInput = $<HTMLInputElement>("#radius");
const results = $<HTMLDivElement>("#results");
const resultSlider = $<HTMLInputElement>("#result-frame");
const playButton = $<HTMLButtonElement>("#play");

function setStatus(text: string): void {
  state.statusText = text;
  statusBar.textContent = text;
}

function showError(err: unknown): void {
  // service failures go to the status bar verbatim
  if (err instanceof ApiError) setStatus(`${err.code}: ${err.message}`);
  else setStatus(String(err));
}

function redraw(): void {
  const img = frameCache.get(state.frame) ?? null;
  const strokes = strokesOnFrame(state.pending, state.frame);
  drawScene(ctx, img, state.tracks, activeStroke && activeStroke.frameIndex === state.frame
    ? [...strokes, activeStroke]
    : strokes, viewport);
}

function loadFrameImage(n: number): void {
  if (!state.session || frameCache.has(n)) return;
  const img = new Image();
  img.onload = () => {
    frameCache.set(n, img);
    if (n === state.frame) redraw();
  };
  img.src = api.frameUrl(state.session.id, n);
}

async function refreshTracks(): Promise<void> {
  if (!state.session) return;
  const payload = await api.tracks(state.session.id, state.frame);
  state.tracks = payload.tracks;
  redraw();
}

async function gotoFrame(n: number): Promise<void> {
  state.frame = clampFrame(state, n);
  frameSlider.value = String(state.frame);
  frameLabel.textContent = state.session
    ? `${state.frame + 1}/${state.session.frame_count}`
    : "-";
  loadFrameImage(state.frame);
  try {
    await refreshTracks();
  } catch (err) {
    showError(err);
  }
}

// --- session ---------------------------------------------------------------

async function openSession(framesDir: string): Promise<void> {
  frameCache.clear();
  state.pending.length = 0;
  state.tracks = [];
  try {
    const meta = await api.createSession(framesDir);
    state.session = meta;
    sessionStorage.setItem("reflect-session", JSON.stringify(meta));
    frameSlider.max = String(meta.frame_count - 1);
    viewport = fitViewport(meta.width, meta.height, canvas.width, canvas.height);
    setStatus(
      `session ${meta.id}: ${meta.frame_count} frames, ${meta.track_count} tracks`,
    );
    results.hidden = true;
    await gotoFrame(0);
  } catch (err) {
    showError(err);
  }
}

// reloading mid-session restores the same view from the service: the
// only client-side memory is which session to re-fetch
async function restoreSession(): Promise<void> {
  const stored = sessionStorage.getItem("reflect-session");
  if (!stored) return;
  const parsed = sessionMeta.safeParse(JSON.parse(stored));
  if (!parsed.success) return;
  state.session = parsed.data;
  frameSlider.max = String(parsed.data.frame_count - 1);
  viewport = fitViewport(
    parsed.data.width,
    parsed.data.height,
    canvas.width,
    canvas.height,
  );
  try {
    await gotoFrame(0);
    setStatus(`session ${parsed.data.id} restored`);
    const status = await api.status(parsed.data.id);
    if (status.state === "done") showResults();
    else if (status.state === "running") void trackJob();
  } catch {
    // stale session (service restarted): start fresh
    sessionStorage.removeItem("reflect-session");
    state.session = null;
    setStatus("no session");
  }
}

// --- scribbles and propagation ----------------------------------------------

async function propagate(): Promise<void> {
  if (!state.session) return setStatus("load a session first");
  if (!beginRequest(state, "propagate")) return;
  const sid = state.session.id;
  try {
    for (const body of toScribbleBodies(state.pending)) {
      state.seeds = await api.postScribbles(sid, body);
    }
    state.pending.length = 0; // committed server-side, undo stack resets
    setStatus(`${state.seeds} seeds, propagating...`);
    await api.propagate(sid);
    await refreshTracks();
    setStatus(`${state.seeds} seeds, labels updated`);
  } catch (err) {
    showError(err);
  } finally {
    endRequest(state);
  }
}

// --- separation job ----------------------------------------------------------

function jobText(s: JobStatus): string {
  if (s.state === "running")
    return `separating: ${s.stage} ${(100 * s.progress).toFixed(0)}%`;
  if (s.state === "failed") return `${s.error.code}: ${s.error.message}`;
  return s.state;
}

async function trackJob(): Promise<void> {
  if (!state.session) return;
  const finished = await api.waitForJob(state.session.id, (s) => {
    state.job = s;
    setStatus(jobText(s));
  });
  if (finished.state === "done") showResults();
}

async function separate(): Promise<void> {
  if (!state.session) return setStatus("load a session first");
  if (!beginRequest(state, "separate")) return;
  try {
    await api.separate(state.session.id);
    await trackJob();
  } catch (err) {
    showError(err);
  } finally {
    endRequest(state);
  }
}

// --- results players ---------------------------------------------------------

let playTimer: number | null = null;

function setResultFrame(n: number): void {
  if (!state.session) return;
  const sid = state.session.id;
  $<HTMLImageElement>("#player-input").src = api.frameUrl(sid, n);
  $<HTMLImageElement>("#player-background").src = api.resultUrl(sid, "background", n);
  $<HTMLImageElement>("#player-reflection").src = api.resultUrl(sid, "reflection", n);
  $<HTMLSpanElement>("#result-label").textContent =
    `${n + 1}/${state.session.frame_count}`;
}

function showResults(): void {
  if (!state.session) return;
  results.hidden = false;
  resultSlider.max = String(state.session.frame_count - 1);
  resultSlider.value = "0";
  setResultFrame(0);
}

function togglePlay(): void {
  if (playTimer !== null) {
    clearInterval(playTimer);
    playTimer = null;
    playButton.textContent = "play";
    return;
  }
  playButton.textContent = "pause";
  playTimer = window.setInterval(() => {
    if (!state.session) return;
    const next = (Number(resultSlider.value) + 1) % state.session.frame_count;
    resultSlider.value = String(next);
    setResultFrame(next);
  }, 150);
}

// --- input wiring --------------------------------------------------------------

$<HTMLButtonElement>("#load").addEventListener("click", () => {
  void openSession($<HTMLInputElement>("#frames-dir").value.trim());
});

frameSlider.addEventListener("input", () => {
  void gotoFrame(Number(frameSlider.value));
});
$<HTMLButtonElement>("#prev").addEventListener("click", () => {
  void gotoFrame(state.frame - 1);
});
$<HTMLButtonElement>("#next").addEventListener("click", () => {
  void gotoFrame(state.frame + 1);
});

for (const name of ["background", "reflection"] as const) {
  $<HTMLInputElement>(`#brush-${name}`).addEventListener("change", () => {
    brushLabel = name;
  });
}

$<HTMLButtonElement>("#undo").addEventListener("click", () => {
  undoStroke(state);
  redraw();
});
$<HTMLButtonElement>("#propagate").addEventListener("click", () => {
  void propagate();
});
$<HTMLButtonElement>("#separate").addEventListener("click", () => {
  void separate();
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  const rect = canvas.getBoundingClientRect();
  const factor = ev.deltaY < 0 ? 1.2 : 1 / 1.2;
  viewport = zoomAt(viewport, ev.clientX - rect.left, ev.clientY - rect.top, factor);
  redraw();
});

canvas.addEventListener("pointerdown", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const sx = ev.clientX - rect.left;
  const sy = ev.clientY - rect.top;
  canvas.setPointerCapture(ev.pointerId);
  if (ev.button === 1 || ev.shiftKey) {
    panning = { x: sx, y: sy };
    return;
  }
  if (!state.session) return;
  activeStroke = beginStroke(
    brushLabel,
    Number(radiusInput.value),
    state.frame,
    viewport,
    sx,
    sy,
  );
  redraw();
});

canvas.addEventListener("pointermove", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const sx = ev.clientX - rect.left;
  const sy = ev.clientY - rect.top;
  if (panning) {
    viewport = panBy(viewport, sx - panning.x, sy - panning.y);
    panning = { x: sx, y: sy };
    redraw();
    return;
  }
  if (activeStroke) {
    extendStroke(activeStroke, viewport, sx, sy);
    redraw();
  }
});

canvas.addEventListener("pointerup", () => {
  panning = null;
  if (activeStroke) {
    pushStroke(state, activeStroke);
    activeStroke = null;
    redraw();
  }
});

resultSlider.addEventListener("input", () => {
  setResultFrame(Number(resultSlider.value));
});
playButton.addEventListener("click", togglePlay);

redraw();
void restoreSession();
