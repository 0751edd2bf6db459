import { readFileSync } from "node:fs";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { ApiError, Client } from "../src/api";

const recorded = (name: string): unknown =>
  JSON.parse(
    readFileSync(join(__dirname, "fixtures", "recorded", name), "utf8"),
  );

type Route = { status: number; body: unknown };

function clientFor(routes: Record<string, Route>, calls: string[] = []) {
  return new Client("", async (url, init) => {
    calls.push(`${init?.method ?? "GET"} ${url}`);
    const route = routes[url];
    if (!route) throw new Error(`unexpected request ${url}`);
    return new Response(JSON.stringify(route.body), {
      status: route.status,
      headers: { "content-type": "application/json" },
    });
  });
}

describe("client happy paths", () => {
  it("creates a session from a recorded response", async () => {
    const calls: string[] = [];
    const client = clientFor(
      { "/sessions": { status: 201, body: recorded("session_created.json") } },
      calls,
    );
    const meta = await client.createSession("/data/frames");
    expect(meta.frame_count).toBe(12);
    expect(calls).toEqual(["POST /sessions"]);
  });

  it("fetches typed tracks", async () => {
    const client = clientFor({
      "/sessions/abc/tracks/0": {
        status: 200,
        body: recorded("tracks_labeled.json"),
      },
    });
    const payload = await client.tracks("abc", 0);
    expect(payload.frame).toBe(0);
    expect(payload.tracks.length).toBeGreaterThan(0);
  });

  it("posts scribbles and returns the seed count", async () => {
    const client = clientFor({
      "/sessions/abc/scribbles": {
        status: 200,
        body: recorded("scribble_ack.json"),
      },
    });
    const seeds = await client.postScribbles("abc", {
      frame_index: 0,
      strokes: [{ label: "background", radius: 4, points: [[1, 1]] }],
    });
    expect(seeds).toBe(2);
  });

  it("polls a job to completion", async () => {
    let polls = 0;
    const client = new Client("", async () => {
      polls += 1;
      const body =
        polls < 3 ? recorded("status_running.json") : recorded("status_done.json");
      return new Response(JSON.stringify(body), { status: 200 });
    });
    const seen: string[] = [];
    const final = await client.waitForJob("abc", (s) => seen.push(s.state), 1);
    expect(final.state).toBe("done");
    expect(seen).toEqual(["running", "running", "done"]);
  });
});

describe("client error handling", () => {
  it("surfaces service error bodies verbatim", async () => {
    const client = clientFor({
      "/sessions/nope/status": {
        status: 404,
        body: recorded("error_unknown_session.json"),
      },
    });
    const err = await client.status("nope").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    const apiErr = err as ApiError;
    expect(apiErr.status).toBe(404);
    expect(apiErr.code).toBe("unknown-session");
    expect(apiErr.message).toContain("nope");
  });

  it("keeps the conflicting-scribbles code intact", async () => {
    const client = clientFor({
      "/sessions/abc/scribbles": {
        status: 422,
        body: recorded("error_conflicting_scribbles.json"),
      },
    });
    const err = await client
      .postScribbles("abc", {
        frame_index: 0,
        strokes: [{ label: "reflection", radius: 4, points: [[18, 24]] }],
      })
      .catch((e: unknown) => e);
    expect((err as ApiError).code).toBe("conflicting-scribbles");
  });

  it("rejects a drifted response shape", async () => {
    const client = clientFor({
      "/sessions/abc/scribbles": { status: 200, body: { seeds: "two" } },
    });
    await expect(
      client.postScribbles("abc", {
        frame_index: 0,
        strokes: [{ label: "background", radius: 4, points: [[1, 1]] }],
      }),
    ).rejects.toThrow();
  });

  it("refuses to post an invalid body at all", async () => {
    const calls: string[] = [];
    const client = clientFor({}, calls);
    await expect(
      client.postScribbles("abc", {
        frame_index: 0,
        strokes: [],
      } as never),
    ).rejects.toThrow();
    expect(calls).toEqual([]); // nothing hit the wire
  });

  it("copes with non-JSON failure responses", async () => {
    const client = new Client(
      "",
      async () => new Response("gateway exploded", { status: 502, statusText: "Bad Gateway" }),
    );
    const err = await client.status("abc").catch((e: unknown) => e);
    expect((err as ApiError).code).toBe("error");
    expect((err as ApiError).status).toBe(502);
  });
});
