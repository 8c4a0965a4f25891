// SSE parsing and the journal stream client: arbitrary chunk boundaries,
// keep-alive comments, and duplicate suppression when a resume replays
// entries the client already applied.

import { describe, expect, test } from "vitest";

import { SseParser, streamJournal } from "../src/sse.js";
import type { JournalEventView } from "../src/types.js";

describe("SseParser", () => {
  test("frames split across chunks reassemble", () => {
    const parser = new SseParser();
    expect(parser.feed("id: 4\nda")).toEqual([]);
    expect(parser.feed('ta: {"seq":4}\n')).toEqual([]);
    expect(parser.feed("\n")).toEqual([{ id: "4", data: '{"seq":4}' }]);
  });

  test("comment lines are ignored", () => {
    const parser = new SseParser();
    const frames = parser.feed(": keep-alive\n\nid: 1\ndata: x\n\n");
    expect(frames).toEqual([{ id: "1", data: "x" }]);
  });

  test("multiple data lines join with newline", () => {
    const parser = new SseParser();
    const frames = parser.feed("data: a\ndata: b\n\n");
    expect(frames).toEqual([{ id: undefined, data: "a\nb" }]);
  });

  test("crlf line endings parse the same", () => {
    const parser = new SseParser();
    const frames = parser.feed("id: 9\r\ndata: y\r\n\r\n");
    expect(frames).toEqual([{ id: "9", data: "y" }]);
  });
});

function sseBody(...events: { seq: number; kind: string }[]): string {
  return events
    .map((e) => `id: ${e.seq}\ndata: ${JSON.stringify({ ...e, data: {} })}\n\n`)
    .join("");
}

function streamResponse(body: string): Response {
  const stream = new ReadableStream<Uint8Array>({
    start(controller) {
      controller.enqueue(new TextEncoder().encode(body));
      controller.close();
    },
  });
  return new Response(stream, {
    status: 200,
    headers: { "content-type": "text/event-stream" },
  });
}

describe("streamJournal", () => {
  test("delivers events in order and resolves on clean close", async () => {
    const seen: number[] = [];
    const fetchImpl = (async () =>
      streamResponse(
        sseBody({ seq: 1, kind: "a" }, { seq: 2, kind: "b" }),
      )) as unknown as typeof fetch;
    const handle = streamJournal(
      "http://unit.test/stream",
      (e: JournalEventView) => seen.push(e.seq),
      { fetchImpl },
    );
    await handle.done;
    expect(seen).toEqual([1, 2]);
    expect(handle.lastSeq()).toBe(2);
  });

  test("drops duplicates below the resume point", async () => {
    const seen: number[] = [];
    const fetchImpl = (async () =>
      streamResponse(
        sseBody({ seq: 3, kind: "a" }, { seq: 4, kind: "b" }, { seq: 5, kind: "c" }),
      )) as unknown as typeof fetch;
    const handle = streamJournal(
      "http://unit.test/stream",
      (e: JournalEventView) => seen.push(e.seq),
      { fetchImpl, since: 4 },
    );
    await handle.done;
    expect(seen).toEqual([5]);
  });

  test("reconnects with last-event-id after a mid-stream failure", async () => {
    const seen: number[] = [];
    const lastIds: string[] = [];
    let call = 0;
    const fetchImpl = (async (_url: unknown, init?: RequestInit) => {
      const headers = init?.headers as Record<string, string>;
      lastIds.push(headers["last-event-id"] ?? "");
      call += 1;
      if (call === 1) {
        // deliver one chunk, then fail the connection on the next read
        let pulls = 0;
        const stream = new ReadableStream<Uint8Array>({
          pull(controller) {
            pulls += 1;
            if (pulls === 1) {
              controller.enqueue(
                new TextEncoder().encode(sseBody({ seq: 1, kind: "a" })),
              );
            } else {
              controller.error(new Error("connection lost"));
            }
          },
        });
        return new Response(stream, { status: 200 });
      }
      return streamResponse(sseBody({ seq: 2, kind: "b" }));
    }) as unknown as typeof fetch;

    const handle = streamJournal(
      "http://unit.test/stream",
      (e: JournalEventView) => seen.push(e.seq),
      { fetchImpl, retryDelayMs: 1 },
    );
    await handle.done;
    expect(seen).toEqual([1, 2]);
    expect(lastIds).toEqual(["0", "1"]);
  });
});
