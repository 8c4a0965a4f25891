// Server-Sent Events over a streaming fetch. The console uses fetch rather
// than EventSource so the same code runs in the browser and in tests, and so
// a broken connection can resume with Last-Event-ID.

import type { JournalEventView } from "./types.js";

export interface SseFrame {
  id?: string;
  data: string;
}

// Incremental parser: feed() arbitrary chunk boundaries, get completed
// frames. Comment lines (leading ':') are keep-alives and produce nothing.
export class SseParser {
  private buffer = "";
  private dataLines: string[] = [];
  private id: string | undefined;

  feed(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    for (;;) {
      const nl = this.buffer.indexOf("\n");
      if (nl < 0) {
        break;
      }
      let line = this.buffer.slice(0, nl);
      this.buffer = this.buffer.slice(nl + 1);
      if (line.endsWith("\r")) {
        line = line.slice(0, -1);
      }
      if (line === "") {
        if (this.dataLines.length > 0) {
          frames.push({ id: this.id, data: this.dataLines.join("\n") });
        }
        this.dataLines = [];
        this.id = undefined;
        continue;
      }
      if (line.startsWith(":")) {
        continue;
      }
      const colon = line.indexOf(":");
      const field = colon < 0 ? line : line.slice(0, colon);
      let value = colon < 0 ? "" : line.slice(colon + 1);
      if (value.startsWith(" ")) {
        value = value.slice(1);
      }
      if (field === "data") {
        this.dataLines.push(value);
      } else if (field === "id") {
        this.id = value;
      }
    }
    return frames;
  }
}

export interface StreamOptions {
  since?: number;
  signal?: AbortSignal;
  fetchImpl?: typeof fetch;
  // Wall-clock pause before reconnecting after a dropped connection.
  retryDelayMs?: number;
}

export interface StreamHandle {
  done: Promise<void>;
  lastSeq(): number;
}

function wait(ms: number, signal?: AbortSignal): Promise<void> {
  return new Promise((resolve) => {
    const t = setTimeout(resolve, ms);
    signal?.addEventListener("abort", () => {
      clearTimeout(t);
      resolve();
    });
  });
}

// Subscribe to a mission journal stream. onEvent fires once per journal
// entry in sequence order; duplicates after a resume are dropped. The
// returned promise resolves when the server ends the stream (mission
// released or `until` reached) or the signal aborts.
export function streamJournal(
  url: string,
  onEvent: (event: JournalEventView) => void,
  options: StreamOptions = {},
): StreamHandle {
  const fetchImpl = options.fetchImpl ?? fetch;
  let last = options.since ?? 0;

  const done = (async () => {
    for (;;) {
      if (options.signal?.aborted) {
        return;
      }
      let response: Response;
      try {
        response = await fetchImpl(url, {
          headers: { "last-event-id": String(last), accept: "text/event-stream" },
          signal: options.signal,
        });
      } catch (err) {
        if (options.signal?.aborted) {
          return;
        }
        await wait(options.retryDelayMs ?? 1000, options.signal);
        continue;
      }
      if (!response.ok || response.body === null) {
        return;
      }
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      const parser = new SseParser();
      let clean = true;
      try {
        for (;;) {
          const { done: eof, value } = await reader.read();
          if (eof) {
            break;
          }
          for (const frame of parser.feed(decoder.decode(value, { stream: true }))) {
            const event = JSON.parse(frame.data) as JournalEventView;
            if (event.seq <= last) {
              continue; // duplicate from resume
            }
            last = event.seq;
            onEvent(event);
          }
        }
      } catch (err) {
        clean = false;
      }
      if (clean || options.signal?.aborted) {
        return; // server closed the stream on purpose
      }
      await wait(options.retryDelayMs ?? 1000, options.signal);
    }
  })();

  return { done, lastSeq: () => last };
}
