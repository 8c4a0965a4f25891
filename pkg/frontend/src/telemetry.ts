// Live traffic state: reduce journal entries into per-UAV markers and an
// event ticker. Telemetry is decimated to display rate (only the newest
// frame between renders is applied); discrete events are never dropped.

import type {
  JournalEventView,
  Severity,
  UavHealth,
  UavMode,
} from "./types.js";

export interface TelemetryRow {
  t: number;
  uavId: string;
  lane: string;
  s: number;
  lateral: number;
  vertical: number;
  speed: number;
  mode: UavMode;
  health: UavHealth;
}

// Row format: t,uav_id,lane,s,lateral,vertical,speed,mode,health
export function parseTelemetryRow(row: string): TelemetryRow {
  const parts = row.split(",");
  if (parts.length !== 9) {
    throw new Error(`telemetry row needs 9 fields, got ${parts.length}`);
  }
  return {
    t: Number(parts[0]),
    uavId: parts[1] as string,
    lane: parts[2] as string,
    s: Number(parts[3]),
    lateral: Number(parts[4]),
    vertical: Number(parts[5]),
    speed: Number(parts[6]),
    mode: parts[7] as UavMode,
    health: parts[8] as UavHealth,
  };
}

export interface UavMarker extends TelemetryRow {
  // Journal seq of the telemetry entry this marker came from.
  seq: number;
}

export interface TickerEntry {
  seq: number; // journal seq; AcknowledgeWarning takes this id
  t: number;
  kind: string;
  uavId: string;
  severity?: Severity;
  detail: Record<string, string>;
  acknowledged: boolean;
}

const TICKER_SKIP = new Set(["t", "seq", "kind", "uav", "severity"]);

export class TrafficState {
  markers = new Map<string, UavMarker>();
  ticker: TickerEntry[] = [];
  telemetrySeq = 0;

  constructor(acknowledged: Iterable<number> = []) {
    this.acked = new Set(acknowledged);
  }

  private acked: Set<number>;

  apply(event: JournalEventView): void {
    if (event.kind === "telemetry") {
      const rows = event.data["rows"] as string[] | undefined;
      for (const row of rows ?? []) {
        const parsed = parseTelemetryRow(row);
        this.markers.set(parsed.uavId, { ...parsed, seq: event.seq });
      }
      this.telemetrySeq = event.seq;
      return;
    }
    if (event.kind === "sim_event") {
      const data = event.data;
      const detail: Record<string, string> = {};
      for (const [key, value] of Object.entries(data)) {
        if (!TICKER_SKIP.has(key)) {
          detail[key] = String(value);
        }
      }
      this.ticker.push({
        seq: event.seq,
        t: Number(data["t"] ?? 0),
        kind: String(data["kind"] ?? ""),
        uavId: String(data["uav"] ?? ""),
        severity: data["severity"] as Severity | undefined,
        detail,
        acknowledged: this.acked.has(event.seq),
      });
      return;
    }
    if (event.kind === "warning_acknowledged") {
      const id = Number(event.data["event_id"]);
      this.acked.add(id);
      for (const entry of this.ticker) {
        if (entry.seq === id) {
          entry.acknowledged = true;
        }
      }
    }
  }

  unacknowledgedSafety(): TickerEntry[] {
    return this.ticker.filter(
      (e) => e.severity === "Safety" && !e.acknowledged,
    );
  }

  activeMarkers(): UavMarker[] {
    return [...this.markers.values()].filter(
      (m) => m.mode !== "Done" && m.mode !== "Aborted",
    );
  }
}

export interface DrainResult {
  events: JournalEventView[];
  telemetry: JournalEventView | null;
  droppedFrames: number;
}

// Buffer between the stream and the render loop. Telemetry entries collapse
// to the newest one per drain; every other journal entry is kept in order.
export class DecimatedFeed {
  private events: JournalEventView[] = [];
  private pendingTelemetry: JournalEventView | null = null;
  private dropped = 0;

  push(event: JournalEventView): void {
    if (event.kind === "telemetry") {
      if (this.pendingTelemetry !== null) {
        this.dropped += 1;
      }
      this.pendingTelemetry = event;
      return;
    }
    this.events.push(event);
  }

  drain(): DrainResult {
    const result: DrainResult = {
      events: this.events,
      telemetry: this.pendingTelemetry,
      droppedFrames: this.dropped,
    };
    this.events = [];
    this.pendingTelemetry = null;
    this.dropped = 0;
    return result;
  }

  // Apply one drain to a TrafficState: retained events first (their order is
  // the journal order), then the newest telemetry frame.
  applyTo(state: TrafficState): DrainResult {
    const result = this.drain();
    for (const event of result.events) {
      state.apply(event);
    }
    if (result.telemetry !== null) {
      state.apply(result.telemetry);
    }
    return result;
  }
}
