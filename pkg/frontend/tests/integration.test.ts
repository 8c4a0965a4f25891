// @vitest-environment node
// Round-trip against the real service (in-process airspace authority):
// submit a mission, verify the rendered option ranking matches the API,
// verify every control is disabled exactly in the statuses the service
// rejects, and verify a commanded landing shows up in the live view within
// one stream update. Needs the Python package installed (pip install -e .).

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { Window } from "happy-dom";
import { afterAll, beforeAll, describe, expect, test } from "vitest";

import { ApiError, GcsClient } from "../src/api.js";
import { ALL_CONTROLS, controlEnabled, type OperatorControl } from "../src/gating.js";
import { MissionStore } from "../src/state.js";
import { TrafficState, parseTelemetryRow } from "../src/telemetry.js";
import { streamJournal, type StreamHandle } from "../src/sse.js";
import { renderMissionView } from "../src/views/mission.js";
import { renderTrafficView } from "../src/views/traffic.js";
import type {
  JournalEventView,
  MissionRecordView,
  MissionStatus,
  OptionView,
} from "../src/types.js";

const PORT = 8300 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

// The views only need a document; the rest of the suite runs plain node so
// the real (streaming) fetch stays in place.
const dom = new Window();
globalThis.document = dom.document as unknown as Document;

let server: ChildProcess;
let serverLog = "";
let dataDir: string;
const client = new GcsClient(BASE);
const openStreams: AbortController[] = [];

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function until<T>(
  probe: () => T | null | Promise<T | null>,
  label: string,
  timeoutMs = 60_000,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = await probe();
    if (value !== null) {
      return value;
    }
    if (Date.now() > deadline) {
      throw new Error(`timed out waiting for ${label}\nserver log:\n${serverLog}`);
    }
    await sleep(50);
  }
}

async function waitForStatus(
  missionId: string,
  status: MissionStatus,
): Promise<MissionRecordView> {
  return until(async () => {
    const record = await client.getMission(missionId);
    return record.status === status ? record : null;
  }, `mission ${missionId} to reach ${status}`);
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), "console-int-"));
  server = spawn(
    "python3",
    [
      "-m", "dronecorridor.cli", "serve",
      "--host", "127.0.0.1",
      "--port", String(PORT),
      "--data", dataDir,
      "--step-interval", "0.005",
    ],
    { cwd: dataDir, stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stdout?.on("data", (chunk: Buffer) => { serverLog += chunk.toString(); });
  server.stderr?.on("data", (chunk: Buffer) => { serverLog += chunk.toString(); });
  await until(async () => {
    try {
      const reply = await client.health();
      return reply.status === "ok" ? reply : null;
    } catch {
      return null;
    }
  }, "service /healthz", 30_000);
});

afterAll(async () => {
  for (const controller of openStreams) {
    controller.abort();
  }
  if (server !== undefined && server.exitCode === null) {
    const exited = new Promise<void>((resolve) => server.once("exit", () => resolve()));
    server.kill("SIGTERM");
    await Promise.race([exited, sleep(5_000).then(() => server.kill("SIGKILL"))]);
  }
  rmSync(dataDir, { recursive: true, force: true });
});

const FORM = {
  start: { east: 0, north: 0, up: 0 },
  destination: { east: 600, north: 0, up: 0 },
  altitude: 60,
  expected_throughput: 400,
  utility: "LastMile",
  desired_duration: 120,
  time_of_day: "09:00",
};

const NOOP = {
  generateOptions: () => {},
  select: () => {},
  negotiate: () => {},
  activate: () => {},
  abort: () => {},
  release: () => {},
};

// One API call per control, with arguments that are harmless when the
// service rejects on status (status is always checked before payload ids).
function attempts(missionId: string): Record<OperatorControl, () => Promise<unknown>> {
  return {
    GenerateOptions: () => client.generateOptions(missionId),
    SelectOption: () => client.selectOption(missionId, "OPT1"),
    Negotiate: () => client.negotiate(missionId, "OPT1"),
    Activate: () => client.activate(missionId),
    AbortMission: () => client.abortMission(missionId),
    CommandLanding: () => client.commandLanding(missionId, "U9999"),
    Release: () => client.release(missionId),
  };
}

// For every control the gating table disables at this status, the live
// service must reject with 409 and leave the mission where it was; the
// rendered mission view must have the matching buttons disabled.
async function verifyGating(missionId: string, status: MissionStatus): Promise<void> {
  const calls = attempts(missionId);
  for (const control of ALL_CONTROLS) {
    if (controlEnabled(control, status)) {
      continue;
    }
    let rejected: ApiError | null = null;
    try {
      await calls[control]();
    } catch (err) {
      expect(err, `${control} at ${status}`).toBeInstanceOf(ApiError);
      rejected = err as ApiError;
    }
    expect(rejected, `${control} must be refused at ${status}`).not.toBeNull();
    expect(rejected?.status, `${control} at ${status}`).toBe(409);
  }
  const record = await client.getMission(missionId);
  expect(record.status, "a refused command must not move the mission").toBe(status);

  const view = renderMissionView(new MissionStore(structuredClone(record)), NOOP);
  for (const control of ALL_CONTROLS) {
    if (control === "CommandLanding") {
      continue; // rendered in the traffic roster, asserted separately
    }
    const buttons = [
      ...view.querySelectorAll<HTMLButtonElement>(`button[data-control="${control}"]`),
    ];
    for (const button of buttons) {
      expect(button.disabled, `${control} button at ${status}`).toBe(
        !controlEnabled(control, status),
      );
    }
    if (controlEnabled(control, status) && control !== "SelectOption"
        && control !== "Negotiate") {
      expect(buttons.length, `${control} button missing at ${status}`).toBeGreaterThan(0);
    }
  }
}

describe("console round-trip against the live service", () => {
  let missionId = "";
  let draftRecord: MissionRecordView;
  let rankedByApi: string[] = [];
  let activePlan: OptionView | null = null;
  let events: JournalEventView[] = [];
  let stream: StreamHandle;
  let ackedSeq = -1;

  test("submit: mission created in Draft, only GenerateOptions live", async () => {
    const created = await client.createMission(FORM);
    missionId = created.mission_id;
    expect(missionId).toMatch(/^M\d+/);
    draftRecord = structuredClone(await client.getMission(missionId));
    expect(draftRecord.status).toBe("Draft");
    await verifyGating(missionId, "Draft");
  });

  test("options rendered with the same ranking as the API", async () => {
    const reply = await client.generateOptions(missionId);
    rankedByApi = reply.options.map((o) => o.option_id);
    expect(rankedByApi.length).toBeGreaterThan(1);
    // the service right-sizes: smallest sufficient capacity margin first
    const scores = reply.options.map((o) => o.score);
    for (let i = 1; i < scores.length; i++) {
      expect(scores[i]).toBeGreaterThanOrEqual(scores[i - 1] as number);
    }
    expect(rankedByApi).toEqual(reply.options.map((_, i) => `OPT${i + 1}`));

    const record = await client.getMission(missionId);
    expect(record.status).toBe("OptionsReady");
    expect(record.options.map((o) => o.option_id)).toEqual(rankedByApi);

    const view = renderMissionView(new MissionStore(structuredClone(record)), NOOP);
    const renderedIds = [...view.querySelectorAll("tbody tr")].map((tr) =>
      tr.getAttribute("data-option-id"),
    );
    expect(renderedIds).toEqual(rankedByApi);
    await verifyGating(missionId, "OptionsReady");
  });

  test("select and negotiate: allocation granted, Activate becomes live", async () => {
    const top = rankedByApi[0] as string;
    const selected = await client.selectOption(missionId, top);
    expect(selected.status).toBe("OptionsReady");
    expect(selected.selected_option_id).toBe(top);

    const allocated = await client.negotiate(missionId, top);
    expect(allocated.status).toBe("Allocated");
    expect(allocated.allocation).not.toBeNull();
    expect(allocated.allocation?.state).toBe("Approved");
    await verifyGating(missionId, "Allocated");
  });

  test("activate: stream goes live and vehicles appear", async () => {
    const controller = new AbortController();
    openStreams.push(controller);
    events = [];
    stream = streamJournal(
      client.streamUrl(missionId, 0),
      (event) => events.push(event),
      { signal: controller.signal, retryDelayMs: 100 },
    );

    const record = await client.activate(missionId);
    expect(record.status).toBe("Active");
    activePlan = record.options.find(
      (o) => o.option_id === record.selected_option_id,
    ) ?? null;
    expect(activePlan).not.toBeNull();
    await verifyGating(missionId, "Active");

    await until(
      () => events.find((e) => e.kind === "activated") ?? null,
      "activated journal entry on the stream",
    );
    await until(
      () => events.find((e) => e.kind === "telemetry") ?? null,
      "first telemetry frame on the stream",
    );
  });

  test("CommandLanding reflected in the live view within one stream update", async () => {
    // pick the cruising vehicle with the most corridor left; wait for a
    // second one so the roster keeps an eligible vehicle after the landing
    const pick = await until(() => {
      const latest = [...events].reverse().find((e) => e.kind === "telemetry");
      if (latest === undefined) {
        return null;
      }
      const rows = (latest.data["rows"] as string[]).map(parseTelemetryRow);
      const cruising = rows
        .filter((r) => r.mode === "Cruise" && r.health === "Nominal" && r.s < 300)
        .sort((a, b) => a.s - b.s);
      return cruising.length >= 2 ? (cruising[0] as ReturnType<typeof parseTelemetryRow>) : null;
    }, "two cruising vehicles early in the corridor");

    await client.commandLanding(missionId, pick.uavId);

    const commanded = await until(
      () =>
        events.find(
          (e) => e.kind === "landing_commanded" && e.data["uav_id"] === pick.uavId,
        ) ?? null,
      "landing_commanded on the stream",
    );

    // the command flushes the mode change into the journal before the ack
    const modeEvent = events.find(
      (e) =>
        e.kind === "sim_event" &&
        e.data["kind"] === "mode" &&
        e.data["uav"] === pick.uavId &&
        e.data["mode"] === "Landing",
    );
    expect(modeEvent).toBeDefined();
    expect((modeEvent as JournalEventView).seq).toBeLessThan(commanded.seq);

    // the very next telemetry entry must already show the vehicle landing
    const nextTelemetry = await until(
      () =>
        events.find((e) => e.kind === "telemetry" && e.seq > commanded.seq) ?? null,
      "first telemetry after the landing command",
    );
    const row = (nextTelemetry.data["rows"] as string[])
      .map(parseTelemetryRow)
      .find((r) => r.uavId === pick.uavId);
    expect(row).toBeDefined();
    expect(row?.mode).toBe("Landing");

    // and the rendered live view agrees: marker recolored, Land disabled
    const traffic = new TrafficState();
    for (const event of events) {
      if (event.seq <= nextTelemetry.seq) {
        traffic.apply(event);
      }
    }
    const view = renderTrafficView(
      (activePlan as OptionView).plan,
      traffic,
      { acknowledge: () => {}, commandLanding: () => {}, landingEnabled: true },
    );
    const marker = view.querySelector(
      `.plan-view circle.uav[data-uav="${pick.uavId}"]`,
    );
    expect(marker?.getAttribute("class")).toContain("mode-Landing");
    const land = view.querySelector<HTMLButtonElement>(
      `li[data-uav="${pick.uavId}"] button[data-control="CommandLanding"]`,
    );
    expect(land?.disabled).toBe(true);
    const landButtons = [
      ...view.querySelectorAll<HTMLButtonElement>('button[data-control="CommandLanding"]'),
    ];
    expect(landButtons.some((b) => !b.disabled)).toBe(true); // others still eligible
  });

  test("completion: warnings acknowledgeable, Release becomes live", async () => {
    const record = await waitForStatus(missionId, "Completed");
    expect(record.metrics).not.toEqual({});
    await verifyGating(missionId, "Completed");

    // AcknowledgeWarning is not status-gated: any sim_event seq works once
    const simEvent = events.find((e) => e.kind === "sim_event") as JournalEventView;
    ackedSeq = simEvent.seq;
    const acked = await client.acknowledgeWarning(missionId, ackedSeq);
    expect(acked.acknowledged).toContain(ackedSeq);
    const dupe = await client.acknowledgeWarning(missionId, ackedSeq).then(
      () => null,
      (err: unknown) => err as ApiError,
    );
    expect(dupe?.status).toBe(409);
    const bogus = await client.acknowledgeWarning(missionId, 999_999).then(
      () => null,
      (err: unknown) => err as ApiError,
    );
    expect(bogus?.status).toBe(404);
  });

  test("release: journal seals, stream closes, everything goes dark", async () => {
    const record = await client.release(missionId);
    expect(record.status).toBe("Released");
    await Promise.race([
      stream.done,
      sleep(10_000).then(() => {
        throw new Error("stream did not close after release");
      }),
    ]);
    expect(events[events.length - 1]?.kind).toBe("released");
    await verifyGating(missionId, "Released");
  });

  test("stateless replay: draft record plus journal rebuilds the final view", async () => {
    const final = await client.getMission(missionId);
    const store = new MissionStore(structuredClone(draftRecord));
    for (const event of events) {
      store.apply(event);
    }
    expect(store.status).toBe(final.status);
    expect(store.record.selected_option_id).toBe(final.selected_option_id);
    expect(store.record.options.map((o) => o.option_id)).toEqual(
      final.options.map((o) => o.option_id),
    );
    expect(store.record.allocation?.allocation_id).toBe(
      final.allocation?.allocation_id,
    );
    expect(store.record.acknowledged).toContain(ackedSeq);
    expect(store.record.metrics).toEqual(final.metrics);
    const simEvents = events.filter((e) => e.kind === "sim_event");
    expect(store.traffic.ticker.map((t) => t.seq)).toEqual(
      simEvents.map((e) => e.seq),
    );
  });
});

describe("abort path", () => {
  test("abort accepted while Active, mission drains to Released", async () => {
    const created = await client.createMission(FORM);
    const missionId = created.mission_id;
    const reply = await client.generateOptions(missionId);
    const top = (reply.options[0] as OptionView).option_id;
    const allocated = await client.negotiate(missionId, top);
    expect(allocated.status).toBe("Allocated");

    const controller = new AbortController();
    openStreams.push(controller);
    const events: JournalEventView[] = [];
    const stream = streamJournal(
      client.streamUrl(missionId, 0),
      (event) => events.push(event),
      { signal: controller.signal, retryDelayMs: 100 },
    );

    await client.activate(missionId);
    await until(
      () => events.find((e) => e.kind === "telemetry") ?? null,
      "traffic before aborting",
    );
    const record = await client.abortMission(missionId);
    expect(record.status).toBe("Active"); // drains before Aborted/Released

    const finalRecord = await waitForStatus(missionId, "Released");
    expect(finalRecord.status_history.slice(-2)).toEqual(["Aborted", "Released"]);

    await Promise.race([
      stream.done,
      sleep(10_000).then(() => {
        throw new Error("stream did not close after the aborted mission released");
      }),
    ]);
    const kinds = events.map((e) => e.kind);
    expect(kinds).toContain("abort_requested");
    expect(kinds).toContain("mission_aborted");
    expect(kinds[kinds.length - 1]).toBe("released");
  });
});
