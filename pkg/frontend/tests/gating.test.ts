// The status-gating table. The integration suite proves this table matches
// the live service; here it is pinned so a regression is visible without a
// server.

import { describe, expect, test } from "vitest";

import { ALL_CONTROLS, controlEnabled } from "../src/gating.js";
import type { MissionStatus } from "../src/types.js";

const STATUSES: MissionStatus[] = [
  "Draft",
  "OptionsReady",
  "Negotiating",
  "Allocated",
  "Active",
  "Completed",
  "Aborted",
  "Released",
];

describe("controlEnabled", () => {
  test("exact enablement sets per status", () => {
    const enabled: Record<string, string[]> = {};
    for (const status of STATUSES) {
      enabled[status] = ALL_CONTROLS.filter((c) => controlEnabled(c, status));
    }
    expect(enabled).toEqual({
      Draft: ["GenerateOptions"],
      OptionsReady: ["SelectOption", "Negotiate"],
      Negotiating: [],
      Allocated: ["Activate"],
      Active: ["AbortMission", "CommandLanding"],
      Completed: ["Release"],
      Aborted: ["Release"],
      Released: [],
    });
  });
});
