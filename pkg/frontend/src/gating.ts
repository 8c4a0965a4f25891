// Status gating for operator controls. Mirrors the service's own
// preconditions: a control is enabled exactly when the service would accept
// the command in the mission's current status.

import type { MissionStatus } from "./types.js";

export type OperatorControl =
  | "GenerateOptions"
  | "SelectOption"
  | "Negotiate"
  | "Activate"
  | "AbortMission"
  | "CommandLanding"
  | "Release";

const ENABLED_IN: Record<OperatorControl, readonly MissionStatus[]> = {
  GenerateOptions: ["Draft"],
  SelectOption: ["OptionsReady"],
  Negotiate: ["OptionsReady"],
  Activate: ["Allocated"],
  AbortMission: ["Active"],
  CommandLanding: ["Active"],
  Release: ["Completed", "Aborted"],
};

export const ALL_CONTROLS: readonly OperatorControl[] =
  Object.keys(ENABLED_IN) as OperatorControl[];

export function controlEnabled(
  control: OperatorControl,
  status: MissionStatus,
): boolean {
  return ENABLED_IN[control].includes(status);
}
