// JSON payload shapes of the ground-control service API. The console renders
// these verbatim; it never derives authority-side state on its own.

export type MissionStatus =
  | "Draft"
  | "OptionsReady"
  | "Negotiating"
  | "Allocated"
  | "Active"
  | "Completed"
  | "Aborted"
  | "Released";

export type FlowDirection = "Inflow" | "Outflow";
export type ComplianceLevel = "CL1" | "CL2" | "CL3";
export type UavMode = "Cruise" | "LaneChange" | "Landing" | "Aborted" | "Done";
export type UavHealth = "Nominal" | "Faulted";
export type Severity = "Warning" | "Safety";

export interface RequestView {
  start: number[];
  destination: number[];
  altitude: number;
  expected_throughput: number;
  utility: string;
  desired_duration: number;
  time_of_day: number;
  available_cls: ComplianceLevel[];
}

export interface VolumeView {
  waypoints: number[][];
  outer_radius: number;
  window: number[];
}

export interface LayoutView {
  type: "VerticalStack" | "Grid2x2" | "Custom";
  spacing?: number;
  h_spacing?: number;
  v_spacing?: number;
  offsets?: number[][];
}

export interface DistributionView {
  name: string;
  assignments: [string, FlowDirection][];
}

export interface PlanView {
  corridor: { waypoints: number[][]; outer_radius: number };
  layout: LayoutView;
  distribution: DistributionView;
  lane_radius: number;
}

export interface OptionView {
  option_id: string;
  volume: VolumeView;
  plan: PlanView;
  v_bounds: number[];
  required_cl: ComplianceLevel;
  score: number;
  rationale: string;
  coupled_pairs: string[][];
}

export interface AllocationView {
  allocation_id: string;
  state: string;
  cost: number;
  negotiation_round: number;
}

export interface MissionRecordView {
  mission_id: string;
  status: MissionStatus;
  status_history: MissionStatus[];
  request: RequestView;
  options: OptionView[];
  selected_option_id: string | null;
  allocation: AllocationView | null;
  metrics: Record<string, unknown>;
  acknowledged: number[];
  journal_head: number;
}

export interface MissionSummaryView {
  mission_id: string;
  status: MissionStatus;
  utility: string;
  selected_option_id: string | null;
  journal_head: number;
}

// One journal entry as streamed over SSE. seq is the journal sequence
// number; AcknowledgeWarning refers to sim_event entries by this seq.
export interface JournalEventView {
  seq: number;
  kind: string;
  data: Record<string, unknown>;
}

export interface NegotiationRoundView {
  round: number;
  verdict: string;
  conflicts: string[];
  cost: number;
}

export interface ApiErrorBody {
  error: string;
  detail: string;
  fields?: string[];
  reasons?: string[];
  rounds?: NegotiationRoundView[];
}
