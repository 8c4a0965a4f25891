// Mission-level state assembled from the service record plus the journal
// stream. The journal alone can rebuild every view (the record fetch just
// seeds it), which is what keeps the console stateless across reloads.

import { TrafficState } from "./telemetry.js";
import type {
  AllocationView,
  JournalEventView,
  MissionRecordView,
  MissionStatus,
  NegotiationRoundView,
  OptionView,
} from "./types.js";

export interface NegotiationLogEntry {
  seq: number;
  text: string;
  rounds: NegotiationRoundView[];
}

// Journal kinds that move the mission lifecycle.
const STATUS_OF_KIND: Record<string, MissionStatus> = {
  options_generated: "OptionsReady",
  negotiation_started: "Negotiating",
  negotiation_failed: "OptionsReady",
  allocated: "Allocated",
  activated: "Active",
  mission_completed: "Completed",
  mission_aborted: "Aborted",
  released: "Released",
};

export class MissionStore {
  record: MissionRecordView;
  status: MissionStatus;
  traffic: TrafficState;
  negotiation: NegotiationLogEntry[] = [];
  lastSeq: number;

  constructor(record: MissionRecordView) {
    this.record = record;
    this.status = record.status;
    this.traffic = new TrafficState(record.acknowledged);
    this.lastSeq = 0;
  }

  apply(event: JournalEventView): void {
    this.lastSeq = event.seq;
    const status = STATUS_OF_KIND[event.kind];
    if (status !== undefined) {
      this.status = status;
      this.record.status = status;
    }
    switch (event.kind) {
      case "options_generated":
        this.record.options = event.data["options"] as OptionView[];
        break;
      case "option_selected":
        this.record.selected_option_id = String(event.data["option_id"]);
        break;
      case "negotiation_started":
        this.negotiation.push({
          seq: event.seq,
          text: `negotiating option ${event.data["option_id"]}`,
          rounds: [],
        });
        break;
      case "negotiation_failed":
        this.negotiation.push({
          seq: event.seq,
          text: `failed: ${event.data["reason"]}`,
          rounds: (event.data["rounds"] as NegotiationRoundView[]) ?? [],
        });
        break;
      case "allocated": {
        const round = Number(event.data["negotiation_round"]);
        const cost = Number(event.data["cost"]);
        this.record.allocation = {
          allocation_id: String(event.data["allocation_id"]),
          state: "Approved",
          cost,
          negotiation_round: round,
        } as AllocationView;
        const replanned = event.data["option"] as OptionView | undefined;
        if (replanned !== undefined) {
          this.record.options = this.record.options.map((o) =>
            o.option_id === replanned.option_id ? replanned : o,
          );
        }
        this.negotiation.push({
          seq: event.seq,
          text: `allocated in round ${round} at cost ${cost.toFixed(2)}`,
          rounds: [],
        });
        break;
      }
      case "sim_finished":
        this.record.metrics =
          (event.data["metrics"] as Record<string, unknown>) ?? {};
        break;
      case "warning_acknowledged":
        this.record.acknowledged = [
          ...this.record.acknowledged,
          Number(event.data["event_id"]),
        ];
        this.traffic.apply(event);
        break;
      default:
        this.traffic.apply(event);
    }
  }

  selectedOption(): OptionView | null {
    const id = this.record.selected_option_id;
    if (id === null) {
      return null;
    }
    return this.record.options.find((o) => o.option_id === id) ?? null;
  }
}
