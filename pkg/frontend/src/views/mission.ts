// Mission panel: status, request summary, ranked corridor options, the
// negotiation round log, and the lifecycle controls. Everything rendered
// here comes from the service record and journal; the console adds no
// authority of its own.

import { el, fmt } from "../dom.js";
import { controlEnabled } from "../gating.js";
import type { MissionStore } from "../state.js";
import type { OptionView } from "../types.js";

export interface MissionHandlers {
  generateOptions(): void;
  select(optionId: string): void;
  negotiate(optionId: string): void;
  activate(): void;
  abort(): void;
  release(): void;
}

function describeLayout(option: OptionView): string {
  const layout = option.plan.layout;
  if (layout.type === "VerticalStack") {
    return `stack/${option.plan.distribution.assignments.length}`;
  }
  if (layout.type === "Grid2x2") {
    return "grid 2x2";
  }
  return `custom/${layout.offsets?.length ?? 0}`;
}

function optionRow(
  option: OptionView,
  rank: number,
  store: MissionStore,
  handlers: MissionHandlers,
): HTMLTableRowElement {
  const selected = store.record.selected_option_id === option.option_id;
  const select = el(
    "button",
    { "data-control": "SelectOption", "data-option-id": option.option_id },
    "Select",
  );
  select.disabled = !controlEnabled("SelectOption", store.status);
  select.addEventListener("click", () => handlers.select(option.option_id));
  const approve = el(
    "button",
    { "data-control": "Negotiate", "data-option-id": option.option_id },
    "Approve",
  );
  approve.disabled = !controlEnabled("Negotiate", store.status);
  approve.addEventListener("click", () => handlers.negotiate(option.option_id));
  const row = el(
    "tr",
    { "data-option-id": option.option_id },
    el("td", {}, String(rank)),
    el("td", {}, option.option_id),
    el("td", {}, describeLayout(option)),
    el("td", {}, option.plan.distribution.name),
    el("td", {}, option.required_cl),
    el(
      "td",
      {},
      `${fmt(option.v_bounds[0] ?? 0)}-${fmt(option.v_bounds[1] ?? 0)} m/s`,
    ),
    el("td", {}, fmt(option.score, 3)),
    el("td", { class: "rationale" }, option.rationale),
    el("td", {}, select, " ", approve),
  );
  if (selected) {
    row.classList.add("selected");
  }
  return row;
}

export function renderMissionView(
  store: MissionStore,
  handlers: MissionHandlers,
): HTMLElement {
  const record = store.record;
  const req = record.request;

  const header = el(
    "div",
    { class: "mission-header" },
    el("h2", {}, record.mission_id),
    el(
      "span",
      { class: `status-badge status-${store.status}`, "data-role": "status" },
      store.status,
    ),
  );

  const start = req.start.map((v) => fmt(v, 0)).join(", ");
  const dest = req.destination.map((v) => fmt(v, 0)).join(", ");
  const summary = el(
    "p",
    { class: "request-summary" },
    `${req.utility}: (${start}) to (${dest}) at ${fmt(req.altitude, 0)} m, ` +
      `${fmt(req.expected_throughput, 0)} UAV/h for ${fmt(req.desired_duration, 0)} s`,
  );

  const tbody = el("tbody", { "data-role": "options" });
  record.options.forEach((option, i) => {
    tbody.append(optionRow(option, i + 1, store, handlers));
  });
  const table = el(
    "table",
    { class: "options" },
    el(
      "thead",
      {},
      el(
        "tr",
        {},
        el("th", {}, "#"),
        el("th", {}, "Option"),
        el("th", {}, "Layout"),
        el("th", {}, "Distribution"),
        el("th", {}, "CL"),
        el("th", {}, "Speed"),
        el("th", {}, "Score"),
        el("th", {}, "Rationale"),
        el("th", {}, ""),
      ),
    ),
    tbody,
  );

  const negotiation = el("ol", { class: "negotiation-log" });
  for (const entry of store.negotiation) {
    const item = el("li", {}, entry.text);
    if (entry.rounds.length > 0) {
      const rounds = el("ul", {});
      for (const round of entry.rounds) {
        rounds.append(
          el(
            "li",
            {},
            `round ${round.round}: ${round.verdict}` +
              (round.conflicts.length > 0
                ? ` (${round.conflicts.join(", ")})`
                : ""),
          ),
        );
      }
      item.append(rounds);
    }
    negotiation.append(item);
  }

  const allocation = record.allocation;
  const allocationLine =
    allocation === null
      ? el("p", { class: "allocation none" }, "no airspace allocated")
      : el(
          "p",
          { class: "allocation" },
          `allocation ${allocation.allocation_id} (round ` +
            `${allocation.negotiation_round}, cost ${fmt(allocation.cost, 2)})`,
        );

  const controls = el("div", { class: "controls" });
  const buttons: [
    "GenerateOptions" | "Activate" | "AbortMission" | "Release",
    string,
    () => void,
  ][] = [
    ["GenerateOptions", "Generate options", handlers.generateOptions],
    ["Activate", "Activate", handlers.activate],
    ["AbortMission", "Abort", handlers.abort],
    ["Release", "Release", handlers.release],
  ];
  for (const [control, label, onClick] of buttons) {
    const button = el("button", { "data-control": control }, label);
    button.disabled = !controlEnabled(control, store.status);
    button.addEventListener("click", onClick);
    controls.append(button);
  }

  return el(
    "section",
    { class: "mission-view" },
    header,
    summary,
    el("h3", {}, "Corridor options"),
    table,
    el("h3", {}, "Negotiation"),
    negotiation,
    allocationLine,
    controls,
  );
}
