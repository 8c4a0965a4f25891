// Live traffic: top-down plan view, corridor cross-section, and the event
// ticker. Markers come from the latest telemetry frame; ticker entries are
// journal sim_events in sequence order and are never dropped.

import { el, fmt, svg } from "../dom.js";
import { offsetPoint, planSeats, poseAt } from "../schematic.js";
import type { TickerEntry, TrafficState, UavMarker } from "../telemetry.js";
import type { PlanView } from "../types.js";

export interface TrafficHandlers {
  acknowledge(eventSeq: number): void;
  commandLanding(uavId: string): void;
  landingEnabled: boolean;
}

function planViewSvg(plan: PlanView, markers: UavMarker[]): SVGElement {
  const wps = plan.corridor.waypoints;
  const r = plan.corridor.outer_radius;
  let minE = Infinity;
  let maxE = -Infinity;
  let minN = Infinity;
  let maxN = -Infinity;
  for (const wp of wps) {
    minE = Math.min(minE, wp[0] as number);
    maxE = Math.max(maxE, wp[0] as number);
    minN = Math.min(minN, wp[1] as number);
    maxN = Math.max(maxN, wp[1] as number);
  }
  const pad = r + 10;
  const view = `${minE - pad} ${-(maxN + pad)} ${maxE - minE + 2 * pad} ${
    maxN - minN + 2 * pad
  }`;

  const root = svg("svg", {
    class: "plan-view",
    viewBox: view,
    preserveAspectRatio: "xMidYMid meet",
  });

  // corridor walls: per-vertex offsets of the centerline polyline
  const cumulative: number[] = [0];
  for (let i = 1; i < wps.length; i++) {
    const a = wps[i - 1] as number[];
    const b = wps[i] as number[];
    cumulative.push(
      (cumulative[i - 1] as number) +
        Math.hypot((b[0] as number) - (a[0] as number),
                   (b[1] as number) - (a[1] as number)),
    );
  }
  for (const side of [r, -r]) {
    const points = cumulative
      .map((s) => {
        const p = offsetPoint(poseAt(wps, s), side);
        return `${p.east},${-p.north}`;
      })
      .join(" ");
    root.append(svg("polyline", { class: "corridor-wall", points }));
  }
  const center = wps.map((wp) => `${wp[0]},${-(wp[1] as number)}`).join(" ");
  root.append(svg("polyline", { class: "corridor-center", points: center }));

  for (const m of markers) {
    const pose = poseAt(wps, m.s);
    const p = offsetPoint(pose, m.lateral);
    const dot = svg("circle", {
      class: `uav mode-${m.mode}`,
      "data-uav": m.uavId,
      "data-lane": m.lane,
      cx: p.east,
      cy: -p.north,
      r: 2.5,
    });
    dot.append(svg("title", {}, document.createTextNode(
      `${m.uavId} ${m.lane} s=${fmt(m.s)} v=${fmt(m.speed)} ${m.mode}`)));
    root.append(dot);
    root.append(
      svg(
        "text",
        { class: "uav-label", x: p.east + 3, y: -p.north - 3 },
        document.createTextNode(m.uavId),
      ),
    );
  }
  return root;
}

function crossSectionSvg(plan: PlanView, markers: UavMarker[]): SVGElement {
  const r = plan.corridor.outer_radius;
  const pad = 4;
  const root = svg("svg", {
    class: "cross-section",
    viewBox: `${-(r + pad)} ${-(r + pad)} ${2 * (r + pad)} ${2 * (r + pad)}`,
    preserveAspectRatio: "xMidYMid meet",
  });
  root.append(svg("circle", { class: "outer-wall", cx: 0, cy: 0, r }));

  // Looking along the travel direction: positive lateral (left of travel)
  // is screen-left, positive vertical is screen-up.
  for (const seat of planSeats(plan.layout, plan.distribution)) {
    const cx = -seat.lateral;
    const cy = -seat.vertical;
    const lane = svg("g", {
      class: `lane flow-${seat.direction}`,
      "data-lane": seat.id,
      "data-direction": seat.direction,
    });
    lane.append(
      svg("circle", { class: "lane-wall", cx, cy, r: plan.lane_radius }),
    );
    const g = plan.lane_radius * 0.45;
    if (seat.direction === "Outflow") {
      // flow away from the viewer: fletching cross
      lane.append(
        svg("line", { class: "glyph", x1: cx - g, y1: cy - g, x2: cx + g, y2: cy + g }),
        svg("line", { class: "glyph", x1: cx - g, y1: cy + g, x2: cx + g, y2: cy - g }),
      );
    } else {
      // flow toward the viewer: arrow tip
      lane.append(svg("circle", { class: "glyph", cx, cy, r: g / 2 }));
    }
    lane.append(
      svg(
        "text",
        { class: "lane-label", x: cx + plan.lane_radius * 0.55, y: cy - plan.lane_radius * 0.55 },
        document.createTextNode(seat.id),
      ),
    );
    root.append(lane);
  }

  for (const m of markers) {
    root.append(
      svg("circle", {
        class: `uav mode-${m.mode}`,
        "data-uav": m.uavId,
        cx: -m.lateral,
        cy: -m.vertical,
        r: 0.8,
      }),
    );
  }
  return root;
}

function tickerItem(
  entry: TickerEntry,
  handlers: TrafficHandlers,
): HTMLLIElement {
  const classes = ["ticker-entry"];
  if (entry.severity !== undefined) {
    classes.push(`severity-${entry.severity}`);
    classes.push(entry.acknowledged ? "acked" : "unacked");
  }
  const detail = Object.entries(entry.detail)
    .map(([k, v]) => `${k}=${v}`)
    .join(" ");
  const item = el(
    "li",
    { class: classes.join(" "), "data-seq": String(entry.seq) },
    `[${fmt(entry.t)}s] ${entry.kind} ${entry.uavId} ${detail}`.trim(),
  );
  if (entry.severity !== undefined && !entry.acknowledged) {
    const ack = el("button", { class: "ack", "data-role": "ack" }, "Ack");
    ack.addEventListener("click", () => handlers.acknowledge(entry.seq));
    item.append(" ", ack);
  }
  return item;
}

export function renderTrafficView(
  plan: PlanView,
  traffic: TrafficState,
  handlers: TrafficHandlers,
): HTMLElement {
  const markers = traffic.activeMarkers();

  const roster = el("ul", { class: "uav-roster" });
  for (const m of markers) {
    const land = el("button", { "data-control": "CommandLanding" }, "Land");
    land.disabled = !handlers.landingEnabled || m.mode !== "Cruise";
    land.addEventListener("click", () => handlers.commandLanding(m.uavId));
    roster.append(
      el(
        "li",
        { "data-uav": m.uavId, class: `mode-${m.mode} health-${m.health}` },
        `${m.uavId} ${m.lane} s=${fmt(m.s)} v=${fmt(m.speed)} ${m.mode} ${m.health}`,
        " ",
        land,
      ),
    );
  }

  const ticker = el("ol", { class: "ticker", "data-role": "ticker" });
  for (const entry of traffic.ticker) {
    ticker.append(tickerItem(entry, handlers));
  }

  return el(
    "section",
    { class: "traffic-view" },
    el(
      "div",
      { class: "schematics" },
      el("div", { class: "panel" }, el("h3", {}, "Plan view"), planViewSvg(plan, markers)),
      el(
        "div",
        { class: "panel" },
        el("h3", {}, "Cross-section (looking along travel)"),
        crossSectionSvg(plan, markers),
      ),
    ),
    el("h3", {}, "Vehicles"),
    roster,
    el("h3", {}, "Events"),
    ticker,
  );
}
