// Geometry for the schematic views: arc interpolation along the corridor
// polyline for the top-down plan view, and cross-section seat positions per
// layout. Matches the service conventions: s is arc length from the route
// origin, positive lateral is left of the travel direction, positive
// vertical is up.

import type { DistributionView, LayoutView } from "./types.js";

export interface PlanPoint {
  east: number;
  north: number;
}

export interface ArcPose extends PlanPoint {
  // Unit heading of travel in +s, and the unit left normal.
  headingEast: number;
  headingNorth: number;
  leftEast: number;
  leftNorth: number;
}

export function routeLength(waypoints: number[][]): number {
  let total = 0;
  for (let i = 1; i < waypoints.length; i++) {
    const a = waypoints[i - 1] as number[];
    const b = waypoints[i] as number[];
    total += Math.hypot((b[0] as number) - (a[0] as number),
                        (b[1] as number) - (a[1] as number));
  }
  return total;
}

// Pose at arc length s along the top-down projection of the route.
// s outside [0, length] clamps to the ends.
export function poseAt(waypoints: number[][], s: number): ArcPose {
  if (waypoints.length < 2) {
    throw new Error("route needs at least two waypoints");
  }
  let remaining = Math.max(0, s);
  for (let i = 1; i < waypoints.length; i++) {
    const a = waypoints[i - 1] as number[];
    const b = waypoints[i] as number[];
    const de = (b[0] as number) - (a[0] as number);
    const dn = (b[1] as number) - (a[1] as number);
    const len = Math.hypot(de, dn);
    const atEnd = i === waypoints.length - 1;
    if (remaining <= len || atEnd) {
      const f = len === 0 ? 0 : Math.min(remaining, len) / len;
      const he = len === 0 ? 1 : de / len;
      const hn = len === 0 ? 0 : dn / len;
      return {
        east: (a[0] as number) + f * de,
        north: (a[1] as number) + f * dn,
        headingEast: he,
        headingNorth: hn,
        leftEast: -hn,
        leftNorth: he,
      };
    }
    remaining -= len;
  }
  throw new Error("unreachable");
}

export function offsetPoint(pose: ArcPose, lateral: number): PlanPoint {
  return {
    east: pose.east + lateral * pose.leftEast,
    north: pose.north + lateral * pose.leftNorth,
  };
}

export interface Seat {
  lateral: number;
  vertical: number;
}

// Seat positions per layout kind, keyed L1..Ln. VerticalStack puts L1 on
// top; Grid2x2 is L1 top-left through L4 bottom-right looking along travel.
export function layoutSeats(layout: LayoutView): Map<string, Seat> {
  const seats = new Map<string, Seat>();
  if (layout.type === "VerticalStack") {
    const s = layout.spacing ?? 0;
    seats.set("L1", { lateral: 0, vertical: 1.5 * s });
    seats.set("L2", { lateral: 0, vertical: 0.5 * s });
    seats.set("L3", { lateral: 0, vertical: -0.5 * s });
    seats.set("L4", { lateral: 0, vertical: -1.5 * s });
  } else if (layout.type === "Grid2x2") {
    const h = (layout.h_spacing ?? 0) / 2;
    const v = (layout.v_spacing ?? 0) / 2;
    seats.set("L1", { lateral: h, vertical: v });
    seats.set("L2", { lateral: -h, vertical: v });
    seats.set("L3", { lateral: h, vertical: -v });
    seats.set("L4", { lateral: -h, vertical: -v });
  } else {
    (layout.offsets ?? []).forEach((pair, i) => {
      seats.set(`L${i + 1}`, {
        lateral: pair[0] as number,
        vertical: pair[1] as number,
      });
    });
  }
  return seats;
}

export interface LaneSeat extends Seat {
  id: string;
  direction: string;
}

// The lanes a plan actually uses: distribution assignment order, each with
// its seat position and flow direction.
export function planSeats(
  layout: LayoutView,
  distribution: DistributionView,
): LaneSeat[] {
  const seats = layoutSeats(layout);
  const result: LaneSeat[] = [];
  for (const [laneId, direction] of distribution.assignments) {
    const seat = seats.get(laneId);
    if (seat === undefined) {
      throw new Error(`distribution names unknown seat ${laneId}`);
    }
    result.push({ id: laneId, direction, ...seat });
  }
  return result;
}
