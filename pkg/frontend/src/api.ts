// Thin fetch client for the ground-control service. Every method maps to one
// endpoint and returns the parsed JSON body; non-2xx responses throw ApiError
// carrying the service's structured error body.

import type {
  ApiErrorBody,
  MissionRecordView,
  MissionSummaryView,
  OptionView,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  body: ApiErrorBody;

  constructor(status: number, body: ApiErrorBody) {
    super(`${body.error}: ${body.detail}`);
    this.status = status;
    this.body = body;
  }
}

export interface MissionRequestForm {
  start: { east: number; north: number; up: number };
  destination: { east: number; north: number; up: number };
  altitude: number;
  expected_throughput: number;
  utility: string;
  desired_duration: number;
  time_of_day: string | number;
}

async function asJson<T>(response: Response): Promise<T> {
  const text = await response.text();
  let body: unknown = {};
  if (text) {
    try {
      body = JSON.parse(text);
    } catch {
      body = { error: "BadResponse", detail: text.slice(0, 200) };
    }
  }
  if (!response.ok) {
    throw new ApiError(response.status, body as ApiErrorBody);
  }
  return body as T;
}

export class GcsClient {
  base: string;
  fetchImpl: typeof fetch;

  constructor(base = "", fetchImpl: typeof fetch = fetch) {
    this.base = base.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  private get<T>(path: string): Promise<T> {
    return this.fetchImpl(this.base + path).then((r) => asJson<T>(r));
  }

  private post<T>(path: string, payload?: unknown): Promise<T> {
    return this.fetchImpl(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: payload === undefined ? "{}" : JSON.stringify(payload),
    }).then((r) => asJson<T>(r));
  }

  health(): Promise<{ status: string }> {
    return this.get("/healthz");
  }

  listMissions(): Promise<MissionSummaryView[]> {
    return this.get("/missions");
  }

  createMission(form: MissionRequestForm): Promise<{ mission_id: string }> {
    return this.post("/missions", form);
  }

  getMission(missionId: string): Promise<MissionRecordView> {
    return this.get(`/missions/${missionId}`);
  }

  generateOptions(
    missionId: string,
  ): Promise<{ mission_id: string; options: OptionView[] }> {
    return this.post(`/missions/${missionId}/options`);
  }

  selectOption(missionId: string, optionId: string): Promise<MissionRecordView> {
    return this.post(`/missions/${missionId}/select`, { option_id: optionId });
  }

  negotiate(missionId: string, optionId?: string): Promise<MissionRecordView> {
    const payload = optionId === undefined ? {} : { option_id: optionId };
    return this.post(`/missions/${missionId}/negotiate`, payload);
  }

  activate(missionId: string): Promise<MissionRecordView> {
    return this.post(`/missions/${missionId}/activate`);
  }

  abortMission(missionId: string): Promise<MissionRecordView> {
    return this.post(`/missions/${missionId}/command`, {
      type: "AbortMission",
    });
  }

  commandLanding(missionId: string, uavId: string): Promise<MissionRecordView> {
    return this.post(`/missions/${missionId}/command`, {
      type: "CommandLanding",
      uav_id: uavId,
    });
  }

  acknowledgeWarning(
    missionId: string,
    eventId: number,
  ): Promise<MissionRecordView> {
    return this.post(`/missions/${missionId}/command`, {
      type: "AcknowledgeWarning",
      event_id: eventId,
    });
  }

  release(missionId: string): Promise<MissionRecordView> {
    return this.post(`/missions/${missionId}/release`);
  }

  streamUrl(missionId: string, since = 0, until?: number): string {
    const params = new URLSearchParams({ since: String(since) });
    if (until !== undefined) {
      params.set("until", String(until));
    }
    return `${this.base}/missions/${missionId}/stream?${params}`;
  }
}
