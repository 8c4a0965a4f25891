// Mission request form. Client-side checks mirror the service's request
// validation so obviously bad input never leaves the browser; server-side
// rejections (infeasible missions, validation) render verbatim in a banner.

import { el } from "../dom.js";
import type { MissionRequestForm } from "../api.js";

export const UTILITIES = [
  "LastMile",
  "Factory",
  "ShoreToShip",
  "BorderPatrol",
  "Emergency",
  "Agriculture",
];

export interface FormErrors {
  fields: string[];
  message: string;
}

// Same rules the service applies to a request.
export function validateForm(form: MissionRequestForm): FormErrors | null {
  const fields: string[] = [];
  if (
    form.start.east === form.destination.east &&
    form.start.north === form.destination.north
  ) {
    fields.push("start", "destination");
  }
  if (!(form.expected_throughput > 0)) {
    fields.push("expected_throughput");
  }
  if (!(form.desired_duration > 0)) {
    fields.push("desired_duration");
  }
  if (!(form.altitude > 0)) {
    fields.push("altitude");
  }
  if (fields.length === 0) {
    return null;
  }
  return {
    fields,
    message: `invalid fields: ${[...new Set(fields)].join(", ")}`,
  };
}

export interface SubmitHandlers {
  submit(form: MissionRequestForm): Promise<void>;
}

function numberField(
  name: string,
  label: string,
  value: string,
): HTMLLabelElement {
  const input = el("input", { name, type: "number", step: "any", value });
  return el("label", { class: "field", "data-field": name }, `${label} `, input);
}

export function readForm(root: HTMLElement): MissionRequestForm {
  const num = (name: string): number => {
    const input = root.querySelector<HTMLInputElement>(`[name="${name}"]`);
    return Number(input?.value ?? "");
  };
  const utility =
    root.querySelector<HTMLSelectElement>('[name="utility"]')?.value ??
    "LastMile";
  const timeOfDay =
    root.querySelector<HTMLInputElement>('[name="time_of_day"]')?.value ??
    "09:00";
  return {
    start: { east: num("start_east"), north: num("start_north"), up: 0 },
    destination: { east: num("dest_east"), north: num("dest_north"), up: 0 },
    altitude: num("altitude"),
    expected_throughput: num("expected_throughput"),
    utility,
    desired_duration: num("desired_duration"),
    time_of_day: timeOfDay,
  };
}

export function renderSubmitForm(handlers: SubmitHandlers): HTMLElement {
  const banner = el("p", { class: "banner hidden", "data-role": "banner" });

  const utility = el("select", { name: "utility" });
  for (const name of UTILITIES) {
    utility.append(el("option", { value: name }, name));
  }

  const form = el(
    "form",
    { class: "submit-form" },
    banner,
    el(
      "fieldset",
      {},
      el("legend", {}, "Route"),
      numberField("start_east", "start east (m)", "0"),
      numberField("start_north", "start north (m)", "0"),
      numberField("dest_east", "destination east (m)", "1000"),
      numberField("dest_north", "destination north (m)", "0"),
      numberField("altitude", "altitude (m)", "60"),
    ),
    el(
      "fieldset",
      {},
      el("legend", {}, "Demand"),
      numberField("expected_throughput", "throughput (UAV/h)", "400"),
      numberField("desired_duration", "duration (s)", "300"),
      el(
        "label",
        { class: "field", "data-field": "time_of_day" },
        "time of day ",
        el("input", { name: "time_of_day", value: "09:00" }),
      ),
      el("label", { class: "field", "data-field": "utility" }, "utility ", utility),
    ),
    el("button", { type: "submit" }, "Request corridor"),
  );

  const showError = (message: string, fields: string[]): void => {
    banner.textContent = message;
    banner.classList.remove("hidden");
    for (const marked of form.querySelectorAll(".field.invalid")) {
      marked.classList.remove("invalid");
    }
    for (const field of fields) {
      const target = field.startsWith("start")
        ? ["start_east", "start_north"]
        : field === "destination"
          ? ["dest_east", "dest_north"]
          : [field];
      for (const name of target) {
        form
          .querySelector(`[data-field="${name}"]`)
          ?.classList.add("invalid");
      }
    }
  };

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const payload = readForm(form);
    const errors = validateForm(payload);
    if (errors !== null) {
      showError(errors.message, errors.fields);
      return;
    }
    banner.classList.add("hidden");
    handlers.submit(payload).catch((err: unknown) => {
      const body = (err as { body?: { reasons?: string[]; fields?: string[]; detail?: string } }).body;
      if (body?.reasons !== undefined) {
        showError(`infeasible: ${body.reasons.join(", ")}`, []);
      } else if (body?.fields !== undefined) {
        showError(`rejected: ${body.fields.join(", ")}`, body.fields);
      } else {
        showError(String((err as Error).message ?? err), []);
      }
    });
  });

  return form;
}
