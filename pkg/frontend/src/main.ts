// App shell: hash routing, one journal stream per open mission, and a
// render loop that repaints at display rate from the decimated feed.

import { ApiError, GcsClient } from "./api.js";
import { clear, el } from "./dom.js";
import type { MissionStore as Store } from "./state.js";
import { MissionStore } from "./state.js";
import { renderMissionView } from "./views/mission.js";
import { renderSubmitForm } from "./views/submit.js";
import { renderTrafficView } from "./views/traffic.js";
import { DecimatedFeed } from "./telemetry.js";
import { streamJournal } from "./sse.js";
import type { MissionRecordView } from "./types.js";

const client = new GcsClient("");
let activeStream: AbortController | null = null;

function navigate(hash: string): void {
  window.location.hash = hash;
}

function errorBanner(err: unknown): HTMLElement {
  const detail =
    err instanceof ApiError ? `${err.body.error}: ${err.body.detail}` : String(err);
  return el("p", { class: "banner" }, detail);
}

async function renderListPage(root: HTMLElement): Promise<void> {
  clear(root);
  const form = renderSubmitForm({
    submit: async (payload) => {
      const created = await client.createMission(payload);
      await client.generateOptions(created.mission_id);
      navigate(`#/m/${created.mission_id}`);
    },
  });

  const list = el("ul", { class: "mission-list" });
  try {
    for (const summary of await client.listMissions()) {
      const link = el("a", { href: `#/m/${summary.mission_id}` },
                      `${summary.mission_id} ${summary.status} ${summary.utility}`);
      list.append(el("li", {}, link));
    }
  } catch (err) {
    root.append(errorBanner(err));
  }

  root.append(
    el("h1", {}, "Corridor operations"),
    el("h2", {}, "New mission"),
    form,
    el("h2", {}, "Missions"),
    list,
  );
}

interface MissionPage {
  store: Store;
  dirty: boolean;
}

function repaint(root: HTMLElement, page: MissionPage): void {
  const store = page.store;
  clear(root);
  root.append(el("p", {}, el("a", { href: "#" }, "all missions")));

  const run = (action: () => Promise<MissionRecordView>): void => {
    action()
      .then((record) => {
        store.record = record;
        store.status = record.status;
        page.dirty = true;
      })
      .catch((err: unknown) => {
        root.prepend(errorBanner(err));
      });
  };

  root.append(
    renderMissionView(store, {
      generateOptions: () =>
        run(() =>
          client
            .generateOptions(store.record.mission_id)
            .then(() => client.getMission(store.record.mission_id)),
        ),
      select: (optionId) =>
        run(() => client.selectOption(store.record.mission_id, optionId)),
      negotiate: (optionId) =>
        run(() => client.negotiate(store.record.mission_id, optionId)),
      activate: () => run(() => client.activate(store.record.mission_id)),
      abort: () => run(() => client.abortMission(store.record.mission_id)),
      release: () => run(() => client.release(store.record.mission_id)),
    }),
  );

  const option = store.selectedOption() ?? store.record.options[0];
  if (option !== undefined) {
    root.append(
      renderTrafficView(option.plan, store.traffic, {
        acknowledge: (seq) =>
          run(() => client.acknowledgeWarning(store.record.mission_id, seq)),
        commandLanding: (uavId) =>
          run(() => client.commandLanding(store.record.mission_id, uavId)),
        landingEnabled: store.status === "Active",
      }),
    );
  }
}

async function renderMissionPage(root: HTMLElement, missionId: string): Promise<void> {
  clear(root);
  let record: MissionRecordView;
  try {
    record = await client.getMission(missionId);
  } catch (err) {
    root.append(errorBanner(err));
    return;
  }
  const page: MissionPage = { store: new MissionStore(record), dirty: true };
  const feed = new DecimatedFeed();

  const controller = new AbortController();
  activeStream = controller;
  streamJournal(
    client.streamUrl(missionId, 0),
    (event) => feed.push(event),
    { signal: controller.signal },
  );

  const frame = (): void => {
    if (controller.signal.aborted) {
      return;
    }
    const drained = feed.drain();
    if (drained.events.length > 0 || drained.telemetry !== null) {
      for (const event of drained.events) {
        page.store.apply(event);
      }
      if (drained.telemetry !== null) {
        page.store.apply(drained.telemetry);
      }
      page.dirty = true;
    }
    if (page.dirty) {
      page.dirty = false;
      repaint(root, page);
    }
    window.requestAnimationFrame(frame);
  };
  window.requestAnimationFrame(frame);
}

export function route(): void {
  const root = document.getElementById("app");
  if (root === null) {
    return;
  }
  if (activeStream !== null) {
    activeStream.abort();
    activeStream = null;
  }
  const match = /^#\/m\/(.+)$/.exec(window.location.hash);
  if (match !== null) {
    void renderMissionPage(root, match[1] as string);
  } else {
    void renderListPage(root);
  }
}

window.addEventListener("hashchange", route);
window.addEventListener("DOMContentLoaded", route);
