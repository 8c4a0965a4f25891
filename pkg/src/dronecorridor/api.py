"""HTTP API over the mission service.

Endpoints (JSON bodies unless noted):
  GET  /healthz                      liveness probe
  GET  /missions                     mission summaries
  POST /missions                     create from a raw request -> {mission_id}
  GET  /missions/{id}                full mission view
  POST /missions/{id}/options        generate ranked corridor options
  POST /missions/{id}/select         {option_id}
  POST /missions/{id}/negotiate      optional {option_id}; runs negotiation
  POST /missions/{id}/activate       starts the simulation (background thread)
  POST /missions/{id}/command        {type: AbortMission|CommandLanding|
                                      AcknowledgeWarning|SelectOption, ...}
  POST /missions/{id}/release        complete_and_release
  GET  /missions/{id}/stream?since=N server-sent journal events, ordered by
                                     seq and resumable (also honors the
                                     Last-Event-ID header)

Error statuses: 400 bad command, 404 unknown mission/event/vehicle,
409 wrong lifecycle status or negotiation failure, 422 invalid request
or infeasible mission, 502 UTM transport failure.
"""

from __future__ import annotations

import queue
import threading
import time
from typing import Iterator, Optional

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .service import (
    AbortMission,
    AcknowledgeWarning,
    AlreadyAcknowledged,
    CommandLanding,
    GcsService,
    IncompatibleStatus,
    Infeasible,
    MissionRecord,
    MissionStatus,
    NegotiationFailed,
    NotAllocated,
    OutsideWindow,
    SelectOption,
    ServiceError,
    UAVsStillActive,
    UnknownEvent,
    UnknownMission,
    ValidationFailed,
    request_from_raw,
)
from .sim import UnknownUAV
from .utm import TransportFailure

STREAM_POLL_SECONDS = 0.25


def record_view(record: MissionRecord) -> dict:
    allocation = None
    if record.allocation is not None:
        allocation = {
            "allocation_id": record.allocation.allocation_id,
            "state": record.allocation.state.value,
            "cost": record.allocation.cost,
            "negotiation_round": record.allocation.negotiation_round,
        }
    return {
        "mission_id": record.id,
        "status": record.status.value,
        "status_history": [s.value for s in record.status_history],
        "request": record.request.to_dict(),
        "options": [o.to_dict() for o in record.options],
        "selected_option_id": record.selected_option_id,
        "allocation": allocation,
        "metrics": record.metrics,
        "acknowledged": list(record.acknowledged),
        "journal_head": record.journal[-1].seq if record.journal else 0,
    }


def mission_summary(record: MissionRecord) -> dict:
    return {
        "mission_id": record.id,
        "status": record.status.value,
        "utility": record.request.utility.value,
        "selected_option_id": record.selected_option_id,
        "journal_head": record.journal[-1].seq if record.journal else 0,
    }


_ERROR_STATUS = (
    (ValidationFailed, 422),
    (Infeasible, 422),
    (UnknownMission, 404),
    (UnknownEvent, 404),
    (UnknownUAV, 404),
    (NegotiationFailed, 409),
    (IncompatibleStatus, 409),
    (NotAllocated, 409),
    (OutsideWindow, 409),
    (UAVsStillActive, 409),
    (AlreadyAcknowledged, 409),
    (TransportFailure, 502),
    (ServiceError, 400),
)


def _error_body(exc: Exception) -> dict:
    body = {"error": type(exc).__name__, "detail": str(exc)}
    if isinstance(exc, ValidationFailed):
        body["fields"] = list(exc.fields)
    elif isinstance(exc, Infeasible):
        body["reasons"] = list(exc.reasons)
    elif isinstance(exc, NegotiationFailed):
        body["rounds"] = [
            {"round": r.round_index, "verdict": r.verdict.value,
             "conflicts": list(r.conflicts), "cost": r.cost}
            for r in exc.failure.rounds
        ]
    return body


def create_app(service: GcsService, step_interval: float = 0.0) -> FastAPI:
    """API over one service instance. step_interval paces background
    simulation threads (seconds of wall time per sim step); zero runs
    them flat out."""
    app = FastAPI(title="dronecorridor", docs_url=None, redoc_url=None)
    app.state.service = service
    app.state.runners = {}

    def handle_service_error(request: Request, exc: Exception) -> JSONResponse:
        for kind, status in _ERROR_STATUS:
            if isinstance(exc, kind):
                return JSONResponse(_error_body(exc), status_code=status)
        raise exc

    for kind, _ in _ERROR_STATUS:
        app.add_exception_handler(kind, handle_service_error)

    def start_runner(mission_id: str) -> None:
        runner = service.activate_and_run(mission_id)

        def run() -> None:
            while runner.step():
                if step_interval > 0:
                    time.sleep(step_interval)

        thread = threading.Thread(
            target=run, name=f"sim-{mission_id}", daemon=True)
        app.state.runners[mission_id] = thread
        thread.start()

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "missions": len(service.list_missions())}

    @app.get("/missions")
    def list_missions() -> list:
        return [mission_summary(r) for r in service.list_missions()]

    @app.post("/missions", status_code=201)
    def create_mission(payload: dict = Body(...)) -> dict:
        request = request_from_raw(payload, service.scenario.origin)
        mission_id = service.ingest_mission(request)
        return {"mission_id": mission_id}

    @app.get("/missions/{mission_id}")
    def get_mission(mission_id: str) -> dict:
        return record_view(service.get_record(mission_id))

    @app.post("/missions/{mission_id}/options")
    def generate_options(mission_id: str) -> dict:
        options = service.generate_options(mission_id)
        return {"mission_id": mission_id,
                "options": [o.to_dict() for o in options]}

    @app.post("/missions/{mission_id}/select")
    def select_option(mission_id: str, payload: dict = Body(...)) -> dict:
        option_id = payload.get("option_id")
        if not isinstance(option_id, str) or not option_id:
            raise ValidationFailed(("option_id",))
        service.handle_command(mission_id, SelectOption(option_id))
        return record_view(service.get_record(mission_id))

    @app.post("/missions/{mission_id}/negotiate")
    def negotiate(mission_id: str,
                  payload: Optional[dict] = Body(None)) -> dict:
        option_id = (payload or {}).get("option_id")
        service.select_and_negotiate(mission_id, option_id)
        return record_view(service.get_record(mission_id))

    @app.post("/missions/{mission_id}/activate")
    def activate(mission_id: str) -> dict:
        start_runner(mission_id)
        return record_view(service.get_record(mission_id))

    @app.post("/missions/{mission_id}/command")
    def command(mission_id: str, payload: dict = Body(...)) -> dict:
        kind = payload.get("type")
        if kind == "SelectOption":
            option_id = payload.get("option_id")
            if not isinstance(option_id, str) or not option_id:
                raise ValidationFailed(("option_id",))
            service.handle_command(mission_id, SelectOption(option_id))
        elif kind == "StartMission":
            start_runner(mission_id)
        elif kind == "AbortMission":
            service.handle_command(mission_id, AbortMission())
        elif kind == "CommandLanding":
            uav_id = payload.get("uav_id")
            if not isinstance(uav_id, str) or not uav_id:
                raise ValidationFailed(("uav_id",))
            service.handle_command(mission_id, CommandLanding(uav_id))
        elif kind == "AcknowledgeWarning":
            event_id = payload.get("event_id")
            if not isinstance(event_id, int):
                raise ValidationFailed(("event_id",))
            service.handle_command(mission_id, AcknowledgeWarning(event_id))
        else:
            raise ServiceError(f"unsupported command type {kind!r}")
        return record_view(service.get_record(mission_id))

    @app.post("/missions/{mission_id}/release")
    def release(mission_id: str) -> dict:
        # Gate first: releasing an Active mission must 409, not wait out
        # the simulation. The runner thread is reaped only on success.
        service.complete_and_release(mission_id)
        thread = app.state.runners.pop(mission_id, None)
        if thread is not None:
            thread.join(timeout=60.0)
        return record_view(service.get_record(mission_id))

    @app.get("/missions/{mission_id}/stream")
    def stream(mission_id: str, request: Request, since: int = 0,
               until: Optional[int] = None):
        """Journal events from seq `since`+1 onward. The stream stays open
        for live events until the mission is released (journal sealed) or,
        when `until` is given, ends after that sequence number."""
        last_event_id = request.headers.get("last-event-id")
        if last_event_id is not None:
            try:
                since = max(since, int(last_event_id))
            except ValueError:
                pass
        service.get_record(mission_id)  # 404 before the stream starts

        def events() -> Iterator[str]:
            backlog, q = service.subscribe(mission_id, since)
            try:
                for event in backlog:
                    yield f"id: {event.seq}\ndata: {event.to_json()}\n\n"
                    if until is not None and event.seq >= until:
                        return
                if until is not None and until <= since:
                    return
                while True:
                    try:
                        event = q.get(timeout=STREAM_POLL_SECONDS)
                    except queue.Empty:
                        record = service.get_record(mission_id)
                        if record.status is MissionStatus.RELEASED:
                            return  # journal sealed; nothing more will come
                        yield ": keep-alive\n\n"
                        continue
                    yield f"id: {event.seq}\ndata: {event.to_json()}\n\n"
                    if until is not None and event.seq >= until:
                        return
            finally:
                service.unsubscribe(mission_id, q)

        return StreamingResponse(events(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    return app
