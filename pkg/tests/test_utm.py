"""Tests for airspace-volume negotiation: message codec, conflict geometry,
cost quotes, allocation lifecycle, session sequencing, registry persistence,
the adjustment loop, and the TCP wire."""

import io
import json
import math
import random
import threading

import pytest

from dronecorridor.geometry import CorridorTube, NoFlyZone, Point3, build_route
from dronecorridor.utm import (
    Ack,
    AdjustmentPolicy,
    AirspaceVolume,
    AllocationState,
    ApproveWithoutQuote,
    CostQuote,
    InfoRequest,
    InfoResponse,
    InProcessTransport,
    InvalidTransition,
    MalformedMessage,
    NegotiationFailure,
    Propose,
    Reject,
    Release,
    TcpTransport,
    TransportFailure,
    UnknownAllocation,
    UtmAuthority,
    UtmClient,
    UtmConfig,
    UtmError,
    Verdict,
    VolumeRegistry,
    adjusted_volume,
    decode_message,
    encode_message,
    load_registry,
    negotiate,
    read_frame,
    registry_from_text,
    registry_to_text,
    save_registry,
    start_utm_server,
    utm_handle,
    volumes_intersect,
    write_frame,
)

import oracles


def seg_volume(east=0.0, north=0.0, up=50.0, length=60.0, radius=10.0,
               window=(0.0, 600.0)):
    """Straight east-west tube used as the unit of airspace in these tests."""
    route = build_route([
        Point3(east, north, up),
        Point3(east + length, north, up),
    ])
    return AirspaceVolume(CorridorTube(route, radius), window)


def raw(volume):
    """(waypoints, radius, window) triple for the brute-force oracles."""
    wps = [(p.east, p.north, p.up) for p in volume.tube.centerline.waypoints]
    return wps, volume.tube.outer_radius, volume.window


def make_client(authority=None, session="gcs"):
    authority = authority or UtmAuthority(check_invariants=True)
    return authority, UtmClient(InProcessTransport(authority), session=session)


def zone_box(cx, cy, half=50.0, alt=(0.0, 10000.0), window=(0.0, 1e6),
             name="keepout"):
    return NoFlyZone(
        footprint=(
            (cx - half, cy - half), (cx + half, cy - half),
            (cx + half, cy + half), (cx - half, cy + half),
        ),
        alt_min=alt[0], alt_max=alt[1],
        t_start=window[0], t_end=window[1], name=name,
    )


class TestMessageCodec:
    def test_envelope_fields_present(self):
        frame = encode_message(Propose(seg_volume()), "ops", 7)
        assert frame["session"] == "ops"
        assert frame["seq"] == 7
        assert frame["kind"] == "Propose"

    def test_volume_round_trip(self):
        vol = seg_volume(east=12.5, north=-3.0, up=80.0, radius=7.5,
                         window=(100.0, 700.0))
        frame = json.loads(json.dumps(encode_message(Propose(vol), "s", 1)))
        decoded = decode_message(frame)
        assert isinstance(decoded, Propose)
        got = decoded.volume
        assert got.window == vol.window
        assert got.tube.outer_radius == vol.tube.outer_radius
        assert got.tube.centerline.waypoints == vol.tube.centerline.waypoints

    def test_info_response_round_trip(self):
        zone = zone_box(10.0, 20.0, name="hospital")
        msg = InfoResponse((zone,), (seg_volume(),))
        frame = json.loads(json.dumps(encode_message(msg, "s", 2)))
        decoded = decode_message(frame)
        assert decoded.noflyzones == (zone,)
        assert len(decoded.allocated_volumes) == 1

    def test_quote_and_control_round_trips(self):
        quote = CostQuote("A0003", 812.25, Verdict.CONFLICTS, ("A0001", "nofly:x"))
        decoded = decode_message(json.loads(json.dumps(
            encode_message(quote, "s", 3))))
        assert decoded == quote
        rel = decode_message(encode_message(Release("A0009"), "s", 4))
        assert rel == Release("A0009")
        rej = decode_message(encode_message(Reject(("Conflict", "A1")), "s", 5))
        assert rej == Reject(("Conflict", "A1"))
        assert decode_message(encode_message(Ack("A2"), "s", 6)) == Ack("A2")

    def test_unknown_kind_rejected(self):
        with pytest.raises(MalformedMessage):
            decode_message({"session": "s", "seq": 1, "kind": "Teleport"})

    def test_bad_payload_rejected(self):
        frame = {"session": "s", "seq": 1, "kind": "Propose",
                 "volume": {"waypoints": [[0, 0, 50]], "outer_radius": 5,
                            "window": [0, 600]}}
        with pytest.raises(MalformedMessage):
            decode_message(frame)

    def test_missing_field_rejected(self):
        with pytest.raises(MalformedMessage):
            decode_message({"session": "s", "seq": 1, "kind": "Approve"})


class TestVolumeGeometry:
    def test_disjoint_windows_never_intersect(self):
        a = seg_volume(window=(0.0, 600.0))
        b = seg_volume(window=(700.0, 1300.0))
        assert not volumes_intersect(a, b)

    def test_touching_windows_do_not_intersect(self):
        a = seg_volume(window=(0.0, 600.0))
        b = seg_volume(window=(600.0, 1200.0))
        assert not volumes_intersect(a, b)

    def test_separated_tubes_do_not_intersect(self):
        a = seg_volume(north=0.0, radius=10.0)
        b = seg_volume(north=25.0, radius=10.0)
        assert not volumes_intersect(a, b)

    def test_close_tubes_intersect(self):
        a = seg_volume(north=0.0, radius=10.0)
        b = seg_volume(north=15.0, radius=10.0)
        assert volumes_intersect(a, b)

    def test_crossing_tubes_intersect(self):
        a = seg_volume()
        route = build_route([Point3(30.0, -50.0, 50.0), Point3(30.0, 50.0, 50.0)])
        b = AirspaceVolume(CorridorTube(route, 10.0), (0.0, 600.0))
        assert volumes_intersect(a, b)

    def test_vertical_separation_respected(self):
        a = seg_volume(up=50.0, radius=10.0)
        b = seg_volume(up=75.0, radius=10.0)
        assert not volumes_intersect(a, b)
        c = seg_volume(up=65.0, radius=10.0)
        assert volumes_intersect(a, c)

    def test_sampled_distance_brackets_exact_oracle(self):
        # sampling along the centerline may overestimate the true gap by
        # at most half the sample step
        rng = random.Random(11)
        from dronecorridor.utm import _tube_min_distance
        for _ in range(25):
            wps_a = [(0.0, 0.0, 50.0),
                     (rng.uniform(20, 60), rng.uniform(-20, 20), 50.0)]
            wps_b = [(rng.uniform(-20, 80), rng.uniform(5, 60),
                      rng.uniform(40, 70)),
                     (rng.uniform(-20, 80), rng.uniform(5, 60),
                      rng.uniform(40, 70))]
            try:
                route_a = build_route([Point3(*w) for w in wps_a])
                route_b = build_route([Point3(*w) for w in wps_b])
            except ValueError:
                continue
            tube_a = CorridorTube(route_a, 5.0)
            tube_b = CorridorTube(route_b, 5.0)
            sampled = _tube_min_distance(tube_a, tube_b, 1.0)
            exact = oracles.polyline_min_distance(wps_a, wps_b)
            assert sampled >= exact - 1e-9
            assert sampled - exact <= 0.51


class TestCostQuote:
    def test_cost_matches_hand_formula(self):
        _, client = make_client()
        vol = seg_volume(length=60.0, radius=10.0, window=(0.0, 600.0))
        quote = client.propose(vol)
        expected = 100.0 + 1e-6 * (math.pi * 10.0 ** 2) * 60.0 * 600.0
        assert quote.verdict is Verdict.ACCEPTABLE
        assert abs(quote.cost - expected) < 1e-9

    def test_nearby_surcharge_per_blocking_neighbor(self):
        auth, client = make_client()
        base = client.propose(seg_volume(north=0.0))
        client.approve(base.allocation_id)
        # 100 m away: clear of the radii but inside the 200 m buffer
        near = client.propose(seg_volume(north=100.0))
        assert near.verdict is Verdict.ACCEPTABLE
        # 10 km away: outside the buffer entirely
        far = client.propose(seg_volume(north=10000.0))
        assert far.verdict is Verdict.ACCEPTABLE
        assert abs(near.cost - (far.cost + 25.0)) < 1e-9

    def test_conflict_quote_names_allocation(self):
        _, client = make_client()
        first = client.propose(seg_volume())
        client.approve(first.allocation_id)
        second = client.propose(seg_volume(north=5.0))
        assert second.verdict is Verdict.CONFLICTS
        assert first.allocation_id in second.conflicts

    def test_conflict_quote_names_nofly_zone(self):
        registry = VolumeRegistry(noflyzones=[zone_box(30.0, 0.0, name="stadium")])
        auth = UtmAuthority(registry)
        client = UtmClient(InProcessTransport(auth))
        quote = client.propose(seg_volume())
        assert quote.verdict is Verdict.CONFLICTS
        assert "nofly:stadium" in quote.conflicts

    def test_zone_outside_window_ignored(self):
        registry = VolumeRegistry(
            noflyzones=[zone_box(30.0, 0.0, window=(5000.0, 6000.0))])
        auth = UtmAuthority(registry)
        client = UtmClient(InProcessTransport(auth))
        quote = client.propose(seg_volume(window=(0.0, 600.0)))
        assert quote.verdict is Verdict.ACCEPTABLE

    def test_quotes_alone_do_not_block(self):
        _, client = make_client()
        a = client.propose(seg_volume())
        b = client.propose(seg_volume())
        assert a.verdict is Verdict.ACCEPTABLE
        assert b.verdict is Verdict.ACCEPTABLE


class TestAllocationLifecycle:
    def test_full_lifecycle(self):
        auth, client = make_client()
        quote = client.propose(seg_volume())
        rid = quote.allocation_id
        records = auth.registry.records
        assert records[rid].state is AllocationState.COSTED

        assert client.approve(rid) == Ack(rid)
        assert records[rid].state is AllocationState.APPROVED
        assert client.activate(rid) == Ack(rid)
        assert records[rid].state is AllocationState.ACTIVE
        assert client.complete(rid) == Ack(rid)
        assert records[rid].state is AllocationState.COMPLETED
        assert client.release(rid) == Ack(rid)
        assert rid not in records

    def test_unknown_ids_rejected(self):
        _, client = make_client()
        for call in (client.approve, client.activate, client.complete,
                     client.release):
            with pytest.raises(UnknownAllocation):
                call("A9999")

    def test_double_approve_rejected(self):
        _, client = make_client()
        quote = client.propose(seg_volume())
        client.approve(quote.allocation_id)
        with pytest.raises(ApproveWithoutQuote):
            client.approve(quote.allocation_id)

    def test_approve_of_conflicted_quote_rejected(self):
        _, client = make_client()
        first = client.propose(seg_volume())
        client.approve(first.allocation_id)
        second = client.propose(seg_volume())
        assert second.verdict is Verdict.CONFLICTS
        with pytest.raises(ApproveWithoutQuote):
            client.approve(second.allocation_id)

    def test_approve_recheck_is_atomic(self):
        # both quotes are acceptable; only the first approval can win
        auth, client = make_client()
        qa = client.propose(seg_volume())
        qb = client.propose(seg_volume())
        assert client.approve(qa.allocation_id) == Ack(qa.allocation_id)
        reply = client.approve(qb.allocation_id)
        assert isinstance(reply, Reject)
        assert reply.reasons[0] == "Conflict"
        assert qa.allocation_id in reply.reasons
        assert auth.registry.records[qb.allocation_id].state is AllocationState.REJECTED

    def test_activate_before_approve_rejected(self):
        _, client = make_client()
        quote = client.propose(seg_volume())
        with pytest.raises(InvalidTransition):
            client.activate(quote.allocation_id)

    def test_complete_stops_blocking_but_persists(self):
        auth, client = make_client()
        quote = client.propose(seg_volume())
        rid = quote.allocation_id
        client.approve(rid)
        client.activate(rid)
        client.complete(rid)
        again = client.propose(seg_volume())
        assert again.verdict is Verdict.ACCEPTABLE
        assert auth.registry.records[rid].state is AllocationState.COMPLETED

    def test_release_from_active_abort_path(self):
        auth, client = make_client()
        quote = client.propose(seg_volume())
        rid = quote.allocation_id
        client.approve(rid)
        client.activate(rid)
        assert client.release(rid) == Ack(rid)
        assert rid not in auth.registry.records

    def test_release_before_activation_rejected(self):
        _, client = make_client()
        quote = client.propose(seg_volume())
        client.approve(quote.allocation_id)
        with pytest.raises(InvalidTransition):
            client.release(quote.allocation_id)

    def test_double_release_is_unknown(self):
        _, client = make_client()
        quote = client.propose(seg_volume())
        client.approve(quote.allocation_id)
        client.activate(quote.allocation_id)
        client.release(quote.allocation_id)
        with pytest.raises(UnknownAllocation):
            client.release(quote.allocation_id)

    def test_info_reports_blocking_volumes_and_zones(self):
        registry = VolumeRegistry(noflyzones=[zone_box(30.0, 200.0, name="pad")])
        auth = UtmAuthority(registry)
        client = UtmClient(InProcessTransport(auth))
        quote = client.propose(seg_volume(north=0.0))
        client.approve(quote.allocation_id)

        wide = seg_volume(north=100.0, radius=10.0)
        region = AirspaceVolume(
            CorridorTube(wide.tube.centerline, 150.0), (0.0, 600.0))
        info = client.info(region)
        assert len(info.allocated_volumes) == 1
        assert info.noflyzones[0].name == "pad"

        remote = AirspaceVolume(
            CorridorTube(seg_volume(north=5000.0).tube.centerline, 20.0),
            (0.0, 600.0))
        empty = client.info(remote)
        assert empty.allocated_volumes == ()
        assert empty.noflyzones == ()


class TestSequencing:
    def test_replayed_seq_rejected(self):
        auth, _ = make_client()
        frame = encode_message(InfoRequest(seg_volume()), "ops", 5)
        first = decode_message(auth.handle_frame(frame))
        second = decode_message(auth.handle_frame(frame))
        assert isinstance(first, InfoResponse)
        assert isinstance(second, Reject)
        assert second.reasons[0] == "OutOfOrderMessage"

    def test_stale_seq_rejected(self):
        auth, _ = make_client()
        auth.handle_frame(encode_message(InfoRequest(seg_volume()), "ops", 9))
        late = decode_message(
            auth.handle_frame(encode_message(InfoRequest(seg_volume()), "ops", 3)))
        assert isinstance(late, Reject)
        assert late.reasons[0] == "OutOfOrderMessage"

    def test_sessions_sequence_independently(self):
        auth, _ = make_client()
        a = decode_message(
            auth.handle_frame(encode_message(InfoRequest(seg_volume()), "a", 1)))
        b = decode_message(
            auth.handle_frame(encode_message(InfoRequest(seg_volume()), "b", 1)))
        assert isinstance(a, InfoResponse)
        assert isinstance(b, InfoResponse)

    def test_shuffled_delivery_matches_reference_filter(self):
        # a frame is accepted exactly when its seq exceeds the session max
        auth, _ = make_client()
        rng = random.Random(3)
        seqs = list(range(1, 41))
        rng.shuffle(seqs)
        high = 0
        for seq in seqs:
            reply = decode_message(auth.handle_frame(
                encode_message(InfoRequest(seg_volume()), "ops", seq)))
            if seq > high:
                assert isinstance(reply, InfoResponse)
                high = seq
            else:
                assert isinstance(reply, Reject)
                assert reply.reasons[0] == "OutOfOrderMessage"

    def test_missing_seq_rejected(self):
        auth, _ = make_client()
        reply = decode_message(auth.handle_frame({"session": "x", "kind": "Ack"}))
        assert isinstance(reply, Reject)
        assert reply.reasons[0] == "MalformedMessage"


class TestPersistence:
    def test_full_cycle_round_trips_byte_identical(self):
        registry = VolumeRegistry(noflyzones=[zone_box(500.0, 500.0)])
        auth = UtmAuthority(registry)
        client = UtmClient(InProcessTransport(auth))
        before = registry_to_text(registry)

        quote = client.propose(seg_volume())
        rid = quote.allocation_id
        client.approve(rid)
        client.activate(rid)
        client.complete(rid)
        client.release(rid)

        assert registry_to_text(registry) == before

    def test_save_load_preserves_durable_records(self, tmp_path):
        auth, client = make_client()
        quote = client.propose(seg_volume())
        client.approve(quote.allocation_id)
        client.propose(seg_volume(north=500.0))  # quoted but never approved

        path = str(tmp_path / "registry.json")
        save_registry(auth.registry, path)
        loaded = load_registry(path)

        assert set(loaded.records) == {quote.allocation_id}
        assert loaded.records[quote.allocation_id].state is AllocationState.APPROVED
        assert registry_to_text(loaded) == registry_to_text(auth.registry)

    def test_loaded_registry_continues_id_sequence(self, tmp_path):
        auth, client = make_client()
        q1 = client.propose(seg_volume())
        client.approve(q1.allocation_id)
        path = str(tmp_path / "registry.json")
        save_registry(auth.registry, path)

        auth2 = UtmAuthority(load_registry(path))
        client2 = UtmClient(InProcessTransport(auth2))
        q2 = client2.propose(seg_volume(north=500.0))
        assert q2.allocation_id != q1.allocation_id

    def test_load_missing_path_gives_empty_registry(self, tmp_path):
        registry = load_registry(str(tmp_path / "absent.json"))
        assert registry.records == {}
        assert registry.noflyzones == []

    def test_authority_persists_after_each_mutation(self, tmp_path):
        path = str(tmp_path / "registry.json")
        auth = UtmAuthority(persist_path=path)
        client = UtmClient(InProcessTransport(auth))
        quote = client.propose(seg_volume())
        client.approve(quote.allocation_id)
        loaded = load_registry(path)
        assert loaded.records[quote.allocation_id].state is AllocationState.APPROVED

    def test_text_is_deterministic_for_equal_registries(self):
        def build():
            auth, client = make_client()
            for north in (0.0, 500.0, 1000.0):
                q = client.propose(seg_volume(north=north))
                client.approve(q.allocation_id)
            return auth.registry

        assert registry_to_text(build()) == registry_to_text(build())


class CountingTransport:
    """Wraps a transport and tallies frames by kind."""

    def __init__(self, inner):
        self.inner = inner
        self.sent = []

    def send(self, frame):
        self.sent.append(frame["kind"])
        return self.inner.send(frame)

    def close(self):
        self.inner.close()


class TestNegotiation:
    def test_clear_airspace_succeeds_round_one(self):
        _, client = make_client()
        record = negotiate(client, seg_volume())
        assert record.state is AllocationState.APPROVED
        assert record.negotiation_round == 1

    def test_altitude_conflict_resolved_on_round_two(self):
        auth, client = make_client()
        holder = client.propose(seg_volume(up=50.0, radius=20.0))
        client.approve(holder.allocation_id)

        mission = seg_volume(up=50.0, radius=20.0)
        policy = AdjustmentPolicy(time_shift=0.0, altitude_shift=50.0,
                                  radius_factor=1.0)
        record = negotiate(client, mission, policy, max_rounds=4)
        assert record.negotiation_round == 2
        cleared = record.volume.tube.centerline.waypoints
        assert all(abs(p.up - 100.0) < 1e-9 for p in cleared)
        assert record.allocation_id in auth.registry.records

    def test_time_shift_resolves_window_conflict(self):
        _, client = make_client()
        holder = client.propose(seg_volume(window=(0.0, 600.0)))
        client.approve(holder.allocation_id)

        policy = AdjustmentPolicy(time_shift=700.0, altitude_shift=0.0,
                                  radius_factor=1.0)
        record = negotiate(client, seg_volume(window=(0.0, 600.0)), policy)
        assert record.negotiation_round == 2
        assert record.volume.window == (700.0, 1300.0)

    def test_saturated_airspace_fails_after_exactly_max_rounds(self):
        registry = VolumeRegistry(noflyzones=[zone_box(30.0, 0.0, half=500.0)])
        auth = UtmAuthority(registry)
        counting = CountingTransport(InProcessTransport(auth))
        client = UtmClient(counting)

        policy = AdjustmentPolicy(time_shift=0.0, altitude_shift=25.0,
                                  radius_factor=1.0)
        outcome = negotiate(client, seg_volume(), policy, max_rounds=4)
        assert isinstance(outcome, NegotiationFailure)
        assert outcome.reason == "rounds_exhausted"
        assert len(outcome.rounds) == 4
        assert all(r.verdict is Verdict.CONFLICTS for r in outcome.rounds)
        assert counting.sent.count("Propose") == 4

    def test_adjustments_cycle_in_fixed_order_with_multiples(self):
        base = seg_volume(radius=16.0, window=(0.0, 600.0))
        policy = AdjustmentPolicy(time_shift=100.0, altitude_shift=10.0,
                                  radius_factor=0.5, radius_min=2.0)

        def props(round_index):
            v = adjusted_volume(base, policy, round_index)
            up = v.tube.centerline.waypoints[0].up
            return v.window[0], up, v.tube.outer_radius

        assert props(1) == (0.0, 50.0, 16.0)
        assert props(2) == (100.0, 50.0, 16.0)   # time x1
        assert props(3) == (0.0, 60.0, 16.0)     # altitude x1
        assert props(4) == (0.0, 50.0, 8.0)      # radius x1
        assert props(5) == (200.0, 50.0, 16.0)   # time x2
        assert props(6) == (0.0, 70.0, 16.0)     # altitude x2
        assert props(7) == (0.0, 50.0, 4.0)      # radius x2
        assert props(8) == (300.0, 50.0, 16.0)   # time x3

    def test_radius_never_shrinks_below_floor(self):
        base = seg_volume(radius=16.0)
        policy = AdjustmentPolicy(time_shift=0.0, altitude_shift=0.0,
                                  radius_factor=0.5, radius_min=5.0)
        v = adjusted_volume(base, policy, 10)
        assert v.tube.outer_radius == 5.0

    def test_invalid_max_rounds(self):
        _, client = make_client()
        with pytest.raises(UtmError):
            negotiate(client, seg_volume(), max_rounds=0)


class TestWireFraming:
    def test_frame_round_trip(self):
        buf = io.BytesIO()
        frames = [
            {"session": "s", "seq": 1, "kind": "Ack", "allocation_id": ""},
            {"session": "s", "seq": 2, "kind": "Reject", "reasons": ["x"]},
        ]
        for f in frames:
            write_frame(buf, f)
        buf.seek(0)
        assert read_frame(buf) == frames[0]
        assert read_frame(buf) == frames[1]
        assert read_frame(buf) is None

    def test_truncated_frame_raises(self):
        buf = io.BytesIO()
        write_frame(buf, {"seq": 1})
        data = buf.getvalue()[:-3]
        with pytest.raises(TransportFailure):
            read_frame(io.BytesIO(data))

    def test_oversize_frame_rejected(self):
        import struct
        buf = io.BytesIO(struct.pack(">I", 100 * 1024 * 1024))
        with pytest.raises(TransportFailure):
            read_frame(buf)


class TestTcpTransport:
    def test_end_to_end_over_tcp(self):
        auth = UtmAuthority(check_invariants=True)
        server, _ = start_utm_server(auth)
        try:
            client = UtmClient(TcpTransport("127.0.0.1", server.port))
            quote = client.propose(seg_volume())
            rid = quote.allocation_id
            assert client.approve(rid) == Ack(rid)
            assert client.activate(rid) == Ack(rid)
            assert client.complete(rid) == Ack(rid)
            assert client.release(rid) == Ack(rid)
            client.close()
        finally:
            server.shutdown()
            server.server_close()

    def test_concurrent_approvals_elect_one_winner(self):
        auth = UtmAuthority(check_invariants=True)
        server, _ = start_utm_server(auth)
        try:
            quotes = []
            setup = UtmClient(TcpTransport("127.0.0.1", server.port), "setup")
            quotes.append(setup.propose(seg_volume()))
            quotes.append(setup.propose(seg_volume()))
            setup.close()

            barrier = threading.Barrier(2)
            replies = {}

            def run(name, rid):
                client = UtmClient(TcpTransport("127.0.0.1", server.port), name)
                barrier.wait()
                replies[name] = client.approve(rid)
                client.close()

            threads = [
                threading.Thread(target=run, args=(f"s{i}", q.allocation_id))
                for i, q in enumerate(quotes)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()

            kinds = sorted(type(r).__name__ for r in replies.values())
            assert kinds == ["Ack", "Reject"]
        finally:
            server.shutdown()
            server.server_close()

    def test_connect_failure_surfaces_after_retries(self):
        probe = UtmAuthority()
        server, _ = start_utm_server(probe)
        dead_port = server.port
        server.shutdown()
        server.server_close()

        client = UtmClient(TcpTransport("127.0.0.1", dead_port), retries=1)
        with pytest.raises(TransportFailure):
            client.propose(seg_volume())

    def test_server_survives_garbage_connection(self):
        import socket
        import struct
        auth = UtmAuthority()
        server, _ = start_utm_server(auth)
        try:
            raw_sock = socket.create_connection(("127.0.0.1", server.port))
            raw_sock.sendall(struct.pack(">I", 9) + b"not-json!")
            raw_sock.close()

            client = UtmClient(TcpTransport("127.0.0.1", server.port))
            quote = client.propose(seg_volume())
            assert quote.verdict is Verdict.ACCEPTABLE
            client.close()
        finally:
            server.shutdown()
            server.server_close()


class TestRegistrySafetyFuzz:
    def test_random_workload_keeps_registry_conflict_free(self):
        # volumes live on a coarse lattice so every pair is either clearly
        # separated or clearly conflicting; the authority asserts pairwise
        # safety after every mutation, and the exact-geometry oracle
        # re-checks the blocking set after every approval (the only
        # transition that adds a blocking volume)
        auth, client = make_client()
        rng = random.Random(42)
        windows = [(0.0, 600.0), (600.0, 1200.0), (1200.0, 1800.0)]

        def random_volume():
            return seg_volume(
                north=60.0 * rng.randrange(0, 4),
                up=50.0 + 100.0 * rng.randrange(0, 2),
                window=windows[rng.randrange(len(windows))],
            )

        quoted, approved, active = [], [], []

        def oracle_check():
            blocking = [r for r in auth.registry.records.values()
                        if r.state in (AllocationState.APPROVED,
                                       AllocationState.ACTIVE)]
            for i in range(len(blocking)):
                for j in range(i + 1, len(blocking)):
                    assert not oracles.volumes_conflict_oracle(
                        raw(blocking[i].volume), raw(blocking[j].volume)), (
                        f"{blocking[i].allocation_id} conflicts with "
                        f"{blocking[j].allocation_id}")

        for step_no in range(300):
            op = rng.randrange(6)
            try:
                if op == 0:
                    quote = client.propose(random_volume())
                    if quote.verdict is Verdict.ACCEPTABLE:
                        quoted.append(quote.allocation_id)
                elif op == 1 and quoted:
                    rid = quoted.pop(rng.randrange(len(quoted)))
                    if isinstance(client.approve(rid), Ack):
                        approved.append(rid)
                    oracle_check()
                elif op == 2 and approved:
                    rid = approved.pop(rng.randrange(len(approved)))
                    client.activate(rid)
                    active.append(rid)
                elif op == 3 and active:
                    rid = active.pop(rng.randrange(len(active)))
                    client.complete(rid)
                    client.release(rid)
                elif op == 4:
                    client.call(InfoRequest(seg_volume(north=60.0)))
                else:
                    with pytest.raises(UnknownAllocation):
                        client.release(f"A{9000 + step_no}")
            except (ApproveWithoutQuote, InvalidTransition):
                pass

        oracle_check()
        assert auth.registry.records  # the workload actually built state
