import hashlib
from collections import Counter
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from airs.analysis import map_detect, run_analysis
from airs.capture import (
    FLUSH,
    HEADER,
    HOLD,
    PACKETS_PER_RUN,
    CaptureBuffer,
    CaptureFormatError,
    FlushPolicy,
    PacketRecord,
    TrafficSpec,
    generate_legit_traffic,
    generate_traffic,
    inject_attack,
    monitor_flush,
    read_capture,
    record_size,
    scale_dataset,
    write_capture,
)
from airs.signatures import DEFAULT_RULES, TCP_FLAGS

GOLDEN = Path(__file__).parent / "golden"

ATTACK_PAYLOAD = b"GET / HTTP/1.0\r\nHOST: 172.31.17.62\r\n\rSQL INJECT\n"


def spec(count, seed=3, runs=()):
    return TrafficSpec(count, ["192.168.0.5", "192.168.0.6"], "172.31.17.62", runs, seed)


ipv4 = st.tuples(*[st.integers(0, 255)] * 4).map(lambda t: ".".join(map(str, t)))


@st.composite
def packet_records(draw):
    proto = draw(st.sampled_from(["TCP", "UDP", "ICMP"]))
    flags = frozenset(draw(st.sets(st.sampled_from(TCP_FLAGS)))) if proto == "TCP" else frozenset()
    return PacketRecord(
        timestamp=draw(st.integers(0, 2**62)),
        src_ip=draw(ipv4), src_port=draw(st.integers(0, 65535)),
        dst_ip=draw(ipv4), dst_port=draw(st.integers(0, 65535)),
        protocol=proto, flags=flags, seq=draw(st.integers(0, 2**32 - 1)),
        payload=draw(st.binary(max_size=64)),
    )


def test_single_syn_round_trip(tmp_path):
    r = PacketRecord(1, "10.0.0.1", 1040, "172.31.17.62", 80, "TCP", frozenset({"SYN"}), 12345, b"\x00\xff")
    write_capture([r], tmp_path / "c")
    assert read_capture(tmp_path / "c") == [r]


def test_empty_capture_is_header_only(tmp_path):
    write_capture([], tmp_path / "c")
    assert (tmp_path / "c").read_text() == HEADER + "\n"
    assert read_capture(tmp_path / "c") == []


def test_golden_capture():
    records = read_capture(GOLDEN / "listing.airscap")
    assert [r.flags for r in records] == [frozenset({"SYN"}), frozenset({"ACK"}), frozenset({"ACK"}),
                                          frozenset(), frozenset()]
    assert records[2].payload == ATTACK_PAYLOAD
    assert records[3].protocol == "UDP" and records[4].protocol == "ICMP"
    assert records[4].payload == b""


def test_golden_capture_is_bit_exact(tmp_path):
    write_capture(read_capture(GOLDEN / "listing.airscap"), tmp_path / "c")
    assert (tmp_path / "c").read_bytes() == (GOLDEN / "listing.airscap").read_bytes()


@pytest.mark.slow
def test_large_round_trip_digest(tmp_path):
    records = scale_dataset(130_000, 306, seed=5)
    write_capture(records, tmp_path / "a")
    back = read_capture(tmp_path / "a")
    write_capture(back, tmp_path / "b")
    digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    assert back == records


@given(st.lists(packet_records(), max_size=20))
def test_round_trip_property(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("cap") / "c"
    write_capture(records, path)
    assert read_capture(path) == records


@pytest.mark.parametrize("line, fragment", [
    ("1\t10.0.0.1\t1\t10.0.0.2\t2\tTCP\tSYN\t1", "9 tab-separated"),
    ("1\t10.0.0.1\t70000\t10.0.0.2\t2\tTCP\tSYN\t1\t", "port"),
    ("1\t10.0.0.1\t1\t10.0.0.2\t2\tUDP\tSYN\t1\t", "flags"),
    ("1\t10.0.0.256\t1\t10.0.0.2\t2\tTCP\t-\t1\t", "IPv4"),
    ("1\t10.0.0.1\t1\t10.0.0.2\t2\tSCTP\t-\t1\t", "protocol"),
    ("1\t10.0.0.1\t1\t10.0.0.2\t2\tTCP\t-\t1\t!!", ""),
])
def test_malformed_line_reports_line_number(tmp_path, line, fragment):
    ok = "1\t10.0.0.1\t1\t10.0.0.2\t2\tTCP\t-\t1\t\n"
    (tmp_path / "c").write_text(HEADER + "\n" + ok + line + "\n")
    with pytest.raises(CaptureFormatError) as exc:
        read_capture(tmp_path / "c")
    assert exc.value.lineno == 3
    assert fragment in str(exc.value)


def test_missing_header(tmp_path):
    (tmp_path / "c").write_text("pcap\n")
    with pytest.raises(CaptureFormatError):
        read_capture(tmp_path / "c")


def test_record_invariants():
    with pytest.raises(ValueError):
        PacketRecord(0, "1.2.3.4", 1, "1.2.3.5", 1, "ICMP", frozenset({"SYN"}))
    with pytest.raises(ValueError):
        PacketRecord(0, "1.2.3.4", 1, "1.2.3.5", 1, "TCP", seq=2**32)
    with pytest.raises(ValueError):
        PacketRecord(0, "01.2.3.4", 1, "1.2.3.5", 1, "TCP")


# --- generators --------------------------------------------------------------------

def test_zero_legit_packets():
    assert generate_legit_traffic(spec(0)) == []


def test_legit_is_deterministic():
    assert generate_legit_traffic(spec(500)) == generate_legit_traffic(spec(500))
    assert generate_legit_traffic(spec(500)) != generate_legit_traffic(spec(500, seed=4))


def test_legit_count_and_strict_order():
    records = generate_legit_traffic(spec(2000))
    assert len(records) == 2000
    assert all(a.timestamp < b.timestamp for a, b in zip(records, records[1:]))


@pytest.mark.slow
def test_legit_traffic_raises_no_alerts():
    records = generate_legit_traffic(spec(130_000, seed=11))
    assert map_detect(records, DEFAULT_RULES) == []


@given(st.integers(0, 300), st.integers(0, 2**64 - 1))
def test_legit_payloads_never_match(count, seed):
    assert map_detect(generate_legit_traffic(spec(count, seed)), DEFAULT_RULES) == []


def test_inject_one_run_adds_102_packets():
    base = generate_legit_traffic(spec(1000))
    out = inject_attack(base, "10.9.9.9", "172.31.17.62", "E1", 1, seed=1)
    added = [r for r in out if r.src_ip == "10.9.9.9"]
    assert len(out) - len(base) == 102 == len(added)
    assert sum(b"SQL INJECT" in r.payload for r in added) == 100
    assert sum(r.flags == {"SYN"} for r in added) == 1
    marker = next(r for r in added if b"SQL INJECT" in r.payload)
    assert marker.payload == ATTACK_PAYLOAD
    assert all(a.timestamp <= b.timestamp for a, b in zip(out, out[1:]))


def test_inject_zero_repetitions_rejected():
    with pytest.raises(ValueError):
        inject_attack([], "10.9.9.9", "172.31.17.62", "E1", 0)


def test_inject_unknown_attack():
    with pytest.raises(KeyError):
        inject_attack([], "10.9.9.9", "172.31.17.62", "E42", 1)


@pytest.mark.parametrize("attack_id", ["E1", "E2", "E3"])
def test_inject_three_runs_gives_300_alerts(attack_id):
    base = generate_legit_traffic(spec(3000))
    out = inject_attack(base, "10.9.9.9", "172.31.17.62", attack_id, 3, seed=2)
    alerts = map_detect(out, DEFAULT_RULES)
    assert len(alerts) == 300
    assert {a.src_ip for a in alerts} == {"10.9.9.9"}
    assert {a.attack_id for a in alerts} == {attack_id}


@given(st.integers(0, 200), st.integers(1, 3), st.integers(0, 1000))
def test_inject_preserves_existing_records(count, reps, seed):
    base = generate_legit_traffic(spec(count, seed))
    out = inject_attack(base, "10.9.9.9", "172.31.17.62", "E3", reps, seed=seed)
    assert not Counter(base) - Counter(out)
    assert len(out) == count + reps * PACKETS_PER_RUN
    assert out == inject_attack(base, "10.9.9.9", "172.31.17.62", "E3", reps, seed=seed)


def test_generate_traffic_with_runs():
    records = generate_traffic(spec(500, runs=[("10.1.1.1", "E1", 2), ("10.1.1.2", "E2", 1)]))
    assert len(records) == 500 + 3 * PACKETS_PER_RUN
    aggs = run_analysis(records, DEFAULT_RULES)
    assert {(a.src_ip, a.quantity) for a in aggs} == {("10.1.1.1", 200), ("10.1.1.2", 100)}


def test_traffic_spec_validation():
    with pytest.raises(ValueError):
        spec(10, runs=[("10.1.1.1", "E1", 0)])
    with pytest.raises(ValueError):
        TrafficSpec(1, ["300.1.1.1"], "1.1.1.1")
    with pytest.raises(ValueError):
        TrafficSpec(1, ["1.1.1.2"], "1.1.1.1", seed=-1)


def test_scale_dataset_minimal_all_attack():
    records = scale_dataset(102, 1, seed=0)
    assert len(records) == 102
    aggs = run_analysis(records, DEFAULT_RULES)
    assert len(aggs) == 1 and aggs[0].quantity == 100


def test_scale_dataset_infeasible():
    with pytest.raises(ValueError):
        scale_dataset(101, 1)


def test_scale_dataset_deterministic():
    assert scale_dataset(5000, 10, seed=9) == scale_dataset(5000, 10, seed=9)


@pytest.mark.slow
def test_scale_dataset_table_vii_row_10mb():
    records = scale_dataset(130_000, 306, seed=1)
    assert len(records) == 130_000
    aggs = run_analysis(records, DEFAULT_RULES)
    assert len(aggs) == 306
    assert all(a.quantity == 100 for a in aggs)


@pytest.mark.slow
def test_scale_dataset_table_vii_row_50mb():
    records = scale_dataset(700_000, 803, seed=2)
    assert len(records) == 700_000
    aggs = run_analysis(records, DEFAULT_RULES, workers=4)
    assert len(aggs) == 803
    assert sum(a.quantity for a in aggs) == 80_300


# --- flush policy ------------------------------------------------------------------

def _buffer(opened_at=0, nbytes=0):
    buf = CaptureBuffer(opened_at=opened_at)
    buf.bytes = nbytes
    return buf


def test_flush_at_exact_volume():
    assert monitor_flush(_buffer(nbytes=1000), FlushPolicy(10, 1000), now=0) == FLUSH


def test_fresh_buffer_holds():
    assert monitor_flush(_buffer(opened_at=5), FlushPolicy(10, 1000), now=5) == HOLD


def test_volume_alone_triggers_flush():
    assert monitor_flush(_buffer(nbytes=5000), FlushPolicy(10, 1000), now=1_000_000) == FLUSH


def test_elapsed_alone_triggers_flush():
    assert monitor_flush(_buffer(), FlushPolicy(10, 1000), now=10_000_000) == FLUSH
    assert monitor_flush(_buffer(), FlushPolicy(10, 1000), now=9_999_999) == HOLD


def test_flush_policy_rejects_non_positive():
    with pytest.raises(ValueError):
        FlushPolicy(0, 1)
    with pytest.raises(ValueError):
        FlushPolicy(1, 0)


@given(st.integers(0, 10**8), st.integers(0, 10**6), st.integers(0, 10**8), st.integers(0, 10**6),
       st.floats(0.001, 100), st.integers(1, 10**6))
def test_flush_is_monotone(now, nbytes, later, extra, max_elapsed, max_volume):
    policy = FlushPolicy(max_elapsed, max_volume)
    if monitor_flush(_buffer(nbytes=nbytes), policy, now) == FLUSH:
        assert monitor_flush(_buffer(nbytes=nbytes + extra), policy, now + later) == FLUSH


def test_buffer_tracks_serialized_bytes():
    records = generate_legit_traffic(spec(50))
    buf = CaptureBuffer(opened_at=0)
    buf.extend(records)
    assert buf.bytes == sum(record_size(r) for r in records)
    with pytest.raises(ValueError):
        buf.append(records[0])
