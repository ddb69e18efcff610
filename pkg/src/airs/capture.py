"""Packet-record capture format, synthetic traffic generation and the monitor flush policy."""
from __future__ import annotations

import base64
import binascii
import ipaddress
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

from .signatures import (
    DEFAULT_RULES,
    FLAG_PATTERN,
    PROTOCOLS,
    TCP_FLAGS,
    SignatureRule,
    rule_for_attack,
)

HEADER = "airscap v1"
BASE_TIMESTAMP_US = 1_500_000_000_000_000
PACKET_GAP_US = 100
JITTER_US = 40
PAYLOADS_PER_RUN = 100
PACKETS_PER_RUN = PAYLOADS_PER_RUN + 2

HOLD = "hold"
FLUSH = "flush"

# Disjoint from every default signature marker; checked at import below.
BENIGN_PAYLOADS = (
    b"GET /index.html HTTP/1.1\r\nHost: www.example.org\r\n\r\n",
    b"GET /static/app.js HTTP/1.1\r\nHost: www.example.org\r\n\r\n",
    b"POST /api/login HTTP/1.1\r\nContent-Length: 27\r\n\r\nuser=alice&pass=hunter2xyz",
    b"HTTP/1.1 200 OK\r\nContent-Type: text/html\r\n\r\n<html></html>",
    b"GET /images/logo.png HTTP/1.1\r\nAccept: image/*\r\n\r\n",
    b"\x12\x34\x01\x00\x00\x01\x00\x00\x00\x00\x00\x00\x03www\x07example\x03org\x00\x00\x01\x00\x01",
    b"SELECT-free health probe ok",
    b"keepalive",
    b"",
)
_LEGIT_TCP_FLAGS = (
    frozenset({"ACK"}),
    frozenset({"ACK", "PSH"}),
    frozenset({"SYN"}),
    frozenset({"FIN", "ACK"}),
)

for _rule in DEFAULT_RULES:
    if _rule.kind == FLAG_PATTERN:
        assert _rule.flags not in _LEGIT_TCP_FLAGS
    else:
        assert not any(_rule.payload in p for p in BENIGN_PAYLOADS)


class CaptureFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@lru_cache(maxsize=65536)
def _check_ipv4(ip: str) -> str:
    if str(ipaddress.IPv4Address(ip)) != ip:
        raise ValueError(f"non-canonical IPv4 address {ip!r}")
    return ip


def check_ipv4(ip: str) -> str:
    try:
        return _check_ipv4(ip)
    except (ipaddress.AddressValueError, TypeError) as exc:
        raise ValueError(f"invalid IPv4 address {ip!r}") from exc


@dataclass(frozen=True, slots=True)
class PacketRecord:
    timestamp: int
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    protocol: str
    flags: frozenset = frozenset()
    seq: int = 0
    payload: bytes = b""

    def __post_init__(self):
        check_ipv4(self.src_ip)
        check_ipv4(self.dst_ip)
        if not 0 <= self.src_port <= 65535 or not 0 <= self.dst_port <= 65535:
            raise ValueError(f"port out of range: {self.src_port}/{self.dst_port}")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if not isinstance(self.flags, frozenset):
            object.__setattr__(self, "flags", frozenset(self.flags))
        if self.flags and self.protocol != "TCP":
            raise ValueError("flags are only allowed on TCP packets")
        if not self.flags <= _FLAG_SET:
            raise ValueError(f"unknown TCP flags {sorted(self.flags - _FLAG_SET)}")
        if not 0 <= self.seq < 2**32:
            raise ValueError(f"seq out of range: {self.seq}")
        if self.timestamp < 0:
            raise ValueError("negative timestamp")


_FLAG_SET = frozenset(TCP_FLAGS)


def format_flags(flags) -> str:
    if not flags:
        return "-"
    return ",".join(f for f in TCP_FLAGS if f in flags)


def format_record(r: PacketRecord) -> str:
    return (
        f"{r.timestamp}\t{r.src_ip}\t{r.src_port}\t{r.dst_ip}\t{r.dst_port}\t"
        f"{r.protocol}\t{format_flags(r.flags)}\t{r.seq}\t"
        f"{base64.b64encode(r.payload).decode('ascii')}\n"
    )


def record_size(r: PacketRecord) -> int:
    """Serialized size in bytes (the line, newline included)."""
    return len(format_record(r))


def parse_record(line: str, lineno: int = 0) -> PacketRecord:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 9:
        raise CaptureFormatError(lineno, f"expected 9 tab-separated fields, got {len(fields)}")
    ts, src, sport, dst, dport, proto, flags, seq, payload = fields
    try:
        flag_set = frozenset() if flags == "-" else frozenset(flags.split(","))
        return PacketRecord(
            timestamp=int(ts),
            src_ip=src,
            src_port=int(sport),
            dst_ip=dst,
            dst_port=int(dport),
            protocol=proto,
            flags=flag_set,
            seq=int(seq),
            payload=base64.b64decode(payload, validate=True),
        )
    except (ValueError, binascii.Error) as exc:
        raise CaptureFormatError(lineno, str(exc)) from exc


def write_capture(records: Iterable[PacketRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HEADER + "\n")
        for r in records:
            fh.write(format_record(r))


def read_capture(path) -> list[PacketRecord]:
    with open(path, encoding="utf-8", newline="\n") as fh:
        header = fh.readline()
        if header.rstrip("\n") != HEADER:
            raise CaptureFormatError(1, f"missing {HEADER!r} header")
        return [parse_record(line, n) for n, line in enumerate(fh, start=2)]


@dataclass(frozen=True)
class FlushPolicy:
    max_elapsed: float  # seconds
    max_volume: int  # bytes

    def __post_init__(self):
        if self.max_elapsed <= 0 or self.max_volume <= 0:
            raise ValueError("flush thresholds must be positive")


@dataclass
class CaptureBuffer:
    opened_at: int  # microseconds
    records: list = field(default_factory=list)
    bytes: int = 0

    def append(self, record: PacketRecord) -> None:
        if self.records and record.timestamp < self.records[-1].timestamp:
            raise ValueError("capture buffer records must be ordered by timestamp")
        self.records.append(record)
        self.bytes += record_size(record)

    def extend(self, records: Iterable[PacketRecord]) -> None:
        for r in records:
            self.append(r)


def monitor_flush(buffer: CaptureBuffer, policy: FlushPolicy, now: int) -> str:
    elapsed = (now - buffer.opened_at) / 1e6
    if elapsed >= policy.max_elapsed or buffer.bytes >= policy.max_volume:
        return FLUSH
    return HOLD


@dataclass(frozen=True)
class TrafficSpec:
    legit_packet_count: int
    legit_hosts: Sequence[str]
    target_ip: str
    attack_runs: Sequence[tuple] = ()  # (attacker_ip, attack_id, repetitions)
    seed: int = 0

    def __post_init__(self):
        if self.legit_packet_count < 0:
            raise ValueError("legit_packet_count must be >= 0")
        if self.legit_packet_count and not self.legit_hosts:
            raise ValueError("legit traffic needs at least one host")
        for ip in self.legit_hosts:
            check_ipv4(ip)
        check_ipv4(self.target_ip)
        for attacker, attack_id, reps in self.attack_runs:
            check_ipv4(attacker)
            if reps < 1:
                raise ValueError(f"repetitions must be >= 1, got {reps}")
            rule_for_attack(attack_id)
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def benign_packet(rng: random.Random, src: str, dst: str, ts: int) -> PacketRecord:
    proto = rng.choices(PROTOCOLS, weights=(8, 3, 1))[0]
    payload = rng.choice(BENIGN_PAYLOADS)
    if proto == "TCP":
        return PacketRecord(
            ts, src, rng.randint(1024, 65535), dst, rng.choice((80, 443, 8080)), "TCP",
            rng.choice(_LEGIT_TCP_FLAGS), rng.getrandbits(32), payload,
        )
    if proto == "UDP":
        return PacketRecord(ts, src, rng.randint(1024, 65535), dst, 53, "UDP", frozenset(),
                            rng.getrandbits(32), payload)
    return PacketRecord(ts, src, 0, dst, 0, "ICMP", frozenset(), rng.getrandbits(32), b"")


def attack_packet(rule: SignatureRule, src: str, sport: int, dst: str, ts: int, seq: int) -> PacketRecord:
    """One packet that the given rule detects."""
    http = f"GET / HTTP/1.0\r\nHOST: {dst}\r\n\r".encode()
    if rule.kind == FLAG_PATTERN:
        return PacketRecord(ts, src, sport, dst, 80, "TCP", rule.flags, seq, http)
    payload = http + rule.payload + b"\n"
    if rule.protocol == "TCP":
        return PacketRecord(ts, src, sport, dst, 80, "TCP", frozenset({"ACK"}), seq, payload)
    if rule.protocol == "UDP":
        return PacketRecord(ts, src, sport, dst, 123, "UDP", frozenset(), seq, payload)
    return PacketRecord(ts, src, 0, dst, 0, "ICMP", frozenset(), seq, payload)


def _next_ts(rng: random.Random, ts: int) -> int:
    return ts + PACKET_GAP_US + rng.randint(-JITTER_US, JITTER_US)


def _legit_records(spec: TrafficSpec, rng: random.Random) -> list[PacketRecord]:
    out = []
    ts = BASE_TIMESTAMP_US
    for _ in range(spec.legit_packet_count):
        ts = _next_ts(rng, ts)
        out.append(benign_packet(rng, rng.choice(spec.legit_hosts), spec.target_ip, ts))
    return out


def generate_legit_traffic(spec: TrafficSpec) -> list[PacketRecord]:
    return _legit_records(spec, random.Random(spec.seed))


def _attack_run(rng, rule, attacker_ip, target_ip, start_ts) -> list[PacketRecord]:
    # SYN, ACK, then the payload packets, as in the attack script.
    sport = rng.randint(1024, 65535)
    seq = rng.getrandbits(32)
    nxt = (seq + 1) % 2**32
    ts = start_ts
    run = [PacketRecord(ts, attacker_ip, sport, target_ip, 80, "TCP", frozenset({"SYN"}), seq)]
    ts = _next_ts(rng, ts)
    run.append(PacketRecord(ts, attacker_ip, sport, target_ip, 80, "TCP", frozenset({"ACK"}), nxt))
    for _ in range(PAYLOADS_PER_RUN):
        ts = _next_ts(rng, ts)
        run.append(attack_packet(rule, attacker_ip, sport, target_ip, ts, nxt))
    return run


def _attack_records(existing, runs, target_ip, rng) -> list[PacketRecord]:
    lo = existing[0].timestamp if existing else BASE_TIMESTAMP_US
    hi = existing[-1].timestamp if existing else BASE_TIMESTAMP_US
    out = []
    for attacker_ip, attack_id, reps in runs:
        rule = rule_for_attack(attack_id)
        for _ in range(reps):
            out.extend(_attack_run(rng, rule, attacker_ip, target_ip, rng.randint(lo, hi)))
    return out


def inject_attack(records, attacker_ip, target_ip, attack_id, repetitions, seed=0) -> list[PacketRecord]:
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    check_ipv4(attacker_ip)
    check_ipv4(target_ip)
    rule_for_attack(attack_id)
    records = list(records)
    rng = random.Random(seed)
    added = _attack_records(records, [(attacker_ip, attack_id, repetitions)], target_ip, rng)
    return sorted(records + added, key=lambda r: r.timestamp)


def generate_traffic(spec: TrafficSpec) -> list[PacketRecord]:
    """Legitimate traffic with every attack run of `spec` injected, ordered by timestamp."""
    rng = random.Random(spec.seed)
    legit = _legit_records(spec, rng)
    added = _attack_records(legit, spec.attack_runs, spec.target_ip, rng)
    return sorted(legit + added, key=lambda r: r.timestamp)


LEGIT_HOSTS = tuple(f"192.168.10.{i}" for i in range(10, 30))
DEFAULT_TARGET = "150.162.63.23"


def scale_dataset(packets: int, attacks: int, seed: int = 0) -> list[PacketRecord]:
    """`packets` records in total, `attacks` of them being distinct single-run attackers."""
    if packets < 0 or attacks < 0 or attacks * PACKETS_PER_RUN > packets:
        raise ValueError(f"infeasible dataset: {attacks} runs of {PACKETS_PER_RUN} in {packets} packets")
    rng = random.Random(seed)
    attack_ids = sorted({r.attack_id for r in DEFAULT_RULES})
    attackers = [str(ipaddress.IPv4Address((10 << 24) + n)) for n in rng.sample(range(1, 2**24 - 1), attacks)]
    runs = [(ip, rng.choice(attack_ids), 1) for ip in attackers]
    spec = TrafficSpec(
        legit_packet_count=packets - attacks * PACKETS_PER_RUN,
        legit_hosts=LEGIT_HOSTS,
        target_ip=DEFAULT_TARGET,
        attack_runs=runs,
        seed=rng.getrandbits(64),
    )
    return generate_traffic(spec)


TABLE_VIII_SOURCES = (
    ("150.162.63.200", "E1", 275),
    ("150.162.63.205", "E2", 2000),
    ("150.162.63.202", "E3", 2000),
)


def table_viii_scenario(legit_packets: int = 5000, seed: int = 0) -> list[PacketRecord]:
    """Three attackers against 150.162.63.23 producing 275/2000/2000 matching packets."""
    rng = random.Random(seed)
    spec = TrafficSpec(legit_packets, LEGIT_HOSTS, DEFAULT_TARGET, seed=seed)
    records = _legit_records(spec, rng)
    lo = records[0].timestamp if records else BASE_TIMESTAMP_US
    hi = records[-1].timestamp if records else BASE_TIMESTAMP_US
    for src, attack_id, count in TABLE_VIII_SOURCES:
        rule = rule_for_attack(attack_id)
        sport = rng.randint(1024, 65535)
        ts = rng.randint(lo, hi)
        for _ in range(count):
            ts = _next_ts(rng, ts)
            records.append(attack_packet(rule, src, sport, DEFAULT_TARGET, ts, rng.getrandbits(32)))
    return sorted(records, key=lambda r: r.timestamp)
