"""Map-reduce signature detection over partitioned capture data."""
from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .signatures import DEFAULT_RULES, SignatureRule


@dataclass(frozen=True)
class AttackAlert:
    src_ip: str
    dst_ip: str
    protocol: str
    attack_id: str
    signature_id: str

    @property
    def key(self):
        return (self.src_ip, self.dst_ip, self.protocol, self.attack_id)


@dataclass(frozen=True, order=True)
class AttackAggregate:
    src_ip: str
    dst_ip: str
    protocol: str
    attack_id: str
    signature_id: str
    quantity: int

    def __post_init__(self):
        if self.quantity < 1:
            raise ValueError("aggregate quantity must be >= 1")

    @property
    def key(self):
        return (self.src_ip, self.dst_ip, self.protocol, self.attack_id)


@dataclass(frozen=True)
class Partition:
    index: int
    records: Sequence


def partition(records: Sequence, n: int) -> list[Partition]:
    """Split into at most `n` contiguous, order-preserving slices whose sizes differ by at most one."""
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    records = list(records)
    if not records:
        return []
    n = min(n, len(records))
    base, extra = divmod(len(records), n)
    out, start = [], 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        out.append(Partition(i, records[start:start + size]))
        start += size
    return out


def _rules_by_protocol(rules: Iterable[SignatureRule]) -> dict[str, list[SignatureRule]]:
    table = defaultdict(list)
    for rule in rules:
        table[rule.protocol].append(rule)
    return table


def map_detect(part, rules: Sequence[SignatureRule] = DEFAULT_RULES) -> list[AttackAlert]:
    records = part.records if isinstance(part, Partition) else part
    by_proto = defaultdict(list)
    for packet in records:
        by_proto[packet.protocol].append(packet)
    candidates = _rules_by_protocol(rules)
    alerts = []
    for proto, packets in by_proto.items():
        proto_rules = candidates.get(proto)
        if not proto_rules:
            continue
        for packet in packets:
            for rule in proto_rules:
                if rule.matches(packet):
                    alerts.append(AttackAlert(packet.src_ip, packet.dst_ip, proto,
                                              rule.attack_id, rule.id))
                    break
    return alerts


def _canonical(table: dict) -> list[AttackAggregate]:
    return [AttackAggregate(*key, sig, qty) for key, (sig, qty) in sorted(table.items())]


def reduce_alerts(alerts: Iterable[AttackAlert]) -> list[AttackAggregate]:
    """Group by (src, dst, protocol, attack); returned sorted by key.

    When one key collects alerts from several rules the lexicographically smallest
    signature id is reported, so the result does not depend on alert order.
    """
    table: dict = {}
    for alert in alerts:
        sig, qty = table.get(alert.key, (alert.signature_id, 0))
        table[alert.key] = (min(sig, alert.signature_id), qty + 1)
    return _canonical(table)


def merge_aggregates(a: Iterable[AttackAggregate], b: Iterable[AttackAggregate]) -> list[AttackAggregate]:
    table: dict = {}
    for agg in (*a, *b):
        if agg.key in table:
            sig, qty = table[agg.key]
            table[agg.key] = (min(sig, agg.signature_id), qty + agg.quantity)
        else:
            table[agg.key] = (agg.signature_id, agg.quantity)
    return _canonical(table)


def _map_reduce(records, rules):
    return reduce_alerts(map_detect(records, rules))


def run_analysis(records: Sequence, rules: Sequence[SignatureRule] = DEFAULT_RULES,
                 workers: int = 1, processes: bool = False) -> list[AttackAggregate]:
    """Map and reduce each partition concurrently, then merge the partial results.

    Threads are used by default; ``processes=True`` switches to a process pool.
    """
    parts = partition(records, workers)
    rules = tuple(rules)
    if len(parts) <= 1:
        return _map_reduce(parts[0].records if parts else [], rules)
    pool_cls = ProcessPoolExecutor if processes else ThreadPoolExecutor
    with pool_cls(max_workers=len(parts)) as pool:
        partials = list(pool.map(_map_reduce, [p.records for p in parts], [rules] * len(parts)))
    result: list[AttackAggregate] = []
    for partial in partials:
        result = merge_aggregates(result, partial)
    return result


def format_aggregate_lines(aggregates: Iterable[AttackAggregate]) -> str:
    return "".join(
        f"{a.src_ip}\t{a.dst_ip}\t{a.protocol}\t{a.signature_id}\t{a.attack_id}\t{a.quantity}\n"
        for a in aggregates
    )


def parse_aggregate_lines(text: str) -> list[AttackAggregate]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        src, dst, proto, sig, attack, qty = line.split("\t")
        out.append(AttackAggregate(src, dst, proto, attack, sig, int(qty)))
    return out


def format_aggregate_table(aggregates: Sequence[AttackAggregate]) -> str:
    header = ("#", "Source IP", "Destination IP", "Attack", "Quantity")
    rows = [(str(i), a.src_ip, a.dst_ip, a.attack_id, str(a.quantity))
            for i, a in enumerate(aggregates, start=1)]
    widths = [max(len(r[c]) for r in [header, *rows]) for c in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in [header, *rows]]
    return "\n".join(lines) + "\n"
