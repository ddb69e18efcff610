"""Signature rules: per-protocol patterns that identify a known attack in one packet."""
from __future__ import annotations

from dataclasses import dataclass, field

PROTOCOLS = ("TCP", "UDP", "ICMP")
TCP_FLAGS = ("SYN", "ACK", "FIN", "RST", "PSH")

PAYLOAD_CONTAINS = "payload-contains"
FLAG_PATTERN = "flag-pattern"
MATCHER_KINDS = (PAYLOAD_CONTAINS, FLAG_PATTERN)


@dataclass(frozen=True)
class SignatureRule:
    id: str
    attack_id: str
    protocol: str
    kind: str
    payload: bytes = b""
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.id or not self.attack_id:
            raise ValueError("signature rule needs non-empty id and attack_id")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.kind == PAYLOAD_CONTAINS:
            if not self.payload:
                raise ValueError(f"rule {self.id}: payload-contains pattern must be non-empty")
        elif self.kind == FLAG_PATTERN:
            if self.protocol != "TCP":
                raise ValueError(f"rule {self.id}: flag patterns only apply to TCP")
            object.__setattr__(self, "flags", frozenset(self.flags))
            if not self.flags or not self.flags <= set(TCP_FLAGS):
                raise ValueError(f"rule {self.id}: bad flag set {sorted(self.flags)}")
        else:
            raise ValueError(f"rule {self.id}: unknown matcher kind {self.kind!r}")

    def matches(self, packet) -> bool:
        if packet.protocol != self.protocol:
            return False
        if self.kind == PAYLOAD_CONTAINS:
            return self.payload in packet.payload
        return packet.flags == self.flags


def payload_rule(id: str, attack_id: str, protocol: str, pattern: bytes) -> SignatureRule:
    return SignatureRule(id, attack_id, protocol, PAYLOAD_CONTAINS, payload=pattern)


def flag_rule(id: str, attack_id: str, flags) -> SignatureRule:
    return SignatureRule(id, attack_id, "TCP", FLAG_PATTERN, flags=frozenset(flags))


# E1 is the payload of the attack script (HTTP GET carrying "SQL INJECT").
DEFAULT_RULES = (
    payload_rule("S1", "E1", "TCP", b"SQL INJECT"),
    payload_rule("S2", "E2", "UDP", b"MONLIST AMPLIFY"),
    flag_rule("S3", "E3", {"SYN", "FIN"}),
)


def rule_for_attack(attack_id: str, rules=DEFAULT_RULES) -> SignatureRule:
    """First rule (declaration order) that detects `attack_id`."""
    for rule in rules:
        if rule.attack_id == attack_id:
            return rule
    raise KeyError(f"no signature rule for attack {attack_id!r}")
