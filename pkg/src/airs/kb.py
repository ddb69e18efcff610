"""Knowledge base: attacks, response actions, per-pair profiles, signatures and outcome history."""
from __future__ import annotations

import csv
import io
import os
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from urllib.parse import quote_from_bytes, unquote_to_bytes

from .signatures import (
    FLAG_PATTERN,
    PAYLOAD_CONTAINS,
    TCP_FLAGS,
    SignatureRule,
)

ACTION_KINDS = ("notify", "block-source", "rate-limit-source", "isolate-target", "restart-target")

SECTIONS = ("attacks", "actions", "profiles", "signatures", "outcomes")


ID_PATTERN = re.compile(r"[A-Za-z0-9_.-]+")


class KBError(Exception):
    pass


class KBNotFoundError(KBError, FileNotFoundError):
    pass


class KBFormatError(KBError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class IncompleteProfileMatrixError(KBError):
    pass


class DanglingReferenceError(KBError):
    pass


class InvalidKnowledgeBaseError(KBError):
    pass


def _check_id(value: str) -> None:
    if not ID_PATTERN.fullmatch(value or ""):
        raise ValueError(f"invalid identifier {value!r}")


def _check_text(*values: str) -> None:
    for v in values:
        if not v.isprintable():
            raise ValueError(f"names and descriptions must be printable single-line text: {v!r}")


@dataclass(frozen=True)
class AttackType:
    id: str
    name: str = ""
    description: str = ""

    def __post_init__(self):
        _check_id(self.id)
        _check_text(self.name, self.description)


@dataclass(frozen=True)
class ResponseAction:
    id: str
    name: str = ""
    kind: str = "notify"

    def __post_init__(self):
        _check_id(self.id)
        _check_text(self.name)
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"action {self.id}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class ActionProfile:
    action_id: str
    attack_id: str
    time: float
    cost: float
    probability: float
    trials: int = 0
    successes: int = 0

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability {self.probability} outside [0, 1]")
        if self.time < 0 or self.cost < 0:
            raise ValueError("time and cost must be >= 0")
        if self.trials < 0 or not 0 <= self.successes <= self.trials:
            raise ValueError(f"bad counts trials={self.trials} successes={self.successes}")

    @property
    def key(self):
        return (self.action_id, self.attack_id)


@dataclass(frozen=True)
class OutcomeRecord:
    action_id: str
    attack_id: str
    success: bool
    observed_time: float
    observed_cost: float
    timestamp: int = 0

    def __post_init__(self):
        if self.observed_time < 0 or self.observed_cost < 0:
            raise ValueError("observed time and cost must be >= 0")


@dataclass(frozen=True)
class KnowledgeBase:
    attacks: tuple
    actions: tuple
    profiles: tuple
    signatures: tuple = ()
    history: tuple = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("attacks", "actions", "profiles", "signatures", "history"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        attack_ids = [a.id for a in self.attacks]
        action_ids = [a.id for a in self.actions]
        for label, ids in (("attack", attack_ids), ("action", action_ids)):
            if len(set(ids)) != len(ids):
                raise InvalidKnowledgeBaseError(f"duplicate {label} id")
        index = {}
        for p in self.profiles:
            if p.action_id not in action_ids:
                raise DanglingReferenceError(f"profile references unknown action {p.action_id!r}")
            if p.attack_id not in attack_ids:
                raise DanglingReferenceError(f"profile references unknown attack {p.attack_id!r}")
            if p.key in index:
                raise InvalidKnowledgeBaseError(f"duplicate profile {p.key}")
            index[p.key] = p
        missing = [(a, e) for a in action_ids for e in attack_ids if (a, e) not in index]
        if missing:
            raise IncompleteProfileMatrixError(f"missing profiles: {missing}")
        sig_ids = [s.id for s in self.signatures]
        if len(set(sig_ids)) != len(sig_ids):
            raise InvalidKnowledgeBaseError("duplicate signature id")
        for s in self.signatures:
            if s.attack_id not in attack_ids:
                raise DanglingReferenceError(f"signature {s.id} references unknown attack {s.attack_id!r}")
        for o in self.history:
            if (o.action_id, o.attack_id) not in index:
                raise DanglingReferenceError(f"outcome references unknown pair {(o.action_id, o.attack_id)}")
        object.__setattr__(self, "_index", index)

    @property
    def attack_ids(self) -> list[str]:
        return [a.id for a in self.attacks]

    @property
    def action_ids(self) -> list[str]:
        return [a.id for a in self.actions]

    def profile(self, action_id: str, attack_id: str) -> ActionProfile:
        try:
            return self._index[(action_id, attack_id)]
        except KeyError:
            raise DanglingReferenceError(f"no profile for {(action_id, attack_id)}") from None

    def action(self, action_id: str) -> ResponseAction:
        for a in self.actions:
            if a.id == action_id:
                return a
        raise DanglingReferenceError(f"unknown action {action_id!r}")


def record_outcome(kb: KnowledgeBase, outcome: OutcomeRecord) -> KnowledgeBase:
    """Fold one observed outcome into its profile.

    Probability becomes the Laplace estimate (successes+1)/(trials+2). Time and cost
    become running means where the initial estimate counts as one observation.
    """
    old = kb.profile(outcome.action_id, outcome.attack_id)
    seen = old.trials + 1
    trials = old.trials + 1
    successes = old.successes + (1 if outcome.success else 0)
    new = replace(
        old,
        trials=trials,
        successes=successes,
        probability=(successes + 1) / (trials + 2),
        time=(old.time * seen + outcome.observed_time) / (seen + 1),
        cost=(old.cost * seen + outcome.observed_cost) / (seen + 1),
    )
    profiles = tuple(new if p.key == old.key else p for p in kb.profiles)
    return replace(kb, profiles=profiles, history=kb.history + (outcome,))


# --- file format -----------------------------------------------------------

def _num(value: str) -> float:
    return float(value)


def _encode_bytes(data: bytes) -> str:
    return quote_from_bytes(data, safe="")


def encode_signature(s: SignatureRule) -> list[str]:
    if s.kind == PAYLOAD_CONTAINS:
        pattern = _encode_bytes(s.payload)
    else:
        pattern = "|".join(f for f in TCP_FLAGS if f in s.flags)
    return [s.id, s.attack_id, s.protocol, s.kind, pattern]


def decode_signature(row: list[str]) -> SignatureRule:
    sid, attack_id, proto, kind, pattern = row
    if kind == FLAG_PATTERN:
        return SignatureRule(sid, attack_id, proto, kind, flags=frozenset(pattern.split("|")))
    return SignatureRule(sid, attack_id, proto, kind, payload=unquote_to_bytes(pattern))


def _parse_bool(value: str) -> bool:
    if value not in ("0", "1"):
        raise ValueError(f"expected 0 or 1, got {value!r}")
    return value == "1"


_COLUMNS = {
    "attacks": 3,
    "actions": 3,
    "profiles": 7,
    "signatures": 5,
    "outcomes": 6,
}


def _build(section: str, row: list[str]):
    if section == "attacks":
        return AttackType(*row)
    if section == "actions":
        return ResponseAction(*row)
    if section == "profiles":
        a, e, t, c, p, n, s = row
        return ActionProfile(a, e, _num(t), _num(c), _num(p), int(n), int(s))
    if section == "signatures":
        return decode_signature(row)
    a, e, ok, t, c, ts = row
    return OutcomeRecord(a, e, _parse_bool(ok), _num(t), _num(c), int(ts))


def parse_kb(text: str) -> KnowledgeBase:
    items = {name: [] for name in SECTIONS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in items:
                raise KBFormatError(lineno, f"unknown section [{section}]")
            continue
        if section is None:
            raise KBFormatError(lineno, "record outside of any section")
        row = next(csv.reader([raw.rstrip("\r")]))
        if len(row) != _COLUMNS[section]:
            raise KBFormatError(lineno, f"[{section}] expects {_COLUMNS[section]} fields, got {len(row)}")
        try:
            items[section].append(_build(section, row))
        except ValueError as exc:
            raise KBFormatError(lineno, str(exc)) from exc
    return KnowledgeBase(items["attacks"], items["actions"], items["profiles"],
                         items["signatures"], items["outcomes"])


def format_kb(kb: KnowledgeBase) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    buf.write("# airs knowledge base\n[attacks]\n# id,name,description\n")
    writer.writerows([a.id, a.name, a.description] for a in kb.attacks)
    buf.write("\n[actions]\n# id,name,kind\n")
    writer.writerows([a.id, a.name, a.kind] for a in kb.actions)
    buf.write("\n[profiles]\n# action_id,attack_id,time,cost,probability,trials,successes\n")
    writer.writerows(
        [p.action_id, p.attack_id, repr(p.time), repr(p.cost), repr(p.probability), p.trials, p.successes]
        for p in kb.profiles
    )
    buf.write("\n[signatures]\n# id,attack_id,protocol,matcher,pattern\n")
    writer.writerows(encode_signature(s) for s in kb.signatures)
    if kb.history:
        buf.write("\n[outcomes]\n# action_id,attack_id,success,observed_time,observed_cost,timestamp_us\n")
        writer.writerows(
            [o.action_id, o.attack_id, int(o.success), repr(o.observed_time), repr(o.observed_cost), o.timestamp]
            for o in kb.history
        )
    return buf.getvalue()


def load_kb(path) -> KnowledgeBase:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise KBNotFoundError(f"knowledge base not found: {path}") from None
    return parse_kb(text)


def save_kb(kb: KnowledgeBase, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_kb(kb))
    os.replace(tmp, path)


def bundled_kb(name: str) -> KnowledgeBase:
    """Load a KB shipped with the package (``table_ii`` or ``table_ix``)."""
    text = resources.files("airs.data").joinpath(f"{name}.kb").read_text(encoding="utf-8")
    return parse_kb(text)
