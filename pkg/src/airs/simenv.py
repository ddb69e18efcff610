"""Discrete-tick simulated environment, response executor and the MAPE-K loop driver."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Sequence

from .analysis import AttackAggregate, run_analysis
from .capture import (
    BASE_TIMESTAMP_US,
    FLUSH,
    CaptureBuffer,
    FlushPolicy,
    PacketRecord,
    attack_packet,
    benign_packet,
    monitor_flush,
)
from .kb import KnowledgeBase, OutcomeRecord, load_kb, record_outcome
from .planner import ResponsePlan, select_response
from .signatures import DEFAULT_RULES, rule_for_attack

ATTACK = "attack"
LEGIT = "legit"

# action kind -> (ingress rule kind or None, side of the flow it targets)
DEFAULT_EFFECTS = {
    "notify": (None, "source"),
    "block-source": ("block", "source"),
    "rate-limit-source": ("rate-limit", "source"),
    "isolate-target": ("isolate", "target"),
    "restart-target": ("restart", "target"),
}


class ExecutionError(ValueError):
    pass


@dataclass(frozen=True)
class Host:
    ip: str
    healthy: bool = True


@dataclass(frozen=True)
class Attacker:
    ip: str
    attack_id: str
    target_ip: str
    rate: int
    active: bool = True


@dataclass(frozen=True)
class LegitSource:
    ip: str
    target_ip: str
    rate: int


@dataclass(frozen=True)
class IngressRule:
    kind: str  # block | rate-limit | isolate | restart
    subject: str
    active_from: int
    cap: int = 0
    until: int | None = None  # restart: host comes back at this tick

    def active(self, tick: int) -> bool:
        return self.active_from <= tick and (self.until is None or tick < self.until)


@dataclass(frozen=True)
class Delivery:
    tick: int
    src_ip: str
    dst_ip: str
    klass: str
    emitted: int
    delivered: int


@dataclass(frozen=True)
class SimEnvironment:
    hosts: tuple
    attackers: tuple = ()
    legit_sources: tuple = ()
    ingress_rules: tuple = ()
    delivered_log: tuple = ()
    tick: int = 0
    rules: tuple = DEFAULT_RULES
    seed: int = 0
    tick_us: int = 1_000_000
    last_packets: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        ips = {h.ip for h in self.hosts}
        for src in (*self.attackers, *self.legit_sources):
            if src.rate < 0:
                raise ValueError(f"negative rate for {src.ip}")
            if src.target_ip not in ips:
                raise ValueError(f"{src.ip} targets unknown host {src.target_ip}")
        known = ips | {a.ip for a in self.attackers} | {s.ip for s in self.legit_sources}
        for rule in self.ingress_rules:
            if rule.subject not in known:
                raise ValueError(f"ingress rule on unknown ip {rule.subject}")

    def now_us(self) -> int:
        return BASE_TIMESTAMP_US + self.tick * self.tick_us


def _delivered(env: SimEnvironment, src: str, dst: str, emitted: int) -> int:
    delivered = emitted
    for rule in env.ingress_rules:
        if not rule.active(env.tick):
            continue
        if rule.kind in ("isolate", "restart") and rule.subject == dst:
            return 0
        if rule.kind == "block" and rule.subject == src:
            return 0
        if rule.kind == "rate-limit" and rule.subject == src:
            delivered = min(delivered, rule.cap)
    return delivered


def step(env: SimEnvironment) -> SimEnvironment:
    """Advance one tick: every active source emits `rate` packets, ingress rules filter them."""
    tick = env.tick
    rng = random.Random(env.seed * 1_000_003 + tick)
    attackers = env.attackers
    hosts = env.hosts
    # restarts that complete this tick drop every session against the host
    for rule in env.ingress_rules:
        if rule.kind == "restart" and rule.until == tick:
            attackers = tuple(replace(a, active=False) if a.target_ip == rule.subject else a
                              for a in attackers)
    down = {r.subject for r in env.ingress_rules if r.kind == "restart" and r.active(tick)}
    hosts = tuple(replace(h, healthy=h.ip not in down) for h in hosts)

    flows = [(a.ip, a.target_ip, ATTACK, a.rate if a.active else 0, a.attack_id) for a in attackers]
    flows += [(s.ip, s.target_ip, LEGIT, s.rate, None) for s in env.legit_sources]
    total = sum(f[3] for f in flows)
    gap = max(1, env.tick_us // (total + 1))
    base = env.now_us()
    log, packets, k = [], [], 0
    for src, dst, klass, emitted, attack_id in flows:
        delivered = _delivered(env, src, dst, emitted)
        log.append(Delivery(tick, src, dst, klass, emitted, delivered))
        if klass == ATTACK and delivered:
            rule = rule_for_attack(attack_id, env.rules)
            sport = 1024 + rng.randrange(64512)
        for _ in range(delivered):
            ts = base + k * gap
            k += 1
            if klass == ATTACK:
                packets.append(attack_packet(rule, src, sport, dst, ts, rng.getrandbits(32)))
            else:
                packets.append(benign_packet(rng, src, dst, ts))
    packets.sort(key=lambda p: p.timestamp)
    return replace(env, tick=tick + 1, attackers=attackers, hosts=hosts,
                   delivered_log=env.delivered_log + tuple(log), last_packets=tuple(packets))


def run_ticks(env: SimEnvironment, n: int) -> SimEnvironment:
    for _ in range(n):
        env = step(env)
    return env


@dataclass(frozen=True)
class ExecutorConfig:
    rate_limit_cap: int = 3
    ticks_per_time_unit: float = 1.0
    success_threshold: float = 1.0
    window: int = 5
    effects: dict = field(default_factory=lambda: dict(DEFAULT_EFFECTS))


@dataclass(frozen=True)
class ResponseEffect:
    kind: str
    subject: str
    applied_at: int
    cost_charged: float
    duration: int
    action_id: str = ""
    attack_id: str = ""
    side: str = "source"
    queued_ticks: int = 0

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("effect duration must be >= 0")

    @property
    def active_from(self) -> int:
        return self.applied_at + self.duration


def apply_action(env: SimEnvironment, plan: ResponsePlan, aggregates: Sequence[AttackAggregate],
                 kb: KnowledgeBase, executor: ExecutorConfig = ExecutorConfig(),
                 queued_ticks: int = 0) -> tuple[SimEnvironment, list[ResponseEffect]]:
    """Install the planned action against every aggregate the plan covers.

    Returns one effect per distinct (subject, attack) pair.
    """
    action = kb.action(plan.selected_action_id)
    try:
        rule_kind, side = executor.effects[action.kind]
    except KeyError:
        raise ExecutionError(f"no effect mapping for action kind {action.kind!r}") from None
    relevant = [a for a in aggregates if a.attack_id in plan.detected_attacks]
    if not relevant:
        raise ExecutionError("plan has no matching aggregate to act on")
    rules = list(env.ingress_rules)
    effects = []
    seen = set()
    for agg in relevant:
        subject = agg.src_ip if side == "source" else agg.dst_ip
        if not subject:
            raise ExecutionError(f"{action.kind} needs a {side} ip, aggregate has none")
        if (subject, agg.attack_id) in seen:
            continue
        seen.add((subject, agg.attack_id))
        profile = kb.profile(action.id, agg.attack_id)
        duration = math.ceil(profile.time * executor.ticks_per_time_unit)
        effect = ResponseEffect(action.kind, subject, env.tick, profile.cost, duration,
                                action.id, agg.attack_id, side, queued_ticks)
        if rule_kind is not None and not any(r.kind == rule_kind and r.subject == subject for r in rules):
            rules.append(IngressRule(
                rule_kind, subject, effect.active_from,
                cap=executor.rate_limit_cap if rule_kind == "rate-limit" else 0,
                until=effect.active_from + duration if rule_kind == "restart" else None,
            ))
        effects.append(effect)
    return replace(env, ingress_rules=tuple(rules)), effects


def evaluate_outcome(env: SimEnvironment, effect: ResponseEffect, window: int,
                     threshold: float = 1.0) -> OutcomeRecord:
    """Success iff the mean attack packets/tick delivered over the window is below `threshold`.

    The window opens when the effect takes hold (applied_at + duration).
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    start = effect.active_from
    if env.tick < start + window:
        raise ValueError(f"window not elapsed: at tick {env.tick}, need {start + window}")
    field_ = "src_ip" if effect.side == "source" else "dst_ip"
    delivered = sum(
        d.delivered for d in env.delivered_log
        if d.klass == ATTACK and start <= d.tick < start + window and getattr(d, field_) == effect.subject
    )
    return OutcomeRecord(
        effect.action_id, effect.attack_id,
        success=delivered / window < threshold,
        observed_time=float(effect.duration + effect.queued_ticks),
        observed_cost=float(effect.cost_charged),
        timestamp=env.now_us(),
    )


@dataclass(frozen=True)
class LoopMetrics:
    cycle: int
    detect_ticks: int = 0
    plan_ticks: int = 0
    execute_ticks: int = 0
    total_latency: int = 0
    outcome: bool | None = None
    packets_processed: int = 0
    selected_action: str | None = None
    expected_utility: float | None = None
    aggregates: tuple = ()


@dataclass(frozen=True)
class SimConfig:
    hosts: tuple = ("150.162.63.23",)
    attackers: tuple = ()  # Attacker
    legit_sources: tuple = ()  # LegitSource
    tick_seconds: float = 1.0
    cycles: int = 1
    max_ticks_per_cycle: int = 60
    analysis_rate: int = 10_000  # packets analysed per tick
    plan_ticks: int = 1
    flush: FlushPolicy = FlushPolicy(max_elapsed=5.0, max_volume=1_000_000)
    executor: ExecutorConfig = ExecutorConfig()
    workers: int = 1


def initial_environment(config: SimConfig, rules, seed: int) -> SimEnvironment:
    return SimEnvironment(
        hosts=tuple(Host(ip) for ip in config.hosts),
        attackers=tuple(config.attackers),
        legit_sources=tuple(config.legit_sources),
        rules=tuple(rules),
        seed=seed,
        tick_us=round(config.tick_seconds * 1e6),
    )


def _monitor(env, config):
    """Step until the flush policy fires or the cycle horizon ends."""
    buffer = CaptureBuffer(opened_at=env.now_us())
    first_attack = None
    for _ in range(config.max_ticks_per_cycle):
        before = env.tick
        env = step(env)
        if first_attack is None and any(
                d.klass == ATTACK and d.delivered for d in env.delivered_log if d.tick == before):
            first_attack = before
        buffer.extend(env.last_packets)
        if monitor_flush(buffer, config.flush, env.now_us()) == FLUSH:
            break
    return env, buffer, first_attack


def run_mapek_loop(config: SimConfig, seed: int, kb: KnowledgeBase | str,
                   rules=None) -> tuple[list[LoopMetrics], KnowledgeBase]:
    """Run `config.cycles` Monitor -> Analyse -> Plan -> Execute -> Knowledge cycles.

    Packets delivered while a response is in flight are not re-buffered; each cycle
    opens a fresh capture buffer.
    """
    if isinstance(kb, str):
        kb = load_kb(kb)
    if rules is None:
        rules = kb.signatures or DEFAULT_RULES
    env = initial_environment(config, rules, seed)
    metrics = []
    for cycle in range(config.cycles):
        env, buffer, first_attack = _monitor(env, config)
        flushed_at = env.tick
        aggregates = run_analysis(buffer.records, rules, config.workers)
        if not aggregates:
            metrics.append(LoopMetrics(cycle, packets_processed=len(buffer.records)))
            continue
        analysis_ticks = math.ceil(len(buffer.records) / config.analysis_rate)
        env = run_ticks(env, analysis_ticks)
        env = run_ticks(env, config.plan_ticks)
        plan = select_response(kb, sorted({a.attack_id for a in aggregates}), decided_at=env.tick)
        env, effects = apply_action(env, plan, aggregates, kb, config.executor)
        window = config.executor.window
        end = max(e.active_from for e in effects) + window
        env = run_ticks(env, max(0, end - env.tick))
        success = True
        for effect in effects:
            outcome = evaluate_outcome(env, effect, window, config.executor.success_threshold)
            kb = record_outcome(kb, outcome)
            success = success and outcome.success
        start = first_attack if first_attack is not None else flushed_at
        detect = flushed_at - start + analysis_ticks
        execute = max(e.duration for e in effects)
        metrics.append(LoopMetrics(
            cycle,
            detect_ticks=detect,
            plan_ticks=config.plan_ticks,
            execute_ticks=execute,
            total_latency=detect + config.plan_ticks + execute,
            outcome=success,
            packets_processed=len(buffer.records),
            selected_action=plan.selected_action_id,
            expected_utility=plan.expected_utility,
            aggregates=tuple(aggregates),
        ))
    return metrics, kb


def format_metrics(m: LoopMetrics, tick_seconds: float = 1.0) -> str:
    lines = [f"[cycle {m.cycle}]"]
    if m.selected_action is None:
        lines += ["selected = none", f"packets_processed = {m.packets_processed}"]
        return "\n".join(lines) + "\n"
    lines += [
        f"detect_ticks = {m.detect_ticks}",
        f"plan_ticks = {m.plan_ticks}",
        f"execute_ticks = {m.execute_ticks}",
        f"total_latency_ticks = {m.total_latency}",
        f"total_latency_seconds = {m.total_latency * tick_seconds:g}",
        f"selected = {m.selected_action}",
        f"expected_utility = {m.expected_utility!r}",
        f"outcome = {'success' if m.outcome else 'failure'}",
        f"packets_processed = {m.packets_processed}",
        f"aggregates = {len(m.aggregates)}",
    ]
    return "\n".join(lines) + "\n"
