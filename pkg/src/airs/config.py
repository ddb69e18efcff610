"""Engine configuration: `key = value` lines grouped under `[section]` headers."""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .capture import FlushPolicy, check_ipv4
from .kb import decode_signature, load_kb
from .simenv import Attacker, ExecutorConfig, LegitSource, SimConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    kb_path: Path
    sim: SimConfig
    rules: tuple | None = None
    seed: int = 0
    output_dir: Path = Path(".")

    @property
    def workers(self) -> int:
        return self.sim.workers


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def parse_config(text: str, base_dir: Path = Path(".")) -> EngineConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    try:
        engine = cp["engine"] if cp.has_section("engine") else {}
        if "kb_path" not in engine:
            raise ConfigError("[engine] kb_path is required")
        kb_path = _resolve(base_dir, engine["kb_path"])
        if not kb_path.exists():
            raise ConfigError(f"kb_path does not exist: {kb_path}")
        workers = int(engine.get("workers", "1"))
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        seed = int(engine.get("seed", "0"))
        output_dir = _resolve(base_dir, engine.get("output_dir", "."))

        rules = None
        if cp.has_section("rules"):
            rules = tuple(decode_signature([sid, *_split(v)]) for sid, v in cp["rules"].items())
        elif "rules_path" in engine:
            rules_path = _resolve(base_dir, engine["rules_path"])
            if not rules_path.exists():
                raise ConfigError(f"rules_path does not exist: {rules_path}")
            rules = load_kb(rules_path).signatures

        flush = cp["flush"] if cp.has_section("flush") else {}
        policy = FlushPolicy(float(flush.get("max_elapsed", "5")), int(flush.get("max_volume", "1000000")))

        sim = cp["simulation"] if cp.has_section("simulation") else {}
        executor = ExecutorConfig(
            rate_limit_cap=int(sim.get("rate_limit_cap", "3")),
            ticks_per_time_unit=float(sim.get("ticks_per_time_unit", "1")),
            success_threshold=float(sim.get("success_threshold", "1")),
            window=int(sim.get("window", "5")),
        )
        hosts = tuple(check_ipv4(ip) for ip in _split(cp.get("hosts", "targets", fallback="150.162.63.23")))
        attackers = []
        if cp.has_section("attackers"):
            for ip, v in cp["attackers"].items():
                attack_id, target, rate = _split(v)
                attackers.append(Attacker(check_ipv4(ip), attack_id, check_ipv4(target), int(rate)))
        legit = []
        if cp.has_section("legit"):
            for ip, v in cp["legit"].items():
                target, rate = _split(v)
                legit.append(LegitSource(check_ipv4(ip), check_ipv4(target), int(rate)))
        sim_config = SimConfig(
            hosts=hosts,
            attackers=tuple(attackers),
            legit_sources=tuple(legit),
            tick_seconds=float(sim.get("tick_seconds", "1")),
            cycles=int(sim.get("cycles", "1")),
            max_ticks_per_cycle=int(sim.get("max_ticks_per_cycle", "60")),
            analysis_rate=int(sim.get("analysis_rate", "10000")),
            plan_ticks=int(sim.get("plan_ticks", "1")),
            flush=policy,
            executor=executor,
            workers=workers,
        )
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad configuration value: {exc}") from exc
    return EngineConfig(kb_path, sim_config, rules, seed, output_dir)


def load_config(path) -> EngineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), path.parent)
