"""Run the shipped closed-loop configuration and show how the KB profiles move."""
import argparse
from pathlib import Path

from airs.config import load_config
from airs.kb import load_kb
from airs.simenv import format_metrics, run_mapek_loop

DEFAULT = Path(__file__).resolve().parents[1] / "configs" / "closed_loop.ini"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=DEFAULT)
    parser.add_argument("--seed", type=int)
    args = parser.parse_args()
    config = load_config(args.config)
    kb = load_kb(config.kb_path)
    seed = config.seed if args.seed is None else args.seed
    metrics, after = run_mapek_loop(config.sim, seed, kb, config.rules)
    for m in metrics:
        print(format_metrics(m, config.sim.tick_seconds))
    print("profile changes (action attack: p before -> after)")
    for p in after.profiles:
        old = kb.profile(p.action_id, p.attack_id)
        if p != old:
            print(f"  {p.action_id} {p.attack_id}: {old.probability:.3f} -> {p.probability:.3f}"
                  f" after {p.trials} trials")


if __name__ == "__main__":
    main()
