"""Scenario screening: stability, priority queue, and the fluid limit cycle.

Before paying for a decision-model solve, a scenario is screened: the
utilisation must satisfy rho < 1, and the optimal fluid limit cycle both
classifies the scenario (pure vs truncated bow-tie) and lower-bounds the
queue truncation sizes the models will need.
"""

import json

from pollsys import analyze_limit_cycle, limit_cycle_report, validate_scenario
from pollsys.cli import load_scenario

for name in ("asym_var", "slow_mode"):
    cfg = load_scenario(name)
    rep = validate_scenario(cfg)
    cycle = analyze_limit_cycle(cfg)
    print(f"=== {name} ===")
    print(f"rho1 = {rep.rho1:.4f}, rho2 = {rep.rho2:.4f}, rho = {rep.rho:.4f}")
    print(f"priority queue: {rep.priority_queue}")
    print(f"slow-mode condition value: {cycle.slow_mode_value:+.4f} "
          f"-> {cycle.kind.value} (alpha1 = {cycle.alpha1:.4f})")
    for label, coord in zip(("C1", "C2", "C3", "C4", "C5"), cycle.coordinates):
        print(f"  {label} = ({coord[0]:7.3f}, {coord[1]:7.3f})")
    print(json.dumps(limit_cycle_report(cycle), indent=2, sort_keys=True))
    print()
