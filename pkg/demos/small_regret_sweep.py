"""A short multi-seed sweep of LqgOpt against its baselines."""
import sys

from lqgopt.experiment import run_scenario

config = {
    "name": "demo",
    "plant": {"name": "canonical"},
    "agent": {"T_w": 1000, "H": 10, "S": "auto", "c1": 0.0056, "c2": 0.0062, "c3": 0.0062,
              "c_B": 0.004, "budget": 64, "sweeps": 4},
    "T": 16_000,
    "seeds": {"start": 0, "count": 4},
    "agents": ["lqgopt", "ce", "commit", "oracle"],
}
out = sys.argv[1] if len(sys.argv) > 1 else None
report = run_scenario(config, out)
for name, entry in report["agents"].items():
    slope = entry.get("adaptive_slope", {}).get("median")
    print(f"{name:7s} median final regret {entry['final_regret']['median']:9.1f}"
          + (f"  median slope {slope:.3f}" if slope is not None else ""))
