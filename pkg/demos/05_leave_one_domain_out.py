"""Leave-one-domain-out comparison of the three training methods.

One seed, four held-out rotations: no augmentation, uniform random policies,
and learned policies.  The full five-seed version of this experiment is the
acceptance benchmark (tests/test_acceptance.py).
"""

import numpy as np

from aadg.experiments import (
    METHODS,
    TrendTask,
    run_trend_task,
    summarize_trend,
    trend_config,
)
from aadg.util import parallel_map

config = trend_config()
tasks = [
    TrendTask(method, seed=0, held_out=held, config=config,
              train_count=10, eval_count=6, size=config.image_size)
    for method in METHODS
    for held in (0, 1, 2, 3)
]

print(f"{len(tasks)} training runs (3 methods x 4 held-out domains), "
      "this takes a few minutes...\n")
results = parallel_map(run_trend_task, tasks)

print(f"{'method':>9s} {'held-out':>9s} {'dice':>7s} {'in-domain':>10s}")
for r in results:
    print(f"{r['method']:>9s} {r['held_out']:>9d} {r['dice']:7.4f} {r['in_domain_dice']:10.4f}")

print("\nmean held-out Dice per method:")
for method, stats in sorted(summarize_trend(results).items()):
    print(f"  {method:9s} {stats['dice']:.4f}")
