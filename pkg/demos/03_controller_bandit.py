"""The controller as a bandit learner.

Reward 1 when the sampled single-op policy hits a designated
(operation, magnitude) pair, 0 otherwise.  The normalized-reward policy
gradient makes the designated pair the modal sample within a few dozen
updates.
"""

import numpy as np

from aadg.controller import Controller
from aadg.transforms import OP_ORDER

DESIGNATED = (3, 4)  # Contrast at level 4
ctrl = Controller(R=10, S=1, L=1, seed=0)
rng = np.random.default_rng(0)

print(f"target pair: op={OP_ORDER[DESIGNATED[0]].value} level={DESIGNATED[1]}")
print(f"initial modal pair: {ctrl.most_likely_pair()}\n")

for step in range(1, 301):
    policies, traces = ctrl.sample_policies(6, rng)
    rewards = [
        float(t.tokens[0] == DESIGNATED[0] and t.tokens[1] == DESIGNATED[1])
        for t in traces
    ]
    ctrl.reinforce_update(traces, rewards)
    if step % 25 == 0:
        modal = ctrl.most_likely_pair()
        hits = sum(rewards)
        marker = "  <-- designated is modal" if modal == DESIGNATED else ""
        print(f"update {step:3d}: modal pair {modal}{marker}")
        if modal == DESIGNATED and step >= 100:
            break

tokens = np.array([list(DESIGNATED)])
logp = ctrl.log_probs(tokens)[0]
print(f"\nP(designated pair) = {np.exp(logp.sum()):.3f}")
