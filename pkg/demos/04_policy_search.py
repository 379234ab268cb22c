"""A small end-to-end policy search.

Three synthetic source domains, a compact search configuration, and the full
adversarial loop: per-epoch diversity rewards drive the controller while the
segmentation model and domain classifier train on the augmented copies.
Exports the best policy as JSON.
"""

import numpy as np

from aadg.bench import default_domain_specs, generate_domain
from aadg.search import SearchConfig, run_search
from aadg.transforms import save_policy, policy_from_dict

config = SearchConfig(
    R=10, S=2, L=1, B=4, epochs=8, steps_per_epoch=6, K=3,
    batch_size=9, image_size=32, seed=1, dtype="float32",
).validate()

specs = default_domain_specs()[:3]
ss = np.random.SeedSequence(0)
datasets = {
    s.domain_id: generate_domain(s, 10, np.random.default_rng(c), config.image_size)
    for s, c in zip(specs, ss.spawn(3))
}

print(f"searching over {config.ops} ops, R={config.R}, S={config.S}, L={config.L}")
result = run_search(config, datasets)

print(f"\n{'epoch':>5s} {'reward mean':>12s} {'reward max':>11s} {'seg loss':>9s}")
for epoch in result.report.epochs:
    r = np.asarray(epoch.rewards_raw)
    print(f"{epoch.epoch:5d} {r.mean():12.4f} {r.max():11.4f} {epoch.mean_seg_loss:9.4f}")

best = policy_from_dict(result.report.best_policy)
print("\nbest policy of the final epoch:")
for i, sp in enumerate(best.subpolicies):
    chain = " -> ".join(f"{op.kind.value}(level {op.level})" for op in sp.ops)
    print(f"  sub-policy {i}: {chain}")

save_policy(best, "searched_policy.json")
print("\nwrote searched_policy.json")
