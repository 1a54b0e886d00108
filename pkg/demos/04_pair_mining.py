"""Mine harder/easier training pairs from a pool of scored variations.

Variations here are stand-ins built from corpus pieces directly; in the
real pipeline they come out of the sampler (see 05 and the CLI demo).
"""

import numpy as np

from gradus import gnb, mining, style
from gradus.analysis import feature_vector
from gradus.fixtures import generate_corpus

rng = np.random.default_rng(12)
corpus = generate_corpus(n=30, seed=12)

X = np.array([feature_vector(s) for s in corpus])
levels = gnb.quantile_levels(gnb.difficulty_proxy(X))
model = gnb.fit(X, levels)
post = model.posterior(X)

pool = []
for i, score in enumerate(corpus):
    # five fake variations per piece: same piece id, jittered level
    for k in range(5):
        lvl = int(np.clip(levels[i] + rng.integers(-2, 3), 1, 9))
        pool.append(mining.Variation(
            id=f"{score.source_id}.v{k:03d}",
            piece=score.source_id,
            level=lvl,
            confidence=float(post[i].max() * rng.uniform(0.6, 1.0)),
            embedding=style.baseline_embed(score) + rng.normal(0, 0.02, 64)))

print(f"pool: {len(pool)} variations over {len(corpus)} pieces")

for strategy in ("random", "filtered"):
    for gap in (1, 2):
        pairs, rep = mining.mine(pool, strategy=strategy, min_gap=gap)
        print(f"\n{strategy:>8}, gap >= {gap}: {len(pairs)} pairs, "
              f"mean style distance {rep.mean_distance:.3f}")
        print(f"          raw {rep.counts['raw']}, after confidence cut "
              f"{rep.counts['after_confidence']}, after similarity cut "
              f"{rep.counts['after_similarity']}")

pairs, _ = mining.mine(pool, strategy="filtered", min_gap=2)
p = pairs[0]
print(f"\none mined pair: {p.hard} (level {p.hard_level}) -> "
      f"{p.easy} (level {p.easy_level}), gap {p.gap}, "
      f"style similarity {p.sim:.3f}")
