"""Turn sequences into fixed-arity channel matrices for the classifier.

Basic mode is 56 channels: 28 normalized coordinates plus their
derivatives. Advanced mode appends, for every action, the distance from
each frame (and each frame-to-frame change) to the nearest prototype of
that action's library, one channel per landmark subset: 10 more channels
per action. A sequence of any length becomes (channels, T).
"""

import numpy as np

from posehar.embed import channel_names, embed_sequence
from posehar.preprocess import preprocess_sample
from posehar.som import SomConfig, build_bundle
from posehar.synth import generate_corpus

corpus = generate_corpus(5, ("wave-one-arm", "squat", "march"),
                         ("front",), seed=4, frames=24)
items = [preprocess_sample(s)[0] for s in corpus]
bundle = build_bundle(items, 3, SomConfig(q=3, m=3, epochs=10, rng_seed=4))

probe = items[0]          # a wave sequence
basic = embed_sequence(probe.seq, None, None, "basic")
advanced = embed_sequence(probe.seq, bundle.spatial, bundle.temporal, "advanced")
print(f"basic    {basic.values.shape}  (channels, frames)")
print(f"advanced {advanced.values.shape}")

# %% channel names are stable and self-describing
names = channel_names("advanced", sorted(bundle.spatial))
print(f"\nfirst coordinate channel:  {names[0]}")
print(f"first derivative channel:  {names[28]}")
print(f"library channels:          {names[56]} ... {names[-1]}")

# %% the embedding separates actions: distance to the true action's
#    prototypes runs lower than to a wrong action's
rows = {name: i for i, name in enumerate(advanced.names)}
for item in items[:3]:
    channels = embed_sequence(item.seq, bundle.spatial, bundle.temporal,
                              "advanced")
    own = channels.values[rows[f"spatial/{item.action}/J"]].mean()
    others = [channels.values[rows[f"spatial/{a}/J"]].mean()
              for a in sorted(bundle.spatial) if a != item.action]
    print(f"  {item.action:<15} own {own:.3f}   others "
          f"{np.round(others, 3)}")
