"""Why compare first-epoch gradients and not trained parameters.

In SplitVFL the passive party's bottom model is shaped by a top model it
never sees, so after full training its parameters can sit closer to a
simulated model trained on the wrong labels. The first-epoch gradient is
taken before the top model has moved, and keeps the label signal.
The outcome depends on the initial draws, so several seeds are shown.
"""
from lea_vfl.attack import AdversaryView, compare_similarity_measures, true_sequence
from lea_vfl.experiment import cluster_adversary, federation_config, load_config, prepare
from lea_vfl.numerics import RngStream
from lea_vfl.vfl import train_federation

for name in ("bc-agg-lr-28-2", "bc-split-lr-28-2", "bc-split-mlp-28-2"):
    cfg = load_config(name)
    print(f"\n{name}")
    print("  seed  sequence  gradient cos  parameter cos")
    for seed in range(3):
        prep = prepare(cfg, seed)
        fed = federation_config(cfg, prep, seed)
        result = train_federation(fed)
        adv = fed.adversary_index
        clusters = cluster_adversary(cfg, prep.train_parties[adv].features, seed)
        want = true_sequence(clusters, prep.train_labels)
        rows = compare_similarity_measures(AdversaryView.from_federation(result), clusters,
                                           result.models[adv].params(), RngStream(seed, (30,)))
        for r in rows:
            mark = "*" if r["sequence"] == want else " "
            print(f"  {seed:4d}  {r['sequence']}{mark}   {r['gradient_cosine']:+.3f}        "
                  f"{r['parameter_cosine']:+.3f}")
print("\n* marks the true sequence")
