"""Walk through one label enumeration attack on Breast Cancer (AggVFL, LR).

The adversary holds 28 of the 30 features and no labels. After the benign
federation trains, it clusters its own features, trains one simulated model
per cluster-to-label sequence and keeps the sequence whose first-epoch
gradient points the same way as the gradient it received in epoch 0.
"""
from lea_vfl.attack import AdversaryView, lea_attack, true_sequence
from lea_vfl.clustering import cluster_accuracy
from lea_vfl.experiment import cluster_adversary, federation_config, load_config, prepare
from lea_vfl.vfl import train_federation

SEED = 0

cfg = load_config("bc-agg-lr-28-2")
prep = prepare(cfg, SEED)
fed = federation_config(cfg, prep, SEED)
result = train_federation(fed, prep.test_parties, prep.test_labels)
print(f"benign federation: {cfg.epochs} epochs, test accuracy (NAA) {result.naa:.3f}")

adv = prep.train_parties[fed.adversary_index]
clusters = cluster_adversary(cfg, adv.features, SEED)
print(f"k-means on the adversary's {adv.n_features} features: "
      f"cluster sizes {clusters.sizes().tolist()}, CA {cluster_accuracy(clusters, prep.train_labels):.3f}")

view = AdversaryView.from_federation(result)
report, model = lea_attack(view, clusters, prep.test_parties[fed.adversary_index].features,
                           prep.test_labels)
print("\nsequence  cosine with the received epoch-0 gradient")
for s in report.scores:
    print(f"  {s.sequence}   {s.score:+.3f}")
print(f"\nchosen {report.chosen_sequences[0]}, true {true_sequence(clusters, prep.train_labels)}")
print(f"attack accuracy on held-out samples (ASR): {report.asr:.3f}")
