"""Train the joint detector on a small synthetic set and fold the family.

One SVM learns over (feature, foreground-index) tuples with the product of
a within-class kernel (on foreground features) and a linear between-class
kernel. Folding the within-class factors into per-support weights turns the
single model into one linear detector per foreground sample, all sharing
the same support set. The demo prints how strongly supports are shared
across subclasses and how clustering compresses the family.
"""

from pathlib import Path

import numpy as np

from multikernel import (
    BootstrapConfig,
    KSelectConfig,
    SamplingConfig,
    SmoConfig,
    SynthConfig,
    build_family,
    sample_training_sets,
    select_representatives,
    synth_dataset,
)
from multikernel.hog import HogConfig, compute_hog_batch
from multikernel.trainer import bootstrap_train

out = Path("demo_output/train")
manifest = synth_dataset(SynthConfig(n_scenes=50, seed=3, clutter_per_scene=(1, 3)), out)
fg_patches, neg_patches = sample_training_sets(
    manifest, SamplingConfig(n_pos_per_subclass=15, n_negatives=500, seed=1)
)
hog = HogConfig()
fg_feats = compute_hog_batch(np.stack([p for p, _ in fg_patches]), hog)
neg_feats = compute_hog_batch(np.stack(neg_patches), hog)

model = bootstrap_train(
    [(fg_feats[i], v) for i, (_, v) in enumerate(fg_patches)],
    list(neg_feats),
    BootstrapConfig(
        max_rounds=4, initial_negatives=250, eta_grid=(0.25, 0.5, 1.0),
        cv_folds=2, smo=SmoConfig(C=10.0), seed=0,
    ),
)
print(
    f"trained on {len(model.fg_table)} foregrounds; support vectors: "
    f"{len(model.support)}; eta={model.eta}; mining rounds={model.rounds_run} "
    f"(active negatives {model.negatives_per_round}); converged={model.converged}"
)

family = build_family(model)
print(f"family: {len(family)} linear detectors, all sharing {family.shared_sv_count} supports")

# How many supports matter (>1% of their max folded weight) for detectors
# of more than one subclass? That is the feature sharing at work.
w = np.abs(family.sv_weight_matrix)
significant = w > 0.01 * w.max(axis=0, keepdims=True)
shared = 0
for s in range(family.shared_sv_count):
    if len(set(family.subclasses[significant[:, s]].tolist())) >= 2:
        shared += 1
print(f"supports significant for 2+ subclasses: {shared}/{family.shared_sv_count}")

reduced, report = select_representatives(family, KSelectConfig(k_min=5))
print("k sweep (k, silhouette, cost):")
for k, sil, cost in report.rows:
    marker = "  <- selected" if k == report.selected_k else ""
    print(f"  {k:4d}  {sil:6.3f}  {cost:8.3f}{marker}")
print(f"kept {len(reduced)} representative detectors "
      f"({100 * report.selected_fraction:.0f}% of the family)")
