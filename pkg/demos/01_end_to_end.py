"""End-to-end walkthrough: synthetic data -> profiles -> propagation -> metrics.

Generates a camera-biased clustered dataset, collapses tracklets to ridge
profile vectors, propagates the profiles over the global and cross-camera
k-NN graphs, and compares retrieval quality before and after. Run with:

    python demos/01_end_to_end.py
"""

from gcr import GcrConfig, PvgConfig, SynthConfig, evaluate, gcr, generate, pvg

# ~1600 images: 200 people, 4 cameras, 2-frame tracklets. Camera bias is
# strong enough that raw features retrieve poorly across cameras.
cfg = SynthConfig(num_ids=200, cameras=4, images_per_id_per_camera=2,
                  dim=64, noise=0.14, camera_bias=0.5, seed=7)
features = generate(cfg)
print(f"dataset: {features.n} rows x {features.dim} dims, "
      f"{cfg.num_ids} identities, {cfg.cameras} cameras")

raw = evaluate(features)
print(f"\nraw features:      rank1 {raw.rank1:.4f}   mAP {raw.mean_ap:.4f}")

# one profile vector per (camera, tracklet): the closed-form ridge solution
# subtracts the per-camera mean, which strips most of the camera offset
profiles = pvg(features, PvgConfig(lambda_p=10.0, method="ridge"))
prof_report = evaluate(profiles.features)
print(f"ridge profiles:    rank1 {prof_report.rank1:.4f}   mAP {prof_report.mean_ap:.4f}")

# three rounds of alpha-blended propagation over rebuilt k-NN graphs
reranked = gcr(profiles.features, GcrConfig(k_g=15, k_c=3, gamma=0.2,
                                            alpha=0.7, iterations=3))
after = evaluate(reranked)
print(f"after propagation: rank1 {after.rank1:.4f}   mAP {after.mean_ap:.4f}")

print(f"\nmAP gain over raw features: {100 * (after.mean_ap - raw.mean_ap):+.1f} points")
print("CMC@{1,5,10}:", [round(float(after.cmc[m]), 4) for m in (0, 4, 9)])
