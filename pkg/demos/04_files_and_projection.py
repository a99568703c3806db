"""File formats, ranked-list dumps and the 2-D PCA projection.

Everything the CLI writes is reproducible from the library: the binary
feature format (magic GCRF, float32 payload), the metadata CSV, per-query
ranked lists, the sparse-graph debug dump, and the projection CSV for
external plotting.
"""

import tempfile
from pathlib import Path

import numpy as np

from gcr import (
    GcrConfig,
    SynthConfig,
    build_similarity,
    dump_ranked_csv,
    generate,
    knn_global,
    load_features,
    pca_coords,
    save_features,
    write_projection_csv,
)

out = Path(tempfile.mkdtemp(prefix="gcr-demo-"))
features = generate(SynthConfig(num_ids=20, cameras=2, images_per_id_per_camera=2,
                                dim=16, seed=11))

save_features(features, out / "demo.gcrf", out / "demo.csv")
back = load_features(out / "demo.gcrf", out / "demo.csv")
print(f"round trip bit-exact: {np.array_equal(back.data, features.data)}")
header = (out / "demo.gcrf").read_bytes()[:14]
print(f"file header: magic={header[:4]!r} "
      f"version={int.from_bytes(header[4:6], 'little')} "
      f"n={int.from_bytes(header[6:10], 'little')} "
      f"d={int.from_bytes(header[10:14], 'little')}")

dump_ranked_csv(features, out / "ranked.csv")
print(f"\nranked lists -> {out / 'ranked.csv'}")
print("\n".join((out / "ranked.csv").read_text().splitlines()[:4]))

graph = build_similarity(features, knn_global(features, 3), gamma=0.2)
graph.to_csv(out / "graph.csv")
print(f"\nsimilarity graph ({graph.matrix.nnz} entries) -> {out / 'graph.csv'}")

write_projection_csv(features, out / "projection.csv")
coords = pca_coords(features)
print(f"\nprojection -> {out / 'projection.csv'}")
print(f"x spans [{coords[:, 0].min():.3f}, {coords[:, 0].max():.3f}], "
      f"y spans [{coords[:, 1].min():.3f}, {coords[:, 1].max():.3f}]")
