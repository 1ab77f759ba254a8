#!/usr/bin/env python3
"""Group-atomic splitting with class-coverage constraints and the verifier."""

from weaklabel import (
    DatasetManifest,
    ManifestEntry,
    SplitSpec,
    split_dataset,
    verify_split,
)
from weaklabel.splitter import SplitAssignment

# 15 groups of 4 images; a few groups are entirely defect-free and must
# therefore end up in the test partition
entries = []
idx = 0
for g in range(15):
    defect_free_group = g >= 13
    for _ in range(4):
        defects = 0 if defect_free_group else 1 + (idx % 4)
        entries.append(
            ManifestEntry(
                image_id=f"im{idx:03d}",
                group_id=f"g{g:02d}",
                class_counts=((0, defects),) if defects else (),
                defect_free=defects == 0,
            )
        )
        idx += 1
manifest = DatasetManifest(tuple(entries))

spec = SplitSpec(fractions=(0.7, 0.15, 0.15), min_class_count=10,
                 defect_free_test_count=8, seed=2024)
assignment = split_dataset(manifest, spec)

print("achieved sizes:", dict(assignment.sizes))
print("class counts  :", {p: dict(c) for p, c in assignment.class_counts.items()})
print("violations    :", verify_split(manifest, assignment, spec))

# corrupt the assignment: strand one image away from its group
broken = dict(assignment.assignment)
broken["im000"] = "val" if broken["im000"] != "val" else "train"
mutated = SplitAssignment(broken, assignment.sizes, assignment.class_counts, spec.seed)
for v in verify_split(manifest, mutated, spec):
    print("after corruption:", v)
