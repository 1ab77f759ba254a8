"""Group-aware constrained train/val/test partitioning.

Images belonging to the same group (same specimen region) always land in
the same partition to prevent leakage; each partition must reach a minimum
occurrence count for every defect class; defect-free images are confined to
the test partition and appended beyond its size target.

The algorithm is a seeded greedy fill followed by a bounded swap-repair
loop. ``verify_split`` is the ground-truth contract: any alternative
algorithm is acceptable iff the verifier reports no violations.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import InfeasibleSplitError, SplitConvergenceError, ValidationError

PARTITIONS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    group_id: str
    class_counts: tuple[tuple[int, int], ...]
    defect_free: bool

    def __post_init__(self):
        counts = []
        seen = set()
        for cls, n in self.class_counts:
            cls, n = int(cls), int(n)
            if cls in seen:
                raise ValidationError(f"image {self.image_id!r}: duplicate class {cls}")
            if n < 0:
                raise ValidationError(f"image {self.image_id!r}: negative count for class {cls}")
            seen.add(cls)
            if n > 0:
                counts.append((cls, n))
        object.__setattr__(self, "class_counts", tuple(sorted(counts)))
        object.__setattr__(self, "defect_free", bool(self.defect_free))

    @property
    def total_defects(self) -> int:
        return sum(n for _, n in self.class_counts)


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        seen = set()
        for e in entries:
            if e.image_id in seen:
                raise ValidationError(f"duplicate image_id {e.image_id!r}")
            seen.add(e.image_id)

    @property
    def image_ids(self) -> tuple[str, ...]:
        return tuple(e.image_id for e in self.entries)

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(sorted({cls for e in self.entries for cls, _ in e.class_counts}))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class SplitSpec:
    """Targets and constraints for one split.

    Exactly one of ``sizes``/``fractions`` must be given; both refer to the
    images not pinned to test by a defect-free group member (pinned images
    are appended to test on top of its target).
    """

    sizes: tuple[int, int, int] | None = None
    fractions: tuple[float, float, float] | None = (0.8, 0.1, 0.1)
    min_class_count: int = 20
    defect_free_test_count: int = 0
    seed: int = 0
    max_repair_iterations: int = 1000

    def __post_init__(self):
        if (self.sizes is None) == (self.fractions is None):
            raise ValidationError("exactly one of sizes/fractions must be set")
        if self.sizes is not None:
            sizes = tuple(int(s) for s in self.sizes)
            if len(sizes) != 3 or any(s < 0 for s in sizes):
                raise ValidationError(f"sizes must be 3 non-negative integers, got {self.sizes}")
            object.__setattr__(self, "sizes", sizes)
        if self.fractions is not None:
            fractions = tuple(float(f) for f in self.fractions)
            if len(fractions) != 3 or any(f < 0 for f in fractions):
                raise ValidationError(f"fractions must be 3 non-negative floats, got {self.fractions}")
            if abs(sum(fractions) - 1.0) > 1e-6:
                raise ValidationError(f"fractions {fractions} do not sum to 1")
            object.__setattr__(self, "fractions", fractions)
        if self.min_class_count < 0:
            raise ValidationError("min_class_count must be >= 0")
        if self.defect_free_test_count < 0:
            raise ValidationError("defect_free_test_count must be >= 0")
        if self.max_repair_iterations < 0:
            raise ValidationError("max_repair_iterations must be >= 0")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SplitSpec":
        fields = set(cls.__dataclass_fields__)
        unknown = set(data) - fields
        if unknown:
            raise ValidationError(f"unknown split spec keys {sorted(unknown)}")
        kwargs = dict(data)
        if "sizes" in kwargs and kwargs["sizes"] is not None:
            kwargs.setdefault("fractions", None)
        return cls(**kwargs)


@dataclass(frozen=True)
class SplitAssignment:
    assignment: Mapping[str, str]
    sizes: Mapping[str, int]
    class_counts: Mapping[str, Mapping[int, int]]
    seed: int

    def partition_ids(self, partition: str) -> tuple[str, ...]:
        return tuple(sorted(i for i, p in self.assignment.items() if p == partition))


@dataclass(frozen=True)
class SplitViolation:
    kind: str  # group_integrity | size | class_count | defect_free
    message: str
    ids: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"[{self.kind}] {self.message}"


@dataclass(frozen=True)
class GroupAggregate:
    group_id: str
    image_ids: tuple[str, ...]
    class_counts: tuple[tuple[int, int], ...]
    defect_free_images: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.image_ids)

    @property
    def pinned(self) -> bool:
        return bool(self.defect_free_images)

    def count(self, cls: int) -> int:
        return dict(self.class_counts).get(cls, 0)


def build_groups(manifest: DatasetManifest) -> list[GroupAggregate]:
    """Aggregate entries per group_id with summed class counts.

    Output is sorted by group_id and members by image_id, so the result is
    independent of manifest entry order.
    """
    by_group: dict[str, list[ManifestEntry]] = {}
    for entry in manifest.entries:
        by_group.setdefault(entry.group_id, []).append(entry)
    groups = []
    for group_id in sorted(by_group):
        members = sorted(by_group[group_id], key=lambda e: e.image_id)
        counts: dict[int, int] = {}
        for e in members:
            for cls, n in e.class_counts:
                counts[cls] = counts.get(cls, 0) + n
        groups.append(
            GroupAggregate(
                group_id=group_id,
                image_ids=tuple(e.image_id for e in members),
                class_counts=tuple(sorted(counts.items())),
                defect_free_images=tuple(e.image_id for e in members if e.defect_free),
            )
        )
    return groups


def _resolve_targets(spec: SplitSpec, n_unpinned: int) -> dict[str, int]:
    if spec.sizes is not None:
        if sum(spec.sizes) != n_unpinned:
            raise InfeasibleSplitError(
                f"size targets sum to {sum(spec.sizes)} but the manifest has "
                f"{n_unpinned} assignable (non-pinned) images"
            )
        return dict(zip(PARTITIONS, spec.sizes))
    base = [int(f * n_unpinned) for f in spec.fractions]
    remainders = [f * n_unpinned - b for f, b in zip(spec.fractions, base)]
    leftover = n_unpinned - sum(base)
    for i in sorted(range(3), key=lambda i: (-remainders[i], i))[:leftover]:
        base[i] += 1
    return dict(zip(PARTITIONS, base))


def _check_feasibility(
    spec: SplitSpec, groups: Sequence[GroupAggregate], classes: Sequence[int]
) -> None:
    pinned = [g for g in groups if g.pinned]
    n_defect_free = sum(len(g.defect_free_images) for g in pinned)
    if n_defect_free < spec.defect_free_test_count:
        raise InfeasibleSplitError(
            f"manifest has {n_defect_free} defect-free images but the spec "
            f"requires {spec.defect_free_test_count} in test"
        )
    m = spec.min_class_count
    if m == 0:
        return
    for cls in classes:
        pinned_total = sum(g.count(cls) for g in pinned)
        unpinned_total = sum(g.count(cls) for g in groups if not g.pinned)
        needed = 2 * m + max(0, m - pinned_total)
        if unpinned_total < needed:
            raise InfeasibleSplitError(
                f"class {cls} has {unpinned_total} assignable occurrences but needs "
                f"{needed} to reach {m} in every partition"
            )


def _class_shortfall(
    counts: Mapping[str, dict[int, int]], classes: Sequence[int], m: int
) -> int:
    return sum(
        max(0, m - counts[p].get(cls, 0)) for p in PARTITIONS for cls in classes
    )


def split_dataset(manifest: DatasetManifest, spec: SplitSpec) -> SplitAssignment:
    """Deterministic seeded split honoring all constraints.

    Groups are shuffled with the spec seed, greedily assigned toward the
    size targets, then repaired by class-aware group swaps until every
    partition reaches min_class_count for every class (or the iteration
    budget runs out).
    """
    groups = build_groups(manifest)
    classes = manifest.classes
    _check_feasibility(spec, groups, classes)
    pinned = [g for g in groups if g.pinned]
    unpinned = [g for g in groups if not g.pinned]
    targets = _resolve_targets(spec, sum(g.size for g in unpinned))

    shuffled = list(unpinned)
    random.Random(spec.seed).shuffle(shuffled)

    where: dict[str, str] = {}
    sizes = {p: 0 for p in PARTITIONS}
    counts: dict[str, dict[int, int]] = {p: {} for p in PARTITIONS}

    def place(group: GroupAggregate, partition: str) -> None:
        where[group.group_id] = partition
        sizes[partition] += group.size
        for cls, n in group.class_counts:
            counts[partition][cls] = counts[partition].get(cls, 0) + n

    def displace(group: GroupAggregate) -> None:
        partition = where.pop(group.group_id)
        sizes[partition] -= group.size
        for cls, n in group.class_counts:
            counts[partition][cls] -= n

    for g in shuffled:
        partition = max(PARTITIONS, key=lambda p: (targets[p] - sizes[p], -PARTITIONS.index(p)))
        place(g, partition)

    m = spec.min_class_count
    test_counts_pinned: dict[int, int] = {}
    for g in pinned:
        for cls, n in g.class_counts:
            test_counts_pinned[cls] = test_counts_pinned.get(cls, 0) + n

    def effective_counts() -> dict[str, dict[int, int]]:
        merged = {p: dict(counts[p]) for p in PARTITIONS}
        for cls, n in test_counts_pinned.items():
            merged["test"][cls] = merged["test"].get(cls, 0) + n
        return merged

    by_partition: dict[str, list[GroupAggregate]] = {p: [] for p in PARTITIONS}
    for g in unpinned:
        by_partition[where[g.group_id]].append(g)

    iterations = 0
    while m > 0:
        current = effective_counts()
        shortfall = _class_shortfall(current, classes, m)
        if shortfall == 0:
            break
        if iterations >= spec.max_repair_iterations:
            violations = [
                f"partition {p!r} has {current[p].get(cls, 0)}/{m} of class {cls}"
                for p in PARTITIONS
                for cls in classes
                if current[p].get(cls, 0) < m
            ]
            raise SplitConvergenceError(
                f"repair loop exceeded {spec.max_repair_iterations} iterations",
                violations=violations,
            )
        iterations += 1
        tolerance = max((g.size for g in groups), default=0)

        def trial_shortfall(g_in: GroupAggregate, g_out, p: str, q: str) -> int:
            trial = {r: dict(current[r]) for r in PARTITIONS}
            for c2, n in g_in.class_counts:
                trial[q][c2] = trial[q].get(c2, 0) - n
                trial[p][c2] = trial[p].get(c2, 0) + n
            if g_out is not None:
                for c2, n in g_out.class_counts:
                    trial[p][c2] = trial[p].get(c2, 0) - n
                    trial[q][c2] = trial[q].get(c2, 0) + n
            return _class_shortfall(trial, classes, m)

        def sizes_ok(p: str, q: str, delta: int) -> bool:
            # delta = images entering p (and leaving q)
            return (
                abs(sizes[p] + delta - targets[p]) <= tolerance
                and abs(sizes[q] - delta - targets[q]) <= tolerance
            )

        best = None  # (new_shortfall, kind, in_id, out_id) -> op
        for p in PARTITIONS:
            needy = [cls for cls in classes if current[p].get(cls, 0) < m]
            if not needy:
                continue
            for q in PARTITIONS:
                if q == p:
                    continue
                for g_in in by_partition[q]:
                    if all(g_in.count(cls) == 0 for cls in needy):
                        continue
                    # swap against any group currently in p
                    for g_out in by_partition[p]:
                        if not sizes_ok(p, q, g_in.size - g_out.size):
                            continue
                        key = (trial_shortfall(g_in, g_out, p, q), 0,
                               g_in.group_id, g_out.group_id)
                        if best is None or key < best[0]:
                            best = (key, g_in, g_out, p, q)
                    # plain move (p may be empty)
                    if sizes_ok(p, q, g_in.size):
                        key = (trial_shortfall(g_in, None, p, q), 1, g_in.group_id, "")
                        if best is None or key < best[0]:
                            best = (key, g_in, None, p, q)
        if best is None or best[0][0] >= shortfall:
            current = effective_counts()
            violations = [
                f"partition {p!r} has {current[p].get(cls, 0)}/{m} of class {cls}"
                for p in PARTITIONS
                for cls in classes
                if current[p].get(cls, 0) < m
            ]
            raise SplitConvergenceError("no improving swap found", violations=violations)
        _, g_in, g_out, p, q = best
        displace(g_in)
        place(g_in, p)
        by_partition[q].remove(g_in)
        by_partition[p].append(g_in)
        if g_out is not None:
            displace(g_out)
            place(g_out, q)
            by_partition[p].remove(g_out)
            by_partition[q].append(g_out)

    assignment: dict[str, str] = {}
    for g in unpinned:
        for image_id in g.image_ids:
            assignment[image_id] = where[g.group_id]
    for g in pinned:
        for image_id in g.image_ids:
            assignment[image_id] = "test"

    final_sizes = {p: 0 for p in PARTITIONS}
    final_counts: dict[str, dict[int, int]] = {p: {} for p in PARTITIONS}
    for e in manifest.entries:
        p = assignment[e.image_id]
        final_sizes[p] += 1
        for cls, n in e.class_counts:
            final_counts[p][cls] = final_counts[p].get(cls, 0) + n
    return SplitAssignment(
        assignment=assignment, sizes=final_sizes, class_counts=final_counts, seed=spec.seed
    )


def verify_split(
    manifest: DatasetManifest, assignment: SplitAssignment, spec: SplitSpec
) -> list[SplitViolation]:
    """Check every constraint; empty list means the assignment is valid.

    Raises ValidationError when the assignment does not cover exactly the
    manifest's images (that is a usage error, not a constraint violation).
    """
    mapping = dict(assignment.assignment)
    manifest_ids = set(manifest.image_ids)
    unknown = set(mapping) - manifest_ids
    if unknown:
        raise ValidationError(f"assignment contains unknown image ids {sorted(unknown)[:5]}")
    missing = manifest_ids - set(mapping)
    if missing:
        raise ValidationError(f"assignment does not cover images {sorted(missing)[:5]}")
    bad = {p for p in mapping.values() if p not in PARTITIONS}
    if bad:
        raise ValidationError(f"unknown partitions {sorted(bad)}")

    violations: list[SplitViolation] = []
    groups = build_groups(manifest)

    for g in groups:
        parts = {mapping[i] for i in g.image_ids}
        if len(parts) > 1:
            violations.append(
                SplitViolation(
                    "group_integrity",
                    f"group {g.group_id!r} is spread over partitions {sorted(parts)}",
                    ids=(g.group_id,),
                )
            )

    pinned_ids = {i for g in groups if g.pinned for i in g.image_ids}
    unpinned_sizes = {p: 0 for p in PARTITIONS}
    for image_id, p in mapping.items():
        if image_id not in pinned_ids:
            unpinned_sizes[p] += 1
    tolerance = max((g.size for g in groups), default=0)
    targets = _resolve_targets(spec, len(manifest_ids - pinned_ids))
    for p in PARTITIONS:
        if abs(unpinned_sizes[p] - targets[p]) > tolerance:
            violations.append(
                SplitViolation(
                    "size",
                    f"partition {p!r} has {unpinned_sizes[p]} assignable images, "
                    f"target {targets[p]} (tolerance {tolerance})",
                )
            )

    m = spec.min_class_count
    if m > 0:
        counts: dict[str, dict[int, int]] = {p: {} for p in PARTITIONS}
        for e in manifest.entries:
            p = mapping[e.image_id]
            for cls, n in e.class_counts:
                counts[p][cls] = counts[p].get(cls, 0) + n
        for p in PARTITIONS:
            for cls in manifest.classes:
                have = counts[p].get(cls, 0)
                if have < m:
                    violations.append(
                        SplitViolation(
                            "class_count",
                            f"partition {p!r} has {have} occurrences of class {cls}, needs {m}",
                        )
                    )

    stray = sorted(
        e.image_id for e in manifest.entries if e.defect_free and mapping[e.image_id] != "test"
    )
    if stray:
        violations.append(
            SplitViolation(
                "defect_free",
                f"defect-free images outside test: {stray[:5]}",
                ids=tuple(stray),
            )
        )
    n_defect_free_test = sum(
        1 for e in manifest.entries if e.defect_free and mapping[e.image_id] == "test"
    )
    if n_defect_free_test < spec.defect_free_test_count:
        violations.append(
            SplitViolation(
                "defect_free",
                f"test has {n_defect_free_test} defect-free images, "
                f"needs {spec.defect_free_test_count}",
            )
        )
    return violations


# ---------------------------------------------------------------------------
# Manifest and assignment files
# ---------------------------------------------------------------------------

MANIFEST_COLUMNS = ("image_id", "group_id", "class_counts", "defect_free")


def _counts_to_cell(counts: Iterable[tuple[int, int]]) -> str:
    return " ".join(f"{cls}:{n}" for cls, n in counts)


def _cell_to_counts(cell: str, image_id: str) -> tuple[tuple[int, int], ...]:
    counts = []
    for token in cell.split():
        cls, sep, n = token.partition(":")
        if not sep:
            raise ValidationError(f"image {image_id!r}: bad class_counts token {token!r}")
        try:
            counts.append((int(cls), int(n)))
        except ValueError:
            raise ValidationError(
                f"image {image_id!r}: bad class_counts token {token!r}"
            ) from None
    return tuple(counts)


def render_manifest(manifest: DatasetManifest) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    for e in manifest.entries:
        writer.writerow(
            [e.image_id, e.group_id, _counts_to_cell(e.class_counts), int(e.defect_free)]
        )
    return buf.getvalue()


def parse_manifest(text: str) -> DatasetManifest:
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows or tuple(rows[0]) != MANIFEST_COLUMNS:
        raise ValidationError(
            f"manifest header must be {','.join(MANIFEST_COLUMNS)}"
        )
    entries = []
    for row in rows[1:]:
        if len(row) != len(MANIFEST_COLUMNS):
            raise ValidationError(f"manifest row has {len(row)} columns: {row!r}")
        image_id, group_id, counts_cell, defect_free = row
        if defect_free not in ("0", "1"):
            raise ValidationError(f"image {image_id!r}: defect_free must be 0 or 1")
        entries.append(
            ManifestEntry(
                image_id=image_id,
                group_id=group_id,
                class_counts=_cell_to_counts(counts_cell, image_id),
                defect_free=defect_free == "1",
            )
        )
    return DatasetManifest(tuple(entries))


def read_manifest(path: str | Path) -> DatasetManifest:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(render_manifest(manifest), encoding="utf-8", newline="\n")


def write_assignment(assignment: SplitAssignment, out_dir: str | Path) -> dict[str, Path]:
    """Emit train.txt/val.txt/test.txt plus a JSON summary."""
    import json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for p in PARTITIONS:
        path = out_dir / f"{p}.txt"
        path.write_text(
            "".join(i + "\n" for i in assignment.partition_ids(p)), encoding="utf-8", newline="\n"
        )
        paths[p] = path
    summary = {
        "seed": assignment.seed,
        "sizes": dict(assignment.sizes),
        "class_counts": {
            p: {str(c): n for c, n in sorted(assignment.class_counts[p].items())}
            for p in PARTITIONS
        },
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["summary"] = summary_path
    return paths
