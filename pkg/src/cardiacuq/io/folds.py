"""Patient-level stratified cross-validation folds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientGroupSizeError


@dataclass(frozen=True)
class FoldSplit:
    k: int
    assignments: dict[str, int]  # patient_id -> fold index
    seed: int

    def test_ids(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.assignments.items() if f == fold)

    def train_ids(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.assignments.items() if f != fold)

    def to_json(self) -> dict:
        return {"k": self.k, "seed": self.seed, "assignments": self.assignments}

    @classmethod
    def from_json(cls, payload: dict) -> "FoldSplit":
        return cls(
            k=int(payload["k"]),
            assignments={p: int(f) for p, f in payload["assignments"].items()},
            seed=int(payload["seed"]),
        )


def make_stratified_folds(studies, k: int = 4, seed: int = 0) -> FoldSplit:
    """Deal patients of each disease group round-robin over `k` folds.

    Both phases of a patient always share a fold (the split is per patient);
    per-group fold sizes differ by at most one.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    groups: dict[str, list[str]] = {}
    for study in studies:
        if isinstance(study, tuple):
            patient_id, group = study
        else:
            patient_id, group = study.patient_id, study.disease_group
        groups.setdefault(group, []).append(patient_id)

    rng = np.random.default_rng(seed)
    assignments: dict[str, int] = {}
    for group in sorted(groups):
        members = sorted(groups[group])
        if len(members) < k:
            raise InsufficientGroupSizeError(
                f"group {group} has {len(members)} patients, needs >= {k} for {k} folds"
            )
        order = rng.permutation(len(members))
        for i, idx in enumerate(order):
            assignments[members[idx]] = i % k
    return FoldSplit(k=k, assignments=assignments, seed=seed)
