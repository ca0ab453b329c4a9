"""
Evaluation protocols: leave-one-out and cross-subject splits.
"""

from app.datasets.errors import SplitError
from app.models.skeleton import DatasetManifest, Fold, SplitSpec

PROTOCOLS: tuple[str, ...] = ("loocv-sequence", "loocv-subject", "cross-subject")

CROSS_SUBJECT_TRAIN: tuple[int, ...] = (1, 3, 5, 7, 9)
CROSS_SUBJECT_TEST: tuple[int, ...] = (2, 4, 6, 8, 10)


def make_splits(
    manifest: DatasetManifest,
    protocol: str,
    test_subjects: list[int] | None = None,
) -> SplitSpec:
    """
    Build the folds of a protocol over a manifest.

    cross-subject: one fold, odd subjects train / even subjects test unless
    `test_subjects` overrides the test side (every other subject trains).
    loocv-sequence: one fold per sequence. loocv-subject: one fold per subject.
    """
    if protocol not in PROTOCOLS:
        raise SplitError(f"unknown protocol {protocol!r}; valid protocols: {', '.join(PROTOCOLS)}")
    ids = manifest.sequence_ids
    if not ids:
        raise SplitError(f"manifest for {manifest.dataset} has no sequences")

    if protocol == "cross-subject":
        if test_subjects:
            test_set = set(test_subjects)
            train_set = set(manifest.subject_ids) - test_set
        else:
            test_set, train_set = set(CROSS_SUBJECT_TEST), set(CROSS_SUBJECT_TRAIN)
        fold = Fold(
            name="cross-subject",
            train_ids=[e.sequence_id for e in manifest.entries if e.subject in train_set],
            test_ids=[e.sequence_id for e in manifest.entries if e.subject in test_set],
        )
        if not fold.train_ids or not fold.test_ids:
            raise SplitError("cross-subject split leaves an empty train or test side")
        return SplitSpec(protocol=protocol, folds=[fold])

    if protocol == "loocv-sequence":
        folds = [
            Fold(name=f"seq-{sid}", train_ids=[i for i in ids if i != sid], test_ids=[sid])
            for sid in ids
        ]
        return SplitSpec(protocol=protocol, folds=folds)

    folds = []
    for subject in manifest.subject_ids:
        folds.append(
            Fold(
                name=f"subject-{subject:02d}",
                train_ids=[e.sequence_id for e in manifest.entries if e.subject != subject],
                test_ids=[e.sequence_id for e in manifest.entries if e.subject == subject],
            )
        )
    return SplitSpec(protocol=protocol, folds=folds)
