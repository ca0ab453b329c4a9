"""
Parsers for the three public skeleton datasets.

Each parser turns a raw distribution into dataset-neutral ActionSequence
records. Any deviation from the expected layout fails loudly with the
offending file and line.
"""

import math
import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from app.datasets.errors import DatasetIOError, DatasetParseError
from app.models.skeleton import ActionSequence
from app.utils.logger import get_logger

logger = get_logger(__name__)

UTKINECT_CLASSES: list[str] = [
    "walk",
    "sitDown",
    "standUp",
    "pickUp",
    "carry",
    "throw",
    "push",
    "pull",
    "waveHands",
    "clapHands",
]
UTKINECT_JOINTS = 20

FLORENCE_CLASSES: list[str] = [
    "wave",
    "drink",
    "answer_phone",
    "clap",
    "tight_lace",
    "sit_down",
    "stand_up",
    "read_watch",
    "bow",
]
FLORENCE_JOINTS = 15
FLORENCE_JOINT_NAMES: list[str] = [
    "head",
    "neck",
    "spine",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_hip",
    "right_knee",
    "right_ankle",
]

MSR_CLASSES: list[str] = [
    "high_arm_wave",
    "horizontal_arm_wave",
    "hammer",
    "hand_catch",
    "forward_punch",
    "high_throw",
    "draw_x",
    "draw_tick",
    "draw_circle",
    "hand_clap",
    "two_hand_wave",
    "side_boxing",
    "bend",
    "forward_kick",
    "side_kick",
    "jogging",
    "tennis_swing",
    "tennis_serve",
    "golf_swing",
    "pick_up_and_throw",
]
MSR_JOINTS = 20

# 1-based MSR action ids per activity set, as listed for the cross-subject benchmark
MSR_SUBSET_ACTIONS: dict[str, tuple[int, ...]] = {
    "AS1": (2, 3, 5, 6, 10, 13, 18, 20),
    "AS2": (2, 4, 7, 8, 9, 11, 14, 12),
    "AS3": (6, 14, 15, 16, 17, 18, 19, 20),
}

_UT_JOINT_FILE = re.compile(r"joints_s(\d+)_e(\d+)\.txt$")
_UT_SEQUENCE_HEADER = re.compile(r"^s(\d+)_e(\d+)$")
_MSR_FILE = re.compile(r"a(\d+)_s(\d+)_e(\d+)_skeleton(?:3D)?\.txt$")


def _parse_floats(tokens: list[str], path: Path, line_no: int) -> list[float]:
    try:
        values = [float(t) for t in tokens]
    except ValueError as e:
        raise DatasetParseError(f"malformed numeric token ({e})", path, line_no) from e
    if not all(math.isfinite(v) for v in values):
        raise DatasetParseError("non-finite coordinate", path, line_no)
    return values


def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text(encoding="utf-8", errors="replace").splitlines()
    except FileNotFoundError as e:
        raise DatasetIOError("file not found", path) from e
    except OSError as e:
        raise DatasetIOError(f"cannot read file ({e.strerror})", path) from e


def _require_dir(root: Path) -> None:
    if not root.is_dir():
        raise DatasetIOError("dataset directory not found", root)


# ---------------------------------------------------------------------------
# UT Kinect
# ---------------------------------------------------------------------------

def _parse_utkinect_intervals(
    path: Path,
) -> dict[tuple[int, int], list[tuple[str, float, float]]]:
    """Parse actionLabel.txt: a `sXX_eYY` header followed by `action: start end` lines."""
    intervals: dict[tuple[int, int], list[tuple[str, float, float]]] = defaultdict(list)
    current: tuple[int, int] | None = None
    for line_no, raw in enumerate(_read_lines(path), start=1):
        line = raw.strip()
        if not line:
            continue
        header = _UT_SEQUENCE_HEADER.match(line)
        if header:
            current = (int(header.group(1)), int(header.group(2)))
            continue
        if current is None or ":" not in line:
            raise DatasetParseError(f"unexpected annotation line {line!r}", path, line_no)
        action, _, bounds = line.partition(":")
        action = action.strip()
        if action not in UTKINECT_CLASSES:
            raise DatasetParseError(f"unknown action {action!r}", path, line_no)
        tokens = bounds.split()
        if len(tokens) != 2:
            raise DatasetParseError("expected `action: start end`", path, line_no)
        try:
            start, end = float(tokens[0]), float(tokens[1])
        except ValueError as e:
            raise DatasetParseError(f"malformed frame bound ({e})", path, line_no) from e
        if math.isnan(start):
            raise DatasetParseError("interval start is NaN", path, line_no)
        intervals[current].append((action, start, end))
    return intervals


def _parse_utkinect_joint_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Return (frame numbers, joints[n, 20, 3]) of one continuous recording."""
    expected = 1 + 3 * UTKINECT_JOINTS
    numbers: list[float] = []
    rows: list[list[float]] = []
    for line_no, raw in enumerate(_read_lines(path), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) != expected:
            raise DatasetParseError(
                f"expected {expected} tokens, found {len(tokens)}", path, line_no
            )
        values = _parse_floats(tokens, path, line_no)
        numbers.append(values[0])
        rows.append(values[1:])
    if not rows:
        raise DatasetParseError("joint file has no frames", path)
    frames = np.asarray(rows, dtype=np.float64).reshape(len(rows), UTKINECT_JOINTS, 3)
    return np.asarray(numbers), frames


def parse_utkinect(root: str | Path) -> list[ActionSequence]:
    """
    Parse UT Kinect Action 3D.

    Expects `actionLabel.txt` and `joints_sXX_eYY.txt` files anywhere under root.
    Frames outside the annotated action intervals are dropped; a NaN end bound
    extends the interval to the last recorded frame.
    """
    root = Path(root)
    _require_dir(root)
    label_files = sorted(root.rglob("actionLabel.txt"))
    if not label_files:
        raise DatasetIOError("missing actionLabel.txt annotation file under", root)
    intervals = _parse_utkinect_intervals(label_files[0])

    joint_files = {
        (int(m.group(1)), int(m.group(2))): p
        for p in sorted(root.rglob("joints_s*_e*.txt"))
        if (m := _UT_JOINT_FILE.search(p.name))
    }

    sequences: list[ActionSequence] = []
    for (subject, trial), actions in sorted(intervals.items()):
        path = joint_files.get((subject, trial))
        if path is None:
            raise DatasetIOError(
                "missing joint file", root / f"joints_s{subject:02d}_e{trial:02d}.txt"
            )
        numbers, frames = _parse_utkinect_joint_file(path)
        for action, start, end in actions:
            upper = numbers[-1] if math.isnan(end) else end
            mask = (numbers >= start) & (numbers <= upper)
            if not mask.any():
                raise DatasetParseError(
                    f"interval {action} [{start}, {end}] selects no frames", path
                )
            sequences.append(
                ActionSequence(
                    sequence_id=f"s{subject:02d}_e{trial:02d}_{action}",
                    dataset="utkinect",
                    label=UTKINECT_CLASSES.index(action),
                    label_name=action,
                    subject=subject,
                    trial=trial,
                    frames=frames[mask],
                )
            )
    logger.info(f"Parsed UT Kinect: {len(sequences)} sequences from {len(joint_files)} files")
    return sequences


# ---------------------------------------------------------------------------
# Florence 3D
# ---------------------------------------------------------------------------

def parse_florence(file_path: str | Path) -> list[ActionSequence]:
    """
    Parse the Florence 3D world-coordinates file.

    Each line: gesture id, actor id, category id, then 45 reals. Consecutive lines
    sharing a gesture id form one sequence; a gesture id that reappears after
    another one is a parse error.
    """
    path = Path(file_path)
    if not path.is_file():
        raise DatasetIOError("Florence file not found", path)

    expected = 3 + 3 * FLORENCE_JOINTS
    groups: list[tuple[int, int, int, list[list[float]]]] = []
    closed: set[int] = set()
    for line_no, raw in enumerate(_read_lines(path), start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) != expected:
            raise DatasetParseError(
                f"expected {expected} tokens, found {len(tokens)}", path, line_no
            )
        values = _parse_floats(tokens, path, line_no)
        gesture, actor, category = (int(v) for v in values[:3])
        if not 1 <= category <= len(FLORENCE_CLASSES):
            raise DatasetParseError(f"unknown category id {category}", path, line_no)
        if groups and groups[-1][0] == gesture:
            if (groups[-1][1], groups[-1][2]) != (actor, category):
                raise DatasetParseError(
                    f"gesture {gesture} changes actor/category mid-sequence", path, line_no
                )
            groups[-1][3].append(values[3:])
            continue
        if gesture in closed:
            raise DatasetParseError(
                f"gesture id {gesture} is not contiguous in file order", path, line_no
            )
        if groups:
            closed.add(groups[-1][0])
        groups.append((gesture, actor, category, [values[3:]]))

    trial_counter: dict[tuple[int, int], int] = defaultdict(int)
    sequences: list[ActionSequence] = []
    for gesture, actor, category, rows in groups:
        trial_counter[(actor, category)] += 1
        sequences.append(
            ActionSequence(
                sequence_id=f"g{gesture:03d}",
                dataset="florence",
                label=category - 1,
                label_name=FLORENCE_CLASSES[category - 1],
                subject=actor,
                trial=trial_counter[(actor, category)],
                frames=np.asarray(rows).reshape(len(rows), FLORENCE_JOINTS, 3),
            )
        )
    logger.info(f"Parsed Florence 3D: {len(sequences)} sequences")
    return sequences


# ---------------------------------------------------------------------------
# MSR Action 3D
# ---------------------------------------------------------------------------

def msr_subsets_for(action_id: int) -> tuple[str, ...]:
    """Activity sets containing a 1-based MSR action id."""
    return tuple(tag for tag, ids in MSR_SUBSET_ACTIONS.items() if action_id in ids)


def _parse_msr_file(path: Path, rows_per_frame: int) -> np.ndarray:
    """
    Parse one MSR skeleton file into (n_frames, 20, 3).

    Rows hold `x y z confidence`; confidence is discarded. In the 40-row variant
    each frame is a 20-row screen block followed by a 20-row world block, and an
    optional leading `n_frames n_rows` header line is accepted.
    """
    lines = [(i, raw.split()) for i, raw in enumerate(_read_lines(path), start=1)]
    lines = [(i, t) for i, t in lines if t]
    if lines and rows_per_frame == 40 and len(lines[0][1]) == 2:
        lines = lines[1:]
    if not lines:
        raise DatasetParseError("skeleton file has no rows", path)

    rows: list[list[float]] = []
    for line_no, tokens in lines:
        if len(tokens) != 4:
            raise DatasetParseError(f"expected 4 tokens, found {len(tokens)}", path, line_no)
        rows.append(_parse_floats(tokens, path, line_no)[:3])

    if len(rows) % rows_per_frame:
        raise DatasetParseError(
            f"truncated final frame: {len(rows) % rows_per_frame} of {rows_per_frame} rows",
            path,
            lines[-1][0],
        )
    blocks = np.asarray(rows).reshape(-1, rows_per_frame, 3)
    if rows_per_frame == 40:
        blocks = blocks[:, MSR_JOINTS:, :]
    return blocks


def parse_msr(root: str | Path, rows_per_frame: int = 20) -> list[ActionSequence]:
    """
    Parse MSR Action 3D skeleton files `aXX_sYY_eZZ_skeleton[3D].txt` under root.

    Each sequence is tagged with its AS1/AS2/AS3 memberships.
    """
    if rows_per_frame not in (20, 40):
        raise ValueError(f"rows_per_frame must be 20 or 40, got {rows_per_frame}")
    root = Path(root)
    _require_dir(root)
    files = sorted(p for p in root.rglob("*.txt") if _MSR_FILE.search(p.name))
    if not files:
        raise DatasetIOError("no MSR skeleton files under", root)

    sequences: list[ActionSequence] = []
    for path in files:
        m = _MSR_FILE.search(path.name)
        assert m is not None
        action, subject, trial = (int(g) for g in m.groups())
        if not 1 <= action <= len(MSR_CLASSES):
            raise DatasetParseError(f"unknown action id {action}", path)
        sequences.append(
            ActionSequence(
                sequence_id=f"a{action:02d}_s{subject:02d}_e{trial:02d}",
                dataset="msr",
                label=action - 1,
                label_name=MSR_CLASSES[action - 1],
                subject=subject,
                trial=trial,
                frames=_parse_msr_file(path, rows_per_frame),
                subsets=msr_subsets_for(action),
            )
        )
    logger.info(f"Parsed MSR Action 3D: {len(sequences)} sequences")
    return sequences


def class_names_for(dataset: str) -> list[str]:
    """Class list of a dataset id."""
    names = {
        "utkinect": UTKINECT_CLASSES,
        "florence": FLORENCE_CLASSES,
        "msr": MSR_CLASSES,
    }
    if dataset not in names:
        raise ValueError(f"unknown dataset {dataset!r}; expected one of {sorted(names)}")
    return list(names[dataset])
