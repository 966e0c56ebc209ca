"""Shot and video feature aggregation (mean pooling) and the shot/frame
sampling policy.

Means are accumulated in 64-bit after sorting each coordinate's values, so
they are bit-exactly invariant to input order; results are emitted as
32-bit.
"""

import numpy as np

from .featurestore import Shot, VideoRecord

__all__ = ["shot_feature", "video_feature", "sample_shots", "even_indices"]


def _ordered_mean(rows: np.ndarray) -> np.ndarray:
    # Sort each column before summing: permutations of the input rows then
    # reduce in the identical order, so the result is exactly permutation
    # invariant (not just up to rounding).
    acc = np.sort(rows.astype(np.float64), axis=0)
    return (acc.sum(axis=0) / rows.shape[0]).astype(np.float32)


def shot_feature(shot) -> np.ndarray:
    """Elementwise mean of a shot's frame features -> (d_v,) float32."""
    frames = shot.frames if isinstance(shot, Shot) else np.asarray(shot, dtype=np.float32)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("shot_feature requires a non-empty (frames, d_v) matrix")
    return _ordered_mean(frames)


def video_feature(shot_features) -> np.ndarray:
    """Elementwise mean of shot features -> (d_v,) float32."""
    rows = np.asarray(shot_features, dtype=np.float32)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    if rows.shape[0] == 0:
        raise ValueError("video_feature requires at least one shot feature")
    return _ordered_mean(rows)


def even_indices(available: int, wanted: int) -> list:
    """Evenly spaced indices ``floor(j*(available-1)/(wanted-1))``; duplicates
    appear when fewer than ``wanted`` items are available."""
    if available < 1 or wanted < 1:
        raise ValueError("even_indices requires positive counts")
    if wanted == 1:
        return [0]
    return [(j * (available - 1)) // (wanted - 1) for j in range(wanted)]


def sample_shots(record: VideoRecord, num_shots: int = 8, frames_per_shot: int = 3,
                 mode: str = "deterministic-uniform", seed: int = 0) -> list:
    """Subsample a record to ``num_shots`` shots of ``frames_per_shot`` frames.

    mode "seeded-random": shots drawn without replacement from ``seed``
    (returned in temporal order); "deterministic-uniform": evenly spaced shot
    indices. Records with fewer shots return all of them. Frames are always
    picked by even spacing within the shot.
    """
    n = len(record.shots)
    if n == 0:
        raise ValueError(f"record {record.id}: cannot sample shots from an empty record")
    if mode not in ("seeded-random", "deterministic-uniform"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    if n <= num_shots:
        idx = list(range(n))
    elif mode == "seeded-random":
        rng = np.random.default_rng(seed)
        idx = sorted(rng.choice(n, size=num_shots, replace=False).tolist())
    else:
        idx = even_indices(n, num_shots)

    out = []
    for i in idx:
        shot = record.shots[i]
        frame_idx = even_indices(shot.num_frames, frames_per_shot)
        stats = None
        if shot.pixel_stats is not None:
            stats = [shot.pixel_stats[j] for j in frame_idx]
        out.append(Shot(shot.frames[frame_idx], stats))
    return out
