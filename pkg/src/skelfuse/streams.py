"""Line-delimited landmark stream records.

One JSON object per line, one frame per record:

    {"t": 0.033, "norm": [[u, v], ...], "world": [[x, y, z], ...],
     "vis": [...], "pres": [...], "role": "input"}

Arrays are ordered like the topology's joint list. The format is
human-inspectable, streamable, and append-safe; ground-truth streams use
the same schema with ``"role": "ground_truth"``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import StreamFormatError

logger = logging.getLogger(__name__)

ROLE_INPUT = "input"
ROLE_GROUND_TRUTH = "ground_truth"
_ROLES = (ROLE_INPUT, ROLE_GROUND_TRUTH)


@dataclass(frozen=True)
class LandmarkFrame:
    """One timestamped frame of paired normalized-2D and world-3D landmarks."""

    timestamp: float
    normalized: np.ndarray   # (J, 2) image fractions
    world: np.ndarray        # (J, 3) meters, origin at hip midpoint
    visibility: np.ndarray   # (J,) in [0, 1]
    presence: np.ndarray     # (J,) in [0, 1]
    role: str = ROLE_INPUT

    def __post_init__(self):
        object.__setattr__(self, "normalized", np.asarray(self.normalized, dtype=np.float64))
        object.__setattr__(self, "world", np.asarray(self.world, dtype=np.float64))
        object.__setattr__(self, "visibility", np.asarray(self.visibility, dtype=np.float64))
        object.__setattr__(self, "presence", np.asarray(self.presence, dtype=np.float64))
        j = self.normalized.shape[0]
        if self.normalized.shape != (j, 2) or self.world.shape != (j, 3):
            raise StreamFormatError(
                f"shape mismatch: norm {self.normalized.shape}, world {self.world.shape}")
        if self.visibility.shape != (j,) or self.presence.shape != (j,):
            raise StreamFormatError("visibility/presence length does not match joint count")
        for name, scores in (("visibility", self.visibility), ("presence", self.presence)):
            if np.any((scores < 0.0) | (scores > 1.0)) or not np.all(np.isfinite(scores)):
                raise StreamFormatError(f"{name} scores must lie in [0, 1]")
        if self.role not in _ROLES:
            raise StreamFormatError(f"unknown role {self.role!r}")

    @property
    def n_joints(self) -> int:
        return self.normalized.shape[0]


def frame_to_record(frame: LandmarkFrame) -> dict:
    rec = {
        "t": frame.timestamp,
        "norm": frame.normalized.tolist(),
        "world": frame.world.tolist(),
        "vis": frame.visibility.tolist(),
        "pres": frame.presence.tolist(),
    }
    if frame.role != ROLE_INPUT:
        rec["role"] = frame.role
    return rec


def write_stream(frames: Iterable[LandmarkFrame], sink: IO[str]) -> None:
    for frame in frames:
        sink.write(json.dumps(frame_to_record(frame), separators=(",", ":")))
        sink.write("\n")


_RECORD_KEYS = {"t", "norm", "world", "vis", "pres", "role"}


def _parse_record(rec: dict, line_number: int, n_joints: int | None,
                  topology_name: str) -> LandmarkFrame:
    if not isinstance(rec, dict):
        raise StreamFormatError("record is not a JSON object", line_number)
    unknown = set(rec) - _RECORD_KEYS
    if unknown:
        raise StreamFormatError(f"unknown record keys {sorted(unknown)}", line_number)
    try:
        frame = LandmarkFrame(
            timestamp=float(rec["t"]),
            normalized=np.asarray(rec["norm"], dtype=np.float64),
            world=np.asarray(rec["world"], dtype=np.float64),
            visibility=np.asarray(rec["vis"], dtype=np.float64),
            presence=np.asarray(rec["pres"], dtype=np.float64),
            role=rec.get("role", ROLE_INPUT),
        )
    except KeyError as exc:
        raise StreamFormatError(f"missing field {exc.args[0]!r}", line_number) from None
    except (TypeError, ValueError) as exc:
        raise StreamFormatError(f"malformed field: {exc}", line_number) from None
    except StreamFormatError as exc:
        raise StreamFormatError(str(exc), line_number) from None
    if n_joints is not None and frame.n_joints != n_joints:
        raise StreamFormatError(
            f"record has {frame.n_joints} joints but {topology_name} defines {n_joints}",
            line_number)
    return frame


def parse_stream(source: IO[str], n_joints: int | None = None,
                 topology_name: str = "topology") -> Iterator[LandmarkFrame]:
    """Yield validated frames in timestamp order.

    Joint-count mismatches are hard errors naming the topology; records
    whose timestamp does not advance are skipped with a warning. Line
    numbers are attached to every format error.
    """
    last_t = None
    for line_number, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StreamFormatError(f"invalid JSON: {exc.msg}", line_number) from None
        frame = _parse_record(rec, line_number, n_joints, topology_name)
        if last_t is not None and frame.timestamp <= last_t:
            logger.warning("line %d: non-monotone timestamp %.6f <= %.6f, record skipped",
                           line_number, frame.timestamp, last_t)
            continue
        last_t = frame.timestamp
        yield frame


def read_stream_file(path: str, n_joints: int | None = None,
                     topology_name: str = "topology") -> list[LandmarkFrame]:
    with open(path, "r", encoding="utf-8") as fh:
        return list(parse_stream(fh, n_joints=n_joints, topology_name=topology_name))


def write_stream_file(frames: Iterable[LandmarkFrame], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_stream(frames, fh)
