"""Binary dataset files for expert videos and pseudo-labeled videos.

Video record: u32 map-id length, map-id utf-8, u32 frame count, then
frame_count * ray_count little-endian float32 depths. The labeled variant
appends u32 action count and one byte per action. A JSON manifest lists
record offsets and provenance metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .expert import VideoClip, VideoDataset


def save_video_dataset(bin_path: str | Path, dataset: VideoDataset,
                       ray_count: int) -> dict:
    """Write records and return the manifest dict (caller persists it)."""
    records = []
    with open(bin_path, "wb") as f:
        for clip in dataset.clips:
            obs = np.ascontiguousarray(clip.observations, dtype="<f4")
            if obs.shape[1] != ray_count:
                raise ValueError(f"clip ray count {obs.shape[1]} != {ray_count}")
            records.append({
                "offset": f.tell(),
                "map_id": clip.map_id,
                "frames": int(obs.shape[0]),
                "start_pose": list(clip.start_pose),
                "goal_cell": list(clip.goal_cell),
            })
            mid = clip.map_id.encode("utf-8")
            f.write(struct.pack("<I", len(mid)))
            f.write(mid)
            f.write(struct.pack("<I", obs.shape[0]))
            f.write(obs.tobytes())
    return {
        "format": "vmsr-videos-v1",
        "ray_count": ray_count,
        "seed": dataset.seed,
        "map_ids": dataset.map_ids,
        "records": records,
    }


def load_video_dataset(bin_path: str | Path, manifest: dict) -> VideoDataset:
    if manifest.get("format") != "vmsr-videos-v1":
        raise ValueError(f"unexpected video dataset format {manifest.get('format')!r}")
    ray_count = manifest["ray_count"]
    clips = []
    with open(bin_path, "rb") as f:
        for rec in manifest["records"]:
            f.seek(rec["offset"])
            (mid_len,) = struct.unpack("<I", f.read(4))
            map_id = f.read(mid_len).decode("utf-8")
            (frames,) = struct.unpack("<I", f.read(4))
            obs = np.frombuffer(f.read(4 * frames * ray_count), dtype="<f4")
            obs = obs.reshape(frames, ray_count).astype(np.float32)
            clips.append(VideoClip(
                observations=obs, map_id=map_id,
                start_pose=tuple(rec["start_pose"]),
                goal_cell=tuple(rec["goal_cell"]),
            ))
    return VideoDataset(clips=clips, seed=manifest["seed"],
                        map_ids=list(manifest["map_ids"]))


def save_labeled_videos(bin_path: str | Path, videos: VideoDataset,
                        labels: list[np.ndarray], ray_count: int) -> dict:
    """Video records each followed by the pseudo-action byte array."""
    if len(labels) != len(videos.clips):
        raise ValueError("one label array per clip required")
    records = []
    with open(bin_path, "wb") as f:
        for clip, acts in zip(videos.clips, labels):
            acts = np.ascontiguousarray(acts, dtype=np.uint8)
            if len(acts) != clip.length - 1:
                raise ValueError("label count must be frames - 1")
            obs = np.ascontiguousarray(clip.observations, dtype="<f4")
            records.append({
                "offset": f.tell(),
                "map_id": clip.map_id,
                "frames": int(obs.shape[0]),
            })
            mid = clip.map_id.encode("utf-8")
            f.write(struct.pack("<I", len(mid)))
            f.write(mid)
            f.write(struct.pack("<I", obs.shape[0]))
            f.write(obs.tobytes())
            f.write(struct.pack("<I", len(acts)))
            f.write(acts.tobytes())
    return {
        "format": "vmsr-labeled-v1",
        "ray_count": ray_count,
        "seed": videos.seed,
        "map_ids": videos.map_ids,
        "records": records,
    }


def load_labeled_videos(bin_path: str | Path, manifest: dict):
    """Returns (observations list, pseudo-action list, map_id list)."""
    if manifest.get("format") != "vmsr-labeled-v1":
        raise ValueError(f"unexpected labeled dataset format {manifest.get('format')!r}")
    ray_count = manifest["ray_count"]
    all_obs, all_acts, map_ids = [], [], []
    with open(bin_path, "rb") as f:
        for rec in manifest["records"]:
            f.seek(rec["offset"])
            (mid_len,) = struct.unpack("<I", f.read(4))
            map_ids.append(f.read(mid_len).decode("utf-8"))
            (frames,) = struct.unpack("<I", f.read(4))
            obs = np.frombuffer(f.read(4 * frames * ray_count), dtype="<f4")
            all_obs.append(obs.reshape(frames, ray_count).astype(np.float32))
            (n_acts,) = struct.unpack("<I", f.read(4))
            all_acts.append(np.frombuffer(f.read(n_acts), dtype=np.uint8).astype(np.int64))
    return all_obs, all_acts, map_ids


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n",
                          encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
