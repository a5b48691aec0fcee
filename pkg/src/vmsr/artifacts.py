"""Artifact manifests and the provenance chain between pipeline stages."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

from . import __version__
from .errors import MissingArtifactError, VmsrError


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def manifest_path(out_dir: str | Path, artifact: str) -> Path:
    return Path(out_dir) / f"{artifact}.manifest.json"


def write_manifest(out_dir: str | Path, artifact: str, *, seed: int,
                   config_hash: str, inputs: dict[str, str],
                   wall_time_s: float, extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    body = {
        "artifact": artifact,
        "version": f"vmsr-{__version__}",
        "seed": seed,
        "config_hash": config_hash,
        "inputs": inputs,
        "wall_time_s": round(wall_time_s, 3),
        "created_unix": int(time.time()),
    }
    if extra:
        body["extra"] = extra
    path = manifest_path(out, artifact)
    path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_manifest(out_dir: str | Path, artifact: str, needed_by: str) -> dict:
    path = manifest_path(out_dir, artifact)
    if not path.exists():
        raise MissingArtifactError(
            f"missing artifact {artifact!r}; run `vmsr {_PRODUCERS.get(artifact, '?')}` "
            f"before `vmsr {needed_by}`")
    return json.loads(path.read_text(encoding="utf-8"))


def manifest_ref(out_dir: str | Path, artifact: str) -> str:
    """Content hash of an input's manifest, recorded by downstream stages."""
    return _file_hash(manifest_path(out_dir, artifact))


def check_chain(manifest: dict, *, seed: int, config_hash: str,
                force: bool = False) -> None:
    if force:
        return
    if manifest.get("seed") != seed:
        raise VmsrError(
            f"artifact {manifest.get('artifact')!r} was produced with master seed "
            f"{manifest.get('seed')} but the current run uses {seed}; pass --force to mix")
    if manifest.get("config_hash") != config_hash:
        raise VmsrError(
            f"artifact {manifest.get('artifact')!r} was produced under a different "
            "config; regenerate it or pass --force")


_PRODUCERS = {
    "maps": "gen-envs",
    "interactions": "collect",
    "inverse": "train-inverse",
    "labeled": "label",
    "bundle": "train-subroutines",
    "explore": "explore",
    "iou": "iou",
    "ablate": "ablate",
    "hrl": "hrl",
}
