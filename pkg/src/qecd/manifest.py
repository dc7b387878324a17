"""Run manifests: every CLI command leaves one manifest.json in its output
directory recording the command, resolved config, seed, and file digests."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path
from typing import Dict, List, Optional

from .errors import DataError

ARTIFACT_VERSION = "0.1.0"
MANIFEST_NAME = "manifest.json"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: Dict, seed: Optional[int],
                   inputs: Optional[List] = None, outputs: Optional[List] = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "artifact_version": ARTIFACT_VERSION,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "inputs": {str(p): file_digest(p) for p in (inputs or [])},
        "outputs": {str(Path(p).name): file_digest(p) for p in (outputs or [])},
    }
    path = out_dir / MANIFEST_NAME
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def verify_manifest(out_dir) -> Dict:
    """Re-hash the recorded outputs; raises DataError on any mismatch."""
    out_dir = Path(out_dir)
    path = out_dir / MANIFEST_NAME
    with open(path) as f:
        manifest = json.load(f)
    bad = []
    for name, digest in manifest.get("outputs", {}).items():
        target = out_dir / name
        if not target.exists() or file_digest(target) != digest:
            bad.append(name)
    if bad:
        raise DataError(f"manifest digest mismatch for: {', '.join(bad)}")
    return manifest
