"""Run manifests: enough to reproduce any run bit-for-bit.

A manifest records the full config snapshot, a content hash of the package
source, the seed list, output directory and timestamps.  ``train
--from-manifest`` replays one.
"""

import hashlib
import json
import os
from datetime import datetime, timezone

MANIFEST_SCHEMA = "acorm-manifest/v1"


def code_hash():
    """SHA-256 over the package's source files, path-sorted."""
    pkg_dir = os.path.dirname(os.path.abspath(__file__))
    digest = hashlib.sha256()
    for root, _, names in sorted(os.walk(pkg_dir)):
        for name in sorted(names):
            if not name.endswith(".py"):
                continue
            rel = os.path.relpath(os.path.join(root, name), pkg_dir)
            digest.update(rel.encode())
            with open(os.path.join(root, name), "rb") as fh:
                digest.update(fh.read())
    return digest.hexdigest()


def build_manifest(config, seeds, out_dir, variant=None):
    m = {
        "schema": MANIFEST_SCHEMA,
        "config": config.to_dict(),
        "code_hash": code_hash(),
        "seeds": [int(s) for s in seeds],
        "output_dir": os.path.abspath(out_dir),
        "created": datetime.now(timezone.utc).isoformat(),
    }
    if variant is not None:
        m["variant"] = variant
    return m


def write_manifest(path, manifest):
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)


def load_manifest(path):
    with open(path) as fh:
        m = json.load(fh)
    if m.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"manifest schema {m.get('schema')!r} != {MANIFEST_SCHEMA!r}")
    return m
