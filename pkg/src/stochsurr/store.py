"""Result store: a directory layout with a manifest for reproducibility.

Every pipeline writes its artifacts under one root (datasets/, models/,
designs/, posteriors/, metrics/) and finishes by writing a manifest that
records the config hash, the tool version, and a content hash per emitted
file.  Re-running with the same config and seed reproduces byte-identical
numeric CSVs; tampering is detectable by hash mismatch.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

SUBDIRS = ("datasets", "models", "designs", "posteriors", "metrics")


def fmt(value):
    """Canonical CSV cell: shortest round-trip repr for floats."""
    if isinstance(value, float):
        return repr(float(value))
    if hasattr(value, "item"):
        v = value.item()
        return repr(float(v)) if isinstance(v, float) else str(v)
    return str(value)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


class ResultStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        for sub in SUBDIRS:
            (self.root / sub).mkdir(exist_ok=True)

    def path(self, sub, name) -> Path:
        if sub not in SUBDIRS:
            raise ValueError(f"unknown store subdirectory {sub!r}")
        return self.root / sub / name

    def write_csv(self, sub, name, header, rows):
        path = self.path(sub, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
        return path

    def emitted_files(self):
        out = []
        for sub in SUBDIRS:
            for p in sorted((self.root / sub).rglob("*")):
                if p.is_file():
                    out.append(p)
        return out

    def write_manifest(self, config_text, version, extra=None):
        manifest = {
            "tool_version": version,
            "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
            "config": config_text,
            "files": {str(p.relative_to(self.root)): sha256_file(p)
                      for p in self.emitted_files()},
        }
        if extra:
            manifest.update(extra)
        with open(self.root / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
        return manifest

    def verify(self):
        """Return the list of files whose content no longer matches the manifest."""
        with open(self.root / "manifest.json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        bad = []
        for rel, digest in manifest["files"].items():
            p = self.root / rel
            if not p.exists() or sha256_file(p) != digest:
                bad.append(rel)
        return bad

    def mark_failed(self, stage, error):
        with open(self.root / "FAILED", "w", encoding="utf-8") as fh:
            fh.write(f"stage: {stage}\nerror: {error}\n")
