"""Content-addressed store for generated artifacts (banks, trajectories, audio)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class StoredArtifact:
    kind: str
    digest: str
    path: Path
    size: int


class ArtifactStore:
    """Flat files named by the sha256 of their content, grouped by kind.

    Writing the same content twice is a no-op, so generated artifacts are
    naturally deduplicated and references stay valid forever.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, kind: str) -> Path:
        d = self.root / kind
        d.mkdir(parents=True, exist_ok=True)
        return d

    def put_bytes(self, kind: str, content: bytes, *, suffix: str = ".bin") -> StoredArtifact:
        digest = hashlib.sha256(content).hexdigest()
        path = self._dir(kind) / f"{digest}{suffix}"
        if not path.exists():
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_bytes(content)
            tmp.replace(path)
        return StoredArtifact(kind=kind, digest=digest, path=path, size=len(content))

    def put_json(self, kind: str, obj: Any, *, suffix: str = ".json") -> StoredArtifact:
        content = json.dumps(obj, indent=2).encode("utf-8")
        return self.put_bytes(kind, content, suffix=suffix)

    def get(self, kind: str, digest: str) -> bytes:
        matches = list(self._dir(kind).glob(f"{digest}.*"))
        if not matches:
            raise FileNotFoundError(f"no {kind} artifact {digest}")
        return matches[0].read_bytes()

    def list(self, kind: str) -> list[StoredArtifact]:
        artifacts = []
        for path in sorted(self._dir(kind).iterdir()):
            if path.suffix == ".tmp" or not path.is_file():
                continue
            artifacts.append(
                StoredArtifact(
                    kind=kind,
                    digest=path.name.split(".")[0],
                    path=path,
                    size=path.stat().st_size,
                )
            )
        return artifacts
