"""Run manifests: what was run, with which inputs, and what it produced."""

from __future__ import annotations

import hashlib
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

__all__ = ["RunManifest", "sha256_file", "package_versions"]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def package_versions() -> dict:
    import numba
    import numpy
    import scipy

    from . import __version__

    return {
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "foldnoise": __version__,
    }


@dataclass
class RunManifest:
    """Provenance record written next to every output file."""

    command_line: list
    config: dict
    seed: int | None = None
    versions: dict = field(default_factory=package_versions)
    wall_clock_s: float = 0.0
    outputs: dict = field(default_factory=dict)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    @classmethod
    def start(cls, config: dict, seed=None, argv=None):
        return cls(command_line=list(sys.argv if argv is None else argv), config=dict(config), seed=seed)

    def add_output(self, path) -> str:
        digest = sha256_file(path)
        self.outputs[str(path)] = digest
        return digest

    def finish(self, path) -> Path:
        self.wall_clock_s = time.perf_counter() - self._t0
        data = asdict(self)
        data.pop("_t0")
        path = Path(path)
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
        return path
