"""Report files: CSV tables and the run manifest.

Numbers are printed with 17 significant digits so every value round-trips
exactly; files are UTF-8 with LF endings regardless of platform.  The
manifest is a single JSON object; its wall-clock field is the only part of a
run's output allowed to differ between identical runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field


def fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def config_hash(sections: dict) -> str:
    """Stable hash of parsed config content, invariant to key order."""
    canon = json.dumps(sections, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    master_seed: int
    version: str
    verdicts: dict = field(default_factory=dict)  # check name -> pass|fail|inconclusive
    outputs: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    notes: dict = field(default_factory=dict)

    def record(self, name: str, verdict: str) -> None:
        if verdict not in ("pass", "fail", "inconclusive"):
            raise ValueError(f"bad verdict {verdict!r}")
        self.verdicts[name] = verdict

    @property
    def failed(self) -> bool:
        return any(v == "fail" for v in self.verdicts.values())


def write_manifest(path, manifest: RunManifest) -> None:
    payload = {
        "config_hash": manifest.config_hash,
        "master_seed": manifest.master_seed,
        "version": manifest.version,
        "verdicts": manifest.verdicts,
        "outputs": manifest.outputs,
        "wall_clock_s": manifest.wall_clock_s,
        "notes": manifest.notes,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
