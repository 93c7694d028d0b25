"""Analysis and harness settings.

Defaults can be overridden by a JSON file named in ``URIAH_KIT_CONFIG`` and
then by command-line flags.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields

ENV_VAR = "URIAH_KIT_CONFIG"


@dataclass
class Config:
    depth: int = 4  # symbolic call depth
    unroll: int = 2  # loop back edges followed per path before havoc
    paths: int = 4096  # paths per exploration
    heap_clone: bool = False
    symexec: bool = True
    json: str | None = None
    seed: int = 0
    count: int = 100
    cap: int = 100_000  # oracle state-space cap
    workers: int = 0  # 0: one per CPU

    def snapshot(self) -> dict:
        """The part of the config that affects verdicts."""
        return {"budget_depth": self.depth, "budget_paths": self.paths,
                "budget_unroll": self.unroll, "heap_clone": self.heap_clone,
                "symexec": self.symexec}

    def update(self, values: dict) -> Config:
        known = {f.name for f in fields(self)}
        bad = sorted(set(values) - known)
        if bad:
            raise ValueError(f"unknown config keys: {', '.join(bad)}")
        data = asdict(self)
        data.update(values)
        return Config(**data)


def load_config(path: str | None = None, env=os.environ) -> Config:
    """Defaults, overridden by the file at ``path`` or ``$URIAH_KIT_CONFIG``."""
    cfg = Config()
    path = path or env.get(ENV_VAR)
    if path:
        with open(path, encoding="utf-8") as fh:
            cfg = cfg.update(json.load(fh))
    return cfg
