"""Parameter record embedded in every CLI output."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


def _plain(v):
    """Normalise to JSON-native types so that parse(print(c)) == c."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "item") and callable(v.item):  # numpy scalars
        return v.item()
    if v is None or isinstance(v, (bool, int, float, str)):
        return v
    raise TypeError(f"cannot store {type(v).__name__} in a run config")


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    version: int = 1

    def __post_init__(self):
        self.params = _plain(self.params)

    def to_dict(self) -> dict:
        return {"command": self.command, "params": self.params, "version": self.version}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            return cls(str(d["command"]), dict(d.get("params", {})), int(d.get("version", 1)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed run config: {exc}") from None

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return self.command == other.command and self.version == other.version and _same(self.params, other.params)


def _same(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_same(a[k], b[k]) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return type(a) is type(b) and a == b
