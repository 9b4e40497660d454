"""Model registry (one JSON file, rewritten atomically) and service configuration."""

from __future__ import annotations

import datetime as dt
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .domain import SUNDAY, Region, SourceKind, parse_date, parse_weekday
from .errors import ConfigError, InvalidArgument, UnknownModel
from .inference import DEFAULT_SMOOTHING_WINDOW, MissingDayPolicy
from .model import ModelArtifact
from .store import DATA_DIR_ENV

CONFIG_ENV = "ILINOWCAST_CONFIG"


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class RegistryEntry:
    model_id: str
    path: str
    region: Region
    source: SourceKind
    trained_on: tuple[dt.date, dt.date]
    created_at: str

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "path": self.path, "region": self.region.value,
                "source": self.source.value,
                "trained_on": [self.trained_on[0].isoformat(), self.trained_on[1].isoformat()],
                "created_at": self.created_at}

    @classmethod
    def from_dict(cls, d: dict) -> RegistryEntry:
        return cls(d["model_id"], d["path"], Region.parse(d["region"]), SourceKind.parse(d["source"]),
                   (parse_date(d["trained_on"][0]), parse_date(d["trained_on"][1])), d["created_at"])


class ModelRegistry:
    """Registered models; artifact paths are stored relative to the registry file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def entries(self) -> list[RegistryEntry]:
        if not self.path.exists():
            return []
        doc = json.loads(self.path.read_text(encoding="utf-8"))
        return [RegistryEntry.from_dict(d) for d in doc.get("models", [])]

    def get(self, model_id: str) -> RegistryEntry:
        for e in self.entries():
            if e.model_id == model_id:
                return e
        raise UnknownModel(f"no registered model {model_id!r}")

    def artifact_path(self, entry: RegistryEntry) -> Path:
        return self.path.parent / entry.path

    def load(self, model_id: str) -> ModelArtifact:
        return ModelArtifact.load(self.artifact_path(self.get(model_id)))

    def register(self, model: ModelArtifact, created_at: str | None = None) -> RegistryEntry:
        model_id = model.model_id
        rel = f"models/{model_id}.json"
        target = self.path.parent / rel
        atomic_write(target, model.to_json())
        created_at = created_at or dt.datetime.now(dt.timezone.utc).replace(microsecond=0).isoformat()
        entry = RegistryEntry(model_id, rel, model.region, model.source, model.trained_on, created_at)
        entries = [e for e in self.entries() if e.model_id != model_id] + [entry]
        doc = {"models": [e.to_dict() for e in entries]}
        atomic_write(self.path, json.dumps(doc, indent=2) + "\n")
        return entry

    def validate(self) -> list[str]:
        problems = []
        seen = set()
        for e in self.entries():
            if e.model_id in seen:
                problems.append(f"duplicate model_id {e.model_id}")
            seen.add(e.model_id)
            try:
                ModelArtifact.load(self.artifact_path(e))
            except Exception as exc:  # noqa: BLE001 - any failure makes the entry invalid
                problems.append(f"{e.model_id}: cannot load {e.path}: {exc}")
        return problems


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    registry_path: Path
    host: str = "127.0.0.1"
    port: int = 8080
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW
    policy: MissingDayPolicy = MissingDayPolicy.STRICT
    week_ending_weekday: int = SUNDAY

    @classmethod
    def load(cls, path: str | Path | None = None, **overrides) -> ServiceConfig:
        """Read a JSON config (``path`` or $ILINOWCAST_CONFIG), apply overrides, validate.

        All problems are reported together in one ``ConfigError``.
        """
        raw: dict = {}
        path = path or os.environ.get(CONFIG_ENV)
        problems = []
        if path:
            try:
                raw = json.loads(Path(path).read_text(encoding="utf-8"))
                if not isinstance(raw, dict):
                    raise ValueError("top level must be an object")
            except (OSError, ValueError) as exc:
                raise ConfigError([f"cannot read config {path}: {exc}"]) from None
        if os.environ.get(DATA_DIR_ENV):
            raw["data_dir"] = os.environ[DATA_DIR_ENV]
        raw.update({k: v for k, v in overrides.items() if v is not None})
        known = {"data_dir", "registry_path", "host", "port", "smoothing_window", "policy",
                 "week_ending_weekday"}
        problems += [f"unknown setting {k!r}" for k in sorted(set(raw) - known)]
        values: dict = {}
        if not raw.get("data_dir"):
            problems.append(f"data_dir is required (config file or ${DATA_DIR_ENV})")
        else:
            values["data_dir"] = Path(raw["data_dir"])
        values["registry_path"] = Path(raw.get("registry_path")
                                       or Path(raw.get("data_dir") or ".") / "registry.json")
        values["host"] = str(raw.get("host", cls.host))
        try:
            values["port"] = int(raw.get("port", cls.port))
            if not 0 <= values["port"] <= 65535:
                raise ValueError
        except (TypeError, ValueError):
            problems.append(f"port must be an integer in 0..65535, got {raw.get('port')!r}")
        try:
            w = int(raw.get("smoothing_window", DEFAULT_SMOOTHING_WINDOW))
            if w < 3 or w % 2 == 0:
                raise ValueError
            values["smoothing_window"] = w
        except (TypeError, ValueError):
            problems.append(f"smoothing_window must be an odd integer >= 3, got {raw.get('smoothing_window')!r}")
        try:
            values["policy"] = MissingDayPolicy.parse(raw.get("policy", "strict"))
        except InvalidArgument as exc:
            problems.append(str(exc))
        try:
            values["week_ending_weekday"] = parse_weekday(raw.get("week_ending_weekday", "sunday"))
        except InvalidArgument as exc:
            problems.append(str(exc))
        if problems:
            raise ConfigError(problems)
        return cls(**values)
