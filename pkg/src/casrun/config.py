"""Service configuration: defaults, JSON file loading and validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from casrun.scenarios import default_data_dir
from casrun.train_booking import DEFAULT_PAGE_SIZE

DEFAULT_API_KEY_ENV = "LLM_API_KEY"


@dataclass
class Config:
    """Operational settings for the service and CLI."""

    base_url: str = "https://api.openai.com/v1"
    api_key_env_name: str = DEFAULT_API_KEY_ENV
    default_model: str = "gpt-4o-mini"
    scenario: str = "booking"
    page_size: int = DEFAULT_PAGE_SIZE
    data_dir: str = field(default_factory=lambda: str(default_data_dir()))
    sessions_dir: str = "sessions"
    listen_addr: str = "127.0.0.1:8700"

    def __post_init__(self) -> None:
        host, _, port = self.listen_addr.rpartition(":")
        if not host or not port.isdigit() or not 0 < int(port) < 65536:
            raise ValueError(f"listen_addr must be host:port, got {self.listen_addr!r}")
        if not Path(self.data_dir).is_dir():
            raise ValueError(f"data_dir does not exist: {self.data_dir}")
        if self.page_size < 1:
            raise ValueError("page_size must be >= 1")

    @property
    def host(self) -> str:
        return self.listen_addr.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.listen_addr.rpartition(":")[2])


def load_config(path: str | Path | None = None) -> Config:
    """Load configuration from a JSON file; missing file fields keep their
    defaults. ``path=None`` returns pure defaults."""
    if path is None:
        return Config()
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    known = {f for f in Config.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    return Config(**data)
