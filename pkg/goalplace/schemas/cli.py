from typing import Any

from pydantic import BaseModel


class InputDigest(BaseModel):
    path: str
    sha256: str


class Manifest(BaseModel):
    """Written as manifest.json by every subcommand."""

    command: str
    version: str
    seed: int | None = None
    parameters: dict[str, Any] = {}
    inputs: dict[str, InputDigest | list[InputDigest]] = {}
