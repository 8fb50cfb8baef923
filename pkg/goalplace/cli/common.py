from pathlib import Path
from typing import Any, Optional

from goalplace import __version__
from goalplace.core.config import settings
from goalplace.schemas.cli import InputDigest, Manifest
from goalplace.utils.jsonl import file_digest, write_json

MANIFEST = "manifest.json"


def resolve(value: Any, name: str) -> Any:
    """Explicit flag value, else the configured setting ``name``."""
    return getattr(settings, name) if value is None else value


def _digest(path: Path) -> InputDigest:
    return InputDigest(path=str(path), sha256=file_digest(path))


def start_run(
    out: Path,
    command: str,
    parameters: dict[str, Any],
    inputs: dict[str, Optional[Path | list[Path]]],
    seed: Optional[int] = None,
) -> Path:
    """Create ``out`` and write the manifest of resolved parameters and input digests."""
    out.mkdir(parents=True, exist_ok=True)
    digests: dict[str, InputDigest | list[InputDigest]] = {}
    for key, value in inputs.items():
        if value is None:
            continue
        digests[key] = [_digest(p) for p in value] if isinstance(value, list) else _digest(value)
    manifest = Manifest(command=command, version=__version__, seed=seed, parameters=parameters, inputs=digests)
    write_json(out / MANIFEST, manifest.model_dump(mode="json"))
    return out
