"""
Input validation for the command layer

Checks spec-file paths (existence, size, extension), loads them into the
pydantic spec models, and sanitizes names used for artifact directories.
"""

import json
import logging
import os
import re
from pathlib import Path
from typing import Optional, Tuple, Type, TypeVar

from pydantic import BaseModel

from calculus.errors import MalformedInputError
from cli.models import SPEC_MODELS

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

DEFAULT_OUT = "artifacts"
MAX_SPEC_SIZE_MB = 1
ALLOWED_EXTENSIONS = {".json"}


def output_root() -> str:
    """Default artifact directory, OSCULATE_OUT if set."""
    return os.getenv("OSCULATE_OUT", DEFAULT_OUT)


def validate_input_path(
    path: str,
    max_size_mb: int = MAX_SPEC_SIZE_MB,
    allowed_extensions: set = ALLOWED_EXTENSIONS,
) -> Path:
    """
    Validate a spec file reference.

    Returns:
        Resolved path

    Raises:
        MalformedInputError: missing file, wrong extension or oversized file
    """
    p = Path(path)
    if not p.is_file():
        raise MalformedInputError("input file not found", location=str(path))
    ext = p.suffix.lower()
    if ext not in allowed_extensions:
        raise MalformedInputError(
            f"invalid file type. Allowed types: {', '.join(sorted(allowed_extensions))}", location=str(path)
        )
    if p.stat().st_size > max_size_mb * 1024 * 1024:
        raise MalformedInputError(f"file too large. Maximum size is {max_size_mb}MB", location=str(path))
    return p.resolve()


def safe_name(name: str, fallback: str = "run") -> str:
    """Directory-safe version of a spec or command name."""
    cleaned = re.sub(r"[^a-zA-Z0-9._-]", "_", name).replace("..", "_")
    if not cleaned or cleaned.startswith("."):
        return fallback
    return cleaned


def read_json(path: Path) -> dict:
    """
    Parse a JSON object.

    Raises:
        json.JSONDecodeError: the file is not JSON
        MalformedInputError: the top level is not an object
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise MalformedInputError("spec file must contain a JSON object", location=str(path))
    return data


def load_spec(path: str, expected: Optional[Type[M]] = None) -> Tuple[BaseModel, Path]:
    """
    Load a spec file into the model named by its "kind" field.

    Returns:
        (model, resolved path)

    Raises:
        MalformedInputError: unknown kind or a kind other than `expected`
        pydantic.ValidationError: the fields do not validate
    """
    resolved = validate_input_path(path)
    data = read_json(resolved)
    kind = data.get("kind")
    if kind not in SPEC_MODELS:
        raise MalformedInputError(
            f"unknown spec kind {kind!r}; expected one of {sorted(SPEC_MODELS)}", location=str(path)
        )
    model = SPEC_MODELS[kind]
    if expected is not None and model is not expected:
        raise MalformedInputError(f"expected a {expected.__name__}, got kind {kind!r}", location=str(path))
    spec = model.model_validate(data)
    logger.debug("loaded %s spec %s from %s", kind, getattr(spec, "name", ""), resolved)
    return spec, resolved


def resolve_reference(reference: str, base_dir: Path) -> Optional[Path]:
    """A spec reference relative to the referring file, or None for catalog names."""
    if not reference.endswith(".json"):
        return None
    candidate = Path(reference)
    if not candidate.is_absolute():
        candidate = base_dir / candidate
    return candidate
