import hashlib
import json

import jsonschema

from .errors import SchemaError


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(obj) -> str:
    """Hex SHA-256 of the canonical JSON encoding of ``obj``."""
    return hashlib.sha256(canonical(obj).encode()).hexdigest()


def validate(doc, schema, what="document"):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"invalid {what}: {exc.message}") from None
