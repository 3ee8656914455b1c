"""Published JSON schemas for the wire protocol.

Responses on every code path must validate against RESPONSE_SCHEMA; the test
suite enforces this.
"""

REQUEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "DetectRequest",
    "type": "object",
    "required": ["image", "query"],
    "additionalProperties": False,
    "properties": {
        "image": {"type": "string", "description": "base64 lossless (PNG) RGB image"},
        "query": {"type": "string", "minLength": 1},
        "want_mask": {"type": "boolean", "default": True},
    },
}

RLE_SCHEMA = {
    "type": "object",
    "required": ["size", "counts"],
    "additionalProperties": False,
    "properties": {
        "size": {"type": "array", "items": {"type": "integer", "minimum": 1},
                 "minItems": 2, "maxItems": 2},
        "counts": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
}

RESPONSE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "DetectResponse",
    "type": "object",
    "required": ["detections", "model_info"],
    "additionalProperties": False,
    "properties": {
        "detections": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["bbox", "score"],
                "additionalProperties": False,
                "properties": {
                    "bbox": {"type": "array", "items": {"type": "number"},
                             "minItems": 4, "maxItems": 4},
                    "score": {"type": "number", "minimum": 0.0, "maximum": 1.0},
                    "mask_rle": {"oneOf": [RLE_SCHEMA, {"type": "null"}]},
                },
            },
        },
        "model_info": {"type": "array", "items": {"type": "string"}},
    },
}

HEALTH_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "HealthResponse",
    "type": "object",
    "required": ["mode", "models"],
    "additionalProperties": False,
    "properties": {
        "mode": {"type": "string", "enum": ["live", "fixture"]},
        "models": {"type": "array", "items": {"type": "string"}},
    },
}

ERROR_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ErrorResponse",
    "type": "object",
    "required": ["error"],
    "additionalProperties": False,
    "properties": {"error": {"type": "string"}},
}
