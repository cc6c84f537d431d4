"""Service configuration: one JSON document plus environment overrides.

Every tunable named by the pipeline lives here (segmentation tau/omega,
grounding thresholds, canonicalization thresholds, confidence bands, top-k,
conversation window) so deployments never patch code to retune.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import BadRequestError

ROLES = ("captioner", "embedder", "enricher", "narrator", "extractor")

DEFAULT_TEMPERATURES = {
    "captioner": 0.2,
    "embedder": 0.0,
    "enricher": 0.05,
    "narrator": 0.3,
    "extractor": 0.0,
}


@dataclass(frozen=True)
class BackendConfig:
    role: str
    mode: str = "mock"  # mock | remote
    endpoint: str | None = None
    credentials_ref: str | None = None
    temperature: float | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise BadRequestError(f"unknown backend role: {self.role!r}")
        if self.mode not in ("mock", "remote"):
            raise BadRequestError(f"backend mode must be mock or remote, got {self.mode!r}")
        if self.mode == "remote" and not self.endpoint:
            raise BadRequestError(f"remote backend {self.role!r} requires an endpoint")
        if self.temperature is None:
            object.__setattr__(self, "temperature", DEFAULT_TEMPERATURES[self.role])
        if self.credentials_ref is None:
            object.__setattr__(
                self, "credentials_ref", f"ATLAS_{self.role.upper()}_API_KEY"
            )


@dataclass(frozen=True)
class AtlasConfig:
    store_path: str | None = None
    taxonomy_path: str | None = None
    clip_len_s: float = 30.0
    overlap_s: float = 5.0
    top_k: int = 10
    embedding_dimension: int = 768
    confidence_threshold: float = 0.65
    iou_threshold: float = 0.3
    frame_samples: int = 10
    lexical_threshold: float = 0.5
    coref_threshold: float = 0.7
    band_high: float = 0.75
    band_medium: float = 0.5
    context_window: int = 5
    retain_active_clip_on_overlap: bool = True
    retry_attempts: int = 3
    request_timeout_s: float = 30.0
    backends: dict = field(default_factory=dict)

    def backend(self, role: str) -> BackendConfig:
        raw = self.backends.get(role, {})
        return BackendConfig(role=role, **raw)


_SCALAR_KEYS = {
    "store_path": str,
    "taxonomy_path": str,
    "clip_len_s": float,
    "overlap_s": float,
    "top_k": int,
    "embedding_dimension": int,
    "confidence_threshold": float,
    "iou_threshold": float,
    "frame_samples": int,
    "lexical_threshold": float,
    "coref_threshold": float,
    "band_high": float,
    "band_medium": float,
    "context_window": int,
    "retain_active_clip_on_overlap": bool,
    "retry_attempts": int,
    "request_timeout_s": float,
}


def load_config(path: str | Path | None = None, env: dict | None = None) -> AtlasConfig:
    """Load configuration, resolving in order: defaults < file < environment.

    The file path comes from the argument or ATLAS_CONFIG. Scalar keys can be
    overridden with ATLAS_<KEY> variables; backend modes/endpoints with
    ATLAS_<ROLE>_MODE / ATLAS_<ROLE>_ENDPOINT.
    """
    env = dict(os.environ if env is None else env)
    if path is None:
        path = env.get("ATLAS_CONFIG")
    values: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise BadRequestError(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise BadRequestError(f"malformed config file {p}: {exc}") from exc
        unknown = set(doc) - set(_SCALAR_KEYS) - {"backends"}
        if unknown:
            raise BadRequestError(f"unknown config keys: {sorted(unknown)}")
        values.update(doc)

    for key, caster in _SCALAR_KEYS.items():
        env_key = f"ATLAS_{key.upper()}"
        if env_key in env:
            raw = env[env_key]
            if caster is bool:
                values[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                values[key] = caster(raw)

    backends = dict(values.pop("backends", {}))
    for role in ROLES:
        role_cfg = dict(backends.get(role, {}))
        mode_key = f"ATLAS_{role.upper()}_MODE"
        endpoint_key = f"ATLAS_{role.upper()}_ENDPOINT"
        if mode_key in env:
            role_cfg["mode"] = env[mode_key]
        if endpoint_key in env:
            role_cfg["endpoint"] = env[endpoint_key]
        if role_cfg:
            backends[role] = role_cfg

    config = AtlasConfig(backends=backends, **values)
    # Fail fast on inconsistent thresholds.
    if not (0.0 <= config.confidence_threshold <= 1.0):
        raise BadRequestError("confidence_threshold must lie in [0, 1]")
    if config.band_medium > config.band_high:
        raise BadRequestError("band_medium must not exceed band_high")
    for role in ROLES:
        config.backend(role)
    return config


def with_overrides(config: AtlasConfig, **kwargs) -> AtlasConfig:
    return replace(config, **kwargs)
