"""Operator configuration: one merged view of config file, environment
overrides and command-line flags, in that order of increasing precedence."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import yaml

CONFIG_ENV = "HELIOS_CONFIG"
BASE_URL_ENV = "HELIOS_BASE_URL"


class ConfigError(ValueError):
    """Bad or unreadable configuration."""


@dataclass
class CliConfig:
    # server
    host: str = "127.0.0.1"
    port: int = 8000
    calibration: str | None = None
    latency: float = 0.0
    queue_timeout: float = 30.0
    log_path: str = "helios-experiments.ndjson"
    static_dir: str | None = None
    seed: int | None = None
    token: str | None = None
    # client
    base_url: str = "http://127.0.0.1:8000"
    timeout: float = 10.0
    retries: int = 2
    backoff_base: float = 0.25
    # LLM provider
    provider_endpoint: str = ""
    provider_model: str = ""
    credential_env: str = "HELIOS_LLM_API_KEY"
    temperature: float = 0.0
    max_requests: int = 100
    max_tokens: int = 200000
    provider_script: str | None = None
    audit_path: str = "helios-llm-audit.ndjson"


# config-file section/key -> CliConfig field
_FILE_KEYS = {
    ("server", "host"): "host",
    ("server", "port"): "port",
    ("server", "calibration"): "calibration",
    ("server", "latency_s"): "latency",
    ("server", "queue_timeout_s"): "queue_timeout",
    ("server", "log_path"): "log_path",
    ("server", "static_dir"): "static_dir",
    ("server", "seed"): "seed",
    ("server", "token"): "token",
    ("client", "base_url"): "base_url",
    ("client", "timeout"): "timeout",
    ("client", "retries"): "retries",
    ("client", "backoff_base"): "backoff_base",
    ("provider", "endpoint"): "provider_endpoint",
    ("provider", "model"): "provider_model",
    ("provider", "credential_env"): "credential_env",
    ("provider", "temperature"): "temperature",
    ("provider", "max_requests"): "max_requests",
    ("provider", "max_tokens"): "max_tokens",
    ("provider", "script"): "provider_script",
    ("provider", "audit_path"): "audit_path",
}


def load_config(path: str | None = None, env=None) -> CliConfig:
    """Build the merged configuration (before flag overrides).

    ``path`` wins over the HELIOS_CONFIG environment variable; either may
    be absent.  HELIOS_BASE_URL overrides the client base URL.
    """
    env = os.environ if env is None else env
    config = CliConfig()

    file_path = path or env.get(CONFIG_ENV)
    if file_path:
        try:
            with open(file_path) as f:
                doc = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config {file_path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"config {file_path} is not valid YAML: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError(f"config {file_path} must be a mapping")
        for (section, key), attr in _FILE_KEYS.items():
            value = (doc.get(section) or {}).get(key)
            if value is not None:
                setattr(config, attr, value)

    if env.get(BASE_URL_ENV):
        config.base_url = env[BASE_URL_ENV]
    return config


def apply_flags(config: CliConfig, args, mapping: dict) -> CliConfig:
    """Overlay parsed argparse values; only flags the user actually set
    (non-None) take effect."""
    for flag_attr, config_attr in mapping.items():
        value = getattr(args, flag_attr, None)
        if value is not None:
            setattr(config, config_attr, value)
    return config


def field_names() -> list:
    return [f.name for f in fields(CliConfig)]
