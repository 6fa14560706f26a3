"""Client SDK: the four instrument abstractions over the HTTP API.

Each instrument is a callable class; make an instance and call it with the
channel levels to take a measurement:

    cl = CLRGB()
    print(cl(G=0.5))        # -> [3905, 34343, 1225]

Instruments differ only in which inputs they accept and which output
channels they return.  Disallowed inputs are forced to 0, matching the
device's own behavior.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from enum import Enum

import requests

DEFAULT_BASE_URL = "http://127.0.0.1:8000"
BASE_URL_ENV = "HELIOS_BASE_URL"

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class TransportError(Exception):
    """Network-level failure that survived all retries."""


class ProtocolError(Exception):
    """Non-200 response from the service."""

    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body}")
        self.status = status
        self.body = body


@dataclass(frozen=True)
class ClientConfig:
    base_url: str = field(
        default_factory=lambda: os.environ.get(BASE_URL_ENV, DEFAULT_BASE_URL))
    timeout: float = 10.0
    retries: int = 2
    backoff_base: float = 0.25

    def __post_init__(self):
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


_ALL_WIRES = ("415nm", "445nm", "480nm", "515nm", "555nm", "590nm", "630nm",
              "680nm", "clear", "nir")


@dataclass(frozen=True)
class _KindInfo:
    inputs: tuple
    channels: tuple
    description: str


class InstrumentKind(Enum):
    GreenMachine1 = _KindInfo(
        ("G",), ("515nm",),
        "Green Machine: takes 1 input, the green LED level G (0-1), and "
        "returns 1 output, the measured intensity at 515nm.")
    GreenMachine3 = _KindInfo(
        ("G",), ("480nm", "515nm", "555nm"),
        "Green Machine with three outputs: takes 1 input, the green LED "
        "level G (0-1), and returns 3 outputs, the intensities at 480nm, "
        "515nm and 555nm.")
    CLRGB = _KindInfo(
        ("R", "G", "B"), ("630nm", "515nm", "445nm"),
        "RGB machine: takes 3 inputs, the R, G and B LED levels (0-1), and "
        "returns 3 outputs, the intensities at 630nm, 515nm and 445nm.")
    CLLight = _KindInfo(
        ("R", "G", "B"), _ALL_WIRES,
        "Full-spectrum machine: takes 3 inputs, the R, G and B LED levels "
        "(0-1), and returns all 10 outputs in channel order: 415nm, 445nm, "
        "480nm, 515nm, 555nm, 590nm, 630nm, 680nm, clear, nir.")

    @property
    def inputs(self) -> tuple:
        return self.value.inputs

    @property
    def channels(self) -> tuple:
        return self.value.channels

    @property
    def description(self) -> str:
        return self.value.description


def instrument_catalog() -> list:
    """All four instruments as (name, description) pairs, stable order."""
    return [(kind.name, kind.description) for kind in InstrumentKind]


def _request_json(config: ClientConfig, path: str, params: dict) -> dict:
    url = config.base_url.rstrip("/") + path
    last_exc = None
    for attempt in range(config.retries + 1):
        try:
            resp = requests.get(url, params=params, timeout=config.timeout)
        except requests.RequestException as e:
            last_exc = e
            if attempt < config.retries:
                time.sleep(config.backoff_base * (2 ** attempt))
            continue
        if resp.status_code == 200:
            return resp.json()
        if resp.status_code in _RETRYABLE_STATUS and attempt < config.retries:
            time.sleep(config.backoff_base * (2 ** attempt))
            continue
        raise ProtocolError(resp.status_code, resp.text)
    raise TransportError(
        f"{url} unreachable after {config.retries + 1} attempts: {last_exc}")


def measure(kind: InstrumentKind, inputs: dict,
            config: ClientConfig | None = None) -> list:
    """Take one measurement and project it onto the instrument's channels.

    ``inputs`` maps channel letters to levels; anything the instrument does
    not accept is forced to 0.  Returns plain integer counts in the
    instrument's declared channel order.
    """
    config = config or ClientConfig()
    params = {name: float(inputs.get(name, 0.0)) for name in kind.inputs}
    for name in ("R", "G", "B"):
        params.setdefault(name, 0.0)
    data = _request_json(config, "/api", params)
    out = data["out"]
    return [int(out[ch]) for ch in kind.channels]


class Instrument:
    """Callable wrapper around one instrument kind."""

    kind: InstrumentKind

    def __init__(self, config: ClientConfig | None = None):
        self.config = config or ClientConfig()

    def __call__(self, *args, **kwargs) -> list:
        if len(args) > len(self.kind.inputs):
            raise TypeError(
                f"{self.kind.name} takes at most {len(self.kind.inputs)} "
                f"positional inputs ({', '.join(self.kind.inputs)})")
        inputs = dict(zip(self.kind.inputs, args))
        for name, value in kwargs.items():
            if name in self.kind.inputs:
                if name in inputs:
                    raise TypeError(f"duplicate value for input {name}")
                inputs[name] = value
            # inputs the instrument lacks are silently forced to 0
        return measure(self.kind, inputs, self.config)


class GreenMachine1(Instrument):
    kind = InstrumentKind.GreenMachine1


class GreenMachine3(Instrument):
    kind = InstrumentKind.GreenMachine3


class CLRGB(Instrument):
    kind = InstrumentKind.CLRGB


class CLLight(Instrument):
    kind = InstrumentKind.CLLight


for _cls in (GreenMachine1, GreenMachine3, CLRGB, CLLight):
    _cls.__doc__ = _cls.kind.description
del _cls

_CLASS_BY_KIND = {
    InstrumentKind.GreenMachine1: GreenMachine1,
    InstrumentKind.GreenMachine3: GreenMachine3,
    InstrumentKind.CLRGB: CLRGB,
    InstrumentKind.CLLight: CLLight,
}


def make_instrument(kind: InstrumentKind,
                    config: ClientConfig | None = None) -> Instrument:
    return _CLASS_BY_KIND[kind](config)
