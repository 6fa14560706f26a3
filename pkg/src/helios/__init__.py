"""helios: software twin of a remotely accessible RGB-LED photometer.

A deterministic-when-seeded simulator of the instrument, the HTTP service
that exposes it, a client SDK, classic design-of-experiments tools, a
Gaussian-process inverse-design layer and an LLM tool-calling bridge.
"""

from helios.sim import (
    AmbientModel,
    CHANNELS,
    COUNT_MAX,
    Channel,
    Reading,
    ResponseModel,
    RgbSetting,
    WIRE_NAMES,
    ambient_counts,
    daylight_ambient,
    default_model,
    expected_counts,
    load_calibration,
    measure,
    save_calibration,
)
from helios.client import (
    CLLight,
    CLRGB,
    ClientConfig,
    GreenMachine1,
    GreenMachine3,
    Instrument,
    InstrumentKind,
    instrument_catalog,
)

__version__ = "0.1.0"
