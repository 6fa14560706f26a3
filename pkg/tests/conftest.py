from datetime import datetime, timezone

import pytest

from helios.service import BackgroundServer, InstrumentService
from helios.sim import default_model

EPOCH = datetime.fromtimestamp(0, tz=timezone.utc)


@pytest.fixture()
def zero_noise_model():
    return default_model().with_noise(0.0)


@pytest.fixture()
def server(tmp_path, zero_noise_model):
    """Zero-noise instrument service on an ephemeral port."""
    service = InstrumentService(zero_noise_model, seed=7,
                                log_path=str(tmp_path / "log.ndjson"))
    with BackgroundServer(service) as bg:
        yield bg.base_url, service


@pytest.fixture()
def noisy_server(tmp_path):
    """Default-noise (70 counts) service, seeded."""
    service = InstrumentService(default_model(), seed=7,
                                log_path=str(tmp_path / "log.ndjson"))
    with BackgroundServer(service) as bg:
        yield bg.base_url, service
