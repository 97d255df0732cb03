import numpy as np
import pytest

from src.core.main import create_app
from src.toeplitz_testing.sampler import RngStream


@pytest.fixture(autouse=True)
def isolated_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TOEPLITZ_GOF_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.delenv("TOEPLITZ_GOF_SEED", raising=False)
    monkeypatch.delenv("TOEPLITZ_GOF_WORKERS", raising=False)


@pytest.fixture
def app():
    app = create_app()
    app.config.update(TESTING=True)
    return app


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def stream():
    return RngStream(2024, 0, (99,))
