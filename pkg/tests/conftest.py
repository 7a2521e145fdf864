import os
import tempfile

# must be set before ubmot.utils.logger / ubmot.database are imported
_TMP = tempfile.mkdtemp(prefix="ubmot-tests-")
os.environ.setdefault("LOG_DIR", os.path.join(_TMP, "logs"))
os.environ.setdefault("DATABASE_URL", f"sqlite:///{os.path.join(_TMP, 'ubmot.db')}")
os.environ.setdefault("UBMOT_THREADS", "1")

import pytest  # noqa: E402

from ubmot.schemas.ensemble import EnsembleParams  # noqa: E402


@pytest.fixture
def params():
    """EnsembleParams factory."""
    return EnsembleParams.of


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)


@pytest.fixture
def db_session():
    from ubmot.database import SessionLocal, init_db

    init_db()
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
