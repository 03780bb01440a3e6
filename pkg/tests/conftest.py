import pytest

import dgal._backend as backend_mod


@pytest.fixture
def force_backend(monkeypatch):
    """Temporarily pin the kernel backend ("numpy" or "numba")."""

    def _set(name):
        if name == "numba" and not backend_mod.HAVE_NUMBA:
            pytest.skip("numba not installed")
        monkeypatch.setattr(backend_mod, "BACKEND", name)

    return _set
