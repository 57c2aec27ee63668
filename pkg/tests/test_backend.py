import os
import subprocess
import sys

import pytest

from efiepc import _backend


def _backend_in_subprocess(env_value):
    env = dict(os.environ, EFIEPC_PURE_PYTHON=env_value)
    out = subprocess.run([sys.executable, "-c", "import efiepc; print(efiepc.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_env_var_forces_fallback():
    assert _backend_in_subprocess("1") == "python"


@pytest.mark.skipif(_backend.compiled_backend is None, reason="compiled extension not built")
def test_compiled_selected_by_default():
    assert _backend_in_subprocess("0") == "compiled"


def test_get():
    assert _backend.get("python") is _backend.python_backend
    assert _backend.get() is _backend.kernels
    with pytest.raises(ValueError):
        _backend.get("gpu")
