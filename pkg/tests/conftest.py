import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from coresim import golden  # noqa: E402
from coresim.workloads import KernelSpec, generate  # noqa: E402


@lru_cache(maxsize=None)
def kernel_run(kind: str, seed: int = 1, **params):
    """Golden (program, state, records) for a kernel, cached across the session."""
    program = generate(KernelSpec(kind, params, seed))
    state, records = golden.run(program)
    return program, state, records


@pytest.fixture(scope="session")
def golden_kernel():
    return kernel_run
