import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

# banco em memória e saída temporária antes de importar src.main
os.environ.setdefault('NLSBNF_DATABASE_URL', 'sqlite://')
os.environ.setdefault('NLSBNF_OUTPUT_ROOT', tempfile.mkdtemp(prefix='nlsbnf-'))

import numpy as np
import pytest

from src.services.lattice import TruncatedLattice
from src.services.potential import sample_potential


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(20240611)))


@pytest.fixture
def line4():
    return TruncatedLattice(1, 4)


@pytest.fixture
def tiny():
    """Caixa {-1, 0, 1}, suficiente para identidades algébricas"""
    return TruncatedLattice(1, 1)


@pytest.fixture
def modes2():
    return TruncatedLattice(1, 2)


@pytest.fixture
def potential():
    return sample_potential(7, 4)


@pytest.fixture
def app(tmp_path):
    from src.main import create_app
    return create_app(database_url='sqlite://', output_root=str(tmp_path))


@pytest.fixture
def client(app):
    return app.test_client()
