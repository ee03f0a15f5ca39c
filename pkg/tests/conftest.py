"""
🔐 TensorTEE Simulator - Fixtures dos testes
"""

import os
import sys

import pytest

# Adiciona o diretório do projeto ao path para importar os pacotes do simulador
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import config
from storage import get_results_store, reset_results_store
from utils.crypto_model import KeyMaterial
from utils.settings import SimSettings

BASE = config.TENSOR_BASE_VA
NPU_BASE = config.NPU_TENSOR_BASE


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: cenários na escala completa (pular com -m 'not slow')")


@pytest.fixture
def key():
    return KeyMaterial.from_seed(config.DEFAULT_SEED)


@pytest.fixture
def settings():
    """Padrões de config.py, sem .env nem variáveis de ambiente"""
    return SimSettings()


@pytest.fixture
def results(tmp_path):
    reset_results_store()
    store = get_results_store(tmp_path)
    yield store
    reset_results_store()
