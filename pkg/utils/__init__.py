"""
🔐 TensorTEE Simulator - Utils Package
"""
from .crypto_model import CipherBlock, CounterBinding, CryptoModel, KeyMaterial
from .cost_report import CostReport
from .errors import ConfigError, IntegrityFault, TensorTeeError
from .report_tables import ReportTables
from .settings import SimSettings

__all__ = ['CipherBlock', 'CounterBinding', 'CryptoModel', 'KeyMaterial', 'CostReport',
           'ConfigError', 'IntegrityFault', 'TensorTeeError', 'ReportTables', 'SimSettings']
