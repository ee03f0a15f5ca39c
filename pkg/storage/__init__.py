"""
🔐 TensorTEE Simulator - Storage Package
"""
from .connection import ResultsStore, get_results_store, reset_results_store
from .queries import CsvQueries, MetricsQueries, TraceQueries

__all__ = [
    'ResultsStore',
    'get_results_store',
    'reset_results_store',
    'MetricsQueries',
    'CsvQueries',
    'TraceQueries',
]
