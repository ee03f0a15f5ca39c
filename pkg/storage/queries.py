"""
🔐 TensorTEE Simulator - Results Queries
Leitura e escrita dos arquivos de resultado no store
"""

import csv
import json
import logging
from typing import Any, Dict, Iterable, List, Optional, Sequence

import config
from utils.errors import ConfigError
from workloads.trace import TraceIO, TraceRecord

from .connection import get_results_store

logger = logging.getLogger("TensorTEE.Storage")

COST_CSV = "costs.csv"
NPU_CSV = "npu.csv"
TRANSFER_CSV = "transfers.csv"


class MetricsQueries:
    """metrics.json: uma entrada por execução, indexada por rótulo"""

    @staticmethod
    def load(required: bool = False) -> Dict[str, Any]:
        store = get_results_store()
        if not store.exists(config.METRICS_FILE):
            if required:
                raise ConfigError(f"arquivo ausente: {store.path(config.METRICS_FILE)}")
            return {}
        try:
            with open(store.path(config.METRICS_FILE), encoding="utf-8") as handle:
                return json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config.METRICS_FILE} inválido: {exc}") from None

    @staticmethod
    def save_run(label: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        """Mescla a execução nas já gravadas (sweeps acumulam no mesmo arquivo)"""
        metrics = MetricsQueries.load()
        metrics.setdefault("runs", {})[label] = payload
        store = get_results_store()
        store.ensure()
        with open(store.path(config.METRICS_FILE), "w", encoding="utf-8") as handle:
            json.dump(metrics, handle, indent=2, sort_keys=True, default=str)
        logger.info("✅ métricas de %s gravadas em %s", label, store.path(config.METRICS_FILE))
        return metrics

    @staticmethod
    def runs(required: bool = False) -> Dict[str, Dict[str, Any]]:
        return MetricsQueries.load(required).get("runs", {})


class CsvQueries:
    """CSVs com colunas fixas; linhas de várias execuções são acumuladas com a coluna run"""

    @staticmethod
    def append(name: str, columns: Sequence[str], rows: Iterable[Dict[str, Any]],
               run: str) -> int:
        store = get_results_store()
        store.ensure()
        path = store.path(name)
        header = not path.is_file()
        count = 0
        with open(path, "a", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=["run", *columns], extrasaction="ignore")
            if header:
                writer.writeheader()
            for row in rows:
                writer.writerow({"run": run, **row})
                count += 1
        return count

    @staticmethod
    def write(name: str, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> int:
        """Sobrescreve o arquivo (tabelas de relatório)"""
        store = get_results_store()
        store.ensure()
        count = 0
        with open(store.path(name), "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(columns), extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
                count += 1
        return count

    @staticmethod
    def read(name: str) -> List[Dict[str, str]]:
        store = get_results_store()
        if not store.exists(name):
            return []
        with open(store.path(name), newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))

    @staticmethod
    def save_outcome(run: str, cost_rows, npu_rows, transfer_rows):
        CsvQueries.append(COST_CSV, config.COST_CSV_COLUMNS, cost_rows, run)
        if npu_rows:
            CsvQueries.append(NPU_CSV, config.NPU_CSV_COLUMNS, npu_rows, run)
        if transfer_rows:
            CsvQueries.append(TRANSFER_CSV, config.TRANSFER_CSV_COLUMNS, transfer_rows, run)


class TraceQueries:
    @staticmethod
    def dump(name: str, records: Iterable[TraceRecord]) -> int:
        store = get_results_store()
        store.ensure()
        return TraceIO.write(store.path(name), records)

    @staticmethod
    def load(name: str, limit: Optional[int] = None) -> List[TraceRecord]:
        store = get_results_store()
        records = []
        for record in TraceIO.read(store.path(name)):
            if limit is not None and len(records) >= limit:
                break
            records.append(record)
        return records
