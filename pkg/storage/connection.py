"""
🔐 TensorTEE Simulator - Results Store
Diretório de resultados das execuções (metrics.json, CSVs e traces)
"""

import os
from pathlib import Path
from typing import Optional, Union

from dotenv import load_dotenv

load_dotenv()

DEFAULT_OUT_DIR = "results"

_results_store: Optional["ResultsStore"] = None


class ResultsStore:
    """Um diretório de saída; os arquivos são criados sob demanda"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def ensure(self) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        return self.root

    def path(self, name: str) -> Path:
        return self.root / name

    def exists(self, name: str) -> bool:
        return self.path(name).is_file()

    def __repr__(self) -> str:
        return f"ResultsStore({str(self.root)!r})"


def get_results_store(out_dir: Optional[Union[str, Path]] = None) -> ResultsStore:
    """Retorna o store de resultados (singleton; out_dir explícito troca o diretório)"""
    global _results_store

    if out_dir is not None:
        if _results_store is None or _results_store.root != Path(out_dir):
            _results_store = ResultsStore(out_dir)
    elif _results_store is None:
        _results_store = ResultsStore(os.getenv("TENSORTEE_OUT_DIR", DEFAULT_OUT_DIR))

    return _results_store


def reset_results_store():
    global _results_store
    _results_store = None
