"""
🔐 TensorTEE Simulator - Trace
Registros de trace, requisições de memória e o formato de arquivo (texto, gzip opcional)
"""

import gzip
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Union

import config

TRACE_KINDS = ("R", "W", "CodeFetch", "Barrier", "Xfer")


@dataclass(frozen=True)
class TraceRecord:
    cycle_hint: int
    core_id: int
    kind: str
    va: int
    tensor_id: Optional[int] = None

    def __post_init__(self):
        if self.kind not in TRACE_KINDS:
            raise ValueError(f"tipo de registro desconhecido: {self.kind}")
        if self.va % config.CACHELINE_BYTES:
            raise ValueError(f"endereço {self.va:#x} não alinhado em cacheline")


@dataclass(frozen=True)
class MemRequest:
    """Leitura/escrita de uma cacheline; is_inst marca busca de código"""
    addr: int
    is_write: bool = False
    is_inst: bool = False
    tensor_id: Optional[int] = None


class TraceIO:
    """Leitura e escrita de traces: `cycle core kind va [tensor_id]`"""

    @staticmethod
    def _open(path: Union[str, Path], mode: str) -> IO[str]:
        if str(path).endswith(".gz"):
            return gzip.open(path, mode + "t", encoding="utf-8")
        return open(path, mode, encoding="utf-8")

    @staticmethod
    def format_record(record: TraceRecord) -> str:
        line = f"{record.cycle_hint} {record.core_id} {record.kind} {record.va:#x}"
        if record.tensor_id is not None:
            line += f" {record.tensor_id}"
        return line

    @staticmethod
    def parse_record(text: str, lineno: int = 0) -> TraceRecord:
        parts = text.split()
        if len(parts) not in (4, 5):
            raise ValueError(f"linha {lineno}: esperava 4 ou 5 campos, recebeu {len(parts)}")
        try:
            tensor_id = int(parts[4], 0) if len(parts) == 5 else None
            return TraceRecord(int(parts[0], 0), int(parts[1], 0), parts[2],
                               int(parts[3], 16), tensor_id)
        except ValueError as exc:
            raise ValueError(f"linha {lineno}: {exc}") from None

    @staticmethod
    def write(path: Union[str, Path], records: Iterable[TraceRecord]) -> int:
        count = 0
        with TraceIO._open(path, "w") as handle:
            for record in records:
                handle.write(TraceIO.format_record(record) + "\n")
                count += 1
        return count

    @staticmethod
    def read(path: Union[str, Path]) -> Iterator[TraceRecord]:
        with TraceIO._open(path, "r") as handle:
            for lineno, text in enumerate(handle, start=1):
                text = text.strip()
                if not text or text.startswith("#"):
                    continue
                yield TraceIO.parse_record(text, lineno)
