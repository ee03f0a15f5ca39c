"""
🔐 TensorTEE Simulator - Generators
Geradores de trace: otimizador Adam elemento a elemento, GEMM em tiles e traces mistos
"""

from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

import config
from workloads.trace import TraceRecord

LINE = config.CACHELINE_BYTES
PARAM_KINDS = ("w", "g", "m", "v")
ADAM_READS = ("w", "g", "m", "v")
ADAM_WRITES = ("w", "m", "v")


def _page_align(value: int) -> int:
    return -(-value // config.PAGE_BYTES) * config.PAGE_BYTES


# ═══════════════════════════════════════════════════════════════
# LAYOUT DO CENÁRIO
# ═══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class ParamLayout:
    """Um parâmetro do modelo: pesos, gradiente, momento e variância do mesmo tamanho"""
    index: int
    n_lines: int
    w: int
    g: int
    m: int
    v: int

    def base(self, kind: str) -> int:
        return getattr(self, kind)

    def tensor_id(self, kind: str) -> int:
        return self.index * len(PARAM_KINDS) + PARAM_KINDS.index(kind)

    @property
    def size_bytes(self) -> int:
        return self.n_lines * LINE

    @property
    def elements(self) -> int:
        return self.size_bytes // config.ELEMENT_BYTES


class ScenarioLayout:
    """Tensores alocados em sequência, com uma página de folga entre eles"""

    def __init__(self, sizes_kib: Sequence[int], base: int = config.TENSOR_BASE_VA):
        if not sizes_kib:
            raise ValueError("o cenário precisa de ao menos um parâmetro")
        self.base = base
        self.params: List[ParamLayout] = []
        cursor = base
        for index, size_kib in enumerate(sizes_kib):
            size = int(size_kib) * 1024
            if size <= 0:
                raise ValueError(f"tamanho inválido: {size_kib} KiB")
            bases = {}
            for kind in PARAM_KINDS:
                bases[kind] = cursor
                cursor = _page_align(cursor + size) + config.PAGE_BYTES
            self.params.append(ParamLayout(index, size // LINE, **bases))
        self.end = cursor
        self._starts = sorted((p.base(kind), p, kind) for p in self.params for kind in PARAM_KINDS)

    @property
    def n_lines(self) -> int:
        return (self.end - self.base) // LINE

    def __len__(self) -> int:
        return len(self.params)

    def tensors(self) -> Iterator[Tuple[ParamLayout, str]]:
        for param in self.params:
            for kind in PARAM_KINDS:
                yield param, kind

    def locate(self, va: int) -> Optional[Tuple[ParamLayout, str, int]]:
        """(parâmetro, tipo, linha) de um endereço, ou None se cair numa folga"""
        for start, param, kind in self._starts:
            if start <= va < start + param.size_bytes:
                return param, kind, (va - start) // LINE
        return None

    def rebased(self, base: int) -> "ScenarioLayout":
        return ScenarioLayout([p.size_bytes // 1024 for p in self.params], base)


@dataclass(frozen=True)
class ScenarioConfig:
    tensor_sizes_kib: Tuple[int, ...] = config.DEFAULT_TENSOR_SIZES_KIB
    threads: int = config.DEFAULT_THREADS
    iterations: int = config.DEFAULT_ITERATIONS
    batch_factor: int = config.BATCH_EMULATION_FACTOR
    interleave_quantum: int = config.INTERLEAVE_QUANTUM_LINES
    writeback_lag: int = config.WRITEBACK_LAG_LINES
    cores: int = config.CPU_CORES
    base_va: int = config.TENSOR_BASE_VA

    def __post_init__(self):
        if self.threads <= 0 or self.interleave_quantum <= 0 or self.writeback_lag < 0:
            raise ValueError("threads e quantum devem ser positivos, lag não negativo")

    @staticmethod
    def from_settings(settings) -> "ScenarioConfig":
        workload = settings.workload
        return ScenarioConfig(
            tensor_sizes_kib=tuple(workload.tensor_sizes_kib),
            threads=workload.threads,
            iterations=workload.iterations,
            batch_factor=workload.batch_factor,
            interleave_quantum=workload.interleave_quantum,
            writeback_lag=workload.writeback_lag,
            cores=settings.cpu.cores,
        )

    def layout(self) -> ScenarioLayout:
        return ScenarioLayout(self.tensor_sizes_kib, self.base_va)

    @property
    def model_params(self) -> int:
        return sum(size * 1024 // config.ELEMENT_BYTES for size in self.tensor_sizes_kib)


def split_chunks(n_lines: int, threads: int) -> List[Tuple[int, int]]:
    """Pedaços contíguos (início, tamanho); os primeiros ficam com a sobra"""
    size, extra = divmod(n_lines, threads)
    chunks, start = [], 0
    for thread in range(threads):
        length = size + (1 if thread < extra else 0)
        if length:
            chunks.append((start, length))
        start += length
    return chunks


# ═══════════════════════════════════════════════════════════════
# ADAM
# ═══════════════════════════════════════════════════════════════

class _HintClock:
    def __init__(self):
        self.per_core: Dict[int, int] = {}

    def next(self, core: int) -> int:
        value = self.per_core.get(core, 0)
        self.per_core[core] = value + 1
        return value


def adam_param_trace(param: ParamLayout, cfg: ScenarioConfig) -> List[TraceRecord]:
    """
    Um passo de Adam sobre um parâmetro.
    Cada thread lê w, g, m, v linha a linha no seu pedaço; as write-backs de w, m, v
    saem da LLC `writeback_lag` linhas depois. Threads se alternam a cada quantum e,
    no fim do tensor, as write-backs pendentes descarregam na ordem das threads.
    """
    records: List[TraceRecord] = []
    clock = _HintClock()
    chunks = split_chunks(param.n_lines, cfg.threads)
    positions = [0] * len(chunks)
    pending = [deque() for _ in chunks]

    def emit(kind: str, core: int, tensor: str, line: int):
        va = param.base(tensor) + line * LINE
        records.append(TraceRecord(clock.next(core), core, kind, va, param.tensor_id(tensor)))

    def write_back(thread: int, line: int):
        for tensor in ADAM_WRITES:
            emit("W", thread % cfg.cores, tensor, line)

    while any(pos < length for pos, (_, length) in zip(positions, chunks)):
        for thread, (start, length) in enumerate(chunks):
            core = thread % cfg.cores
            for _ in range(cfg.interleave_quantum):
                if positions[thread] >= length:
                    break
                line = start + positions[thread]
                for tensor in ADAM_READS:
                    emit("R", core, tensor, line)
                positions[thread] += 1
                pending[thread].append(line)
                if len(pending[thread]) > cfg.writeback_lag:
                    write_back(thread, pending[thread].popleft())
    for thread in range(len(chunks)):
        while pending[thread]:
            write_back(thread, pending[thread].popleft())
    return records


def gen_adam_trace(cfg: ScenarioConfig, layout: Optional[ScenarioLayout] = None) -> List[TraceRecord]:
    """Uma iteração do otimizador sobre todos os parâmetros, em ordem"""
    layout = layout or cfg.layout()
    records: List[TraceRecord] = []
    for param in layout.params:
        records.extend(adam_param_trace(param, cfg))
    return records


# ═══════════════════════════════════════════════════════════════
# GEMM EM TILES
# ═══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class GemmLayout:
    m: int
    n: int
    k: int
    a_base: int
    b_base: int
    c_base: int

    @staticmethod
    def allocate(m: int, n: int, k: int, base: int = config.TENSOR_BASE_VA) -> "GemmLayout":
        element = config.ELEMENT_BYTES
        a_base = base
        b_base = _page_align(a_base + m * k * element) + config.PAGE_BYTES
        c_base = _page_align(b_base + k * n * element) + config.PAGE_BYTES
        return GemmLayout(m, n, k, a_base, b_base, c_base)

    @property
    def end(self) -> int:
        return _page_align(self.c_base + self.m * self.n * config.ELEMENT_BYTES)

    def lines_of(self, matrix: str) -> range:
        rows, cols = {"A": (self.m, self.k), "B": (self.k, self.n), "C": (self.m, self.n)}[matrix]
        base = {"A": self.a_base, "B": self.b_base, "C": self.c_base}[matrix]
        return range(base, base + rows * cols * config.ELEMENT_BYTES, LINE)


def gen_gemm_trace(m: int, n: int, k: int, tile: int, base_va: int = config.TENSOR_BASE_VA,
                   core: int = 0, passes: int = 1) -> List[TraceRecord]:
    """
    Laço output-stationary: para cada tile de C, percorre os tiles de A e B ao longo
    de K (linha a linha, row-major) e escreve o tile de C no fim.
    """
    for dim in (m, n, k):
        if dim <= 0 or dim % tile:
            raise ValueError(f"tile {tile} não divide a dimensão {dim}")
    if (tile * config.ELEMENT_BYTES) % LINE:
        raise ValueError(f"linha do tile ({tile * config.ELEMENT_BYTES} B) não é múltiplo de {LINE} B")
    layout = GemmLayout.allocate(m, n, k, base_va)
    element = config.ELEMENT_BYTES
    row_lines = tile * element // LINE
    records: List[TraceRecord] = []
    hint = 0

    def segment(kind: str, base: int, row: int, col: int, width: int, tensor_id: int):
        nonlocal hint
        start = base + (row * width + col) * element
        for offset in range(row_lines):
            records.append(TraceRecord(hint, core, kind, start + offset * LINE, tensor_id))
            hint += 1

    for _ in range(passes):
        for i in range(m // tile):
            for j in range(n // tile):
                for kk in range(k // tile):
                    for r in range(tile):
                        segment("R", layout.a_base, i * tile + r, kk * tile, k, 0)
                    for r in range(tile):
                        segment("R", layout.b_base, kk * tile + r, j * tile, n, 1)
                for r in range(tile):
                    segment("W", layout.c_base, i * tile + r, j * tile, n, 2)
    return records


# ═══════════════════════════════════════════════════════════════
# STREAMS E TRACES MISTOS
# ═══════════════════════════════════════════════════════════════

def gen_stream_trace(base: int, n_lines: int, kind: str = "R", core: int = 0,
                     passes: int = 1, tensor_id: Optional[int] = None) -> List[TraceRecord]:
    return [TraceRecord(p * n_lines + i, core, kind, base + i * LINE, tensor_id)
            for p in range(passes) for i in range(n_lines)]


def gen_mixed_trace(seed: int, regions: Sequence[Tuple[int, int]], n_ops: int,
                    violation_rate: float = 0.05) -> List[TraceRecord]:
    """
    Trace aleatório para fuzzing: leituras em stream, atualizações completas em ordem
    e escritas que quebram o protocolo (parciais, duplicadas, fora de ordem, avulsas).
    """
    rng = np.random.default_rng(seed)
    records: List[TraceRecord] = []
    hint = 0

    def add(kind: str, va: int):
        nonlocal hint
        records.append(TraceRecord(hint, 0, kind, va))
        hint += 1

    while len(records) < n_ops:
        base, n_lines = regions[int(rng.integers(len(regions)))]
        lines = [base + i * LINE for i in range(n_lines)]
        roll = rng.random()
        if roll < violation_rate:
            pattern = int(rng.integers(4))
            if pattern == 0:
                for va in lines[:int(rng.integers(1, n_lines + 1))]:
                    add("W", va)
            elif pattern == 1:
                cut = int(rng.integers(1, n_lines + 1))
                for va in lines[:cut] + lines[:cut] + lines[cut:]:
                    add("W", va)
            elif pattern == 2:
                for index in rng.permutation(n_lines):
                    add("W", lines[int(index)])
            else:
                add("W", lines[int(rng.integers(n_lines))])
        elif roll < 0.5:
            for va in lines:
                add("R", va)
        else:
            for va in lines:
                add("W", va)
    return records[:n_ops]
