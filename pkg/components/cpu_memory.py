"""
🔐 TensorTEE Simulator - CPU Memory
Estado off-chip da região protegida, memória não segura e réplica temporizada de traces
"""

import bisect
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Protocol, Tuple

import numpy as np

import config
from utils.cost_report import CostReport
from utils.crypto_model import MASK56, CipherBlock, CounterBinding, CryptoModel, KeyMaterial

logger = logging.getLogger("TensorTEE.CpuMemory")

LINE = config.CACHELINE_BYTES
VN_BYTES = config.VN_BITS // 8
ZERO_LINE = bytes(LINE)


class VnStore(Protocol):
    """Caminho off-chip de VNs por cacheline (com árvore e cache de metadados)"""

    def fetch_vn(self, pa: int) -> Tuple[int, CostReport]: ...

    def write_vn(self, pa: int, vn: int) -> CostReport: ...

    def advance_vn(self, pa: int) -> Tuple[int, CostReport]: ...

    def write_vn_range(self, lines: Iterable[int], vn: int) -> CostReport: ...

    def peek_vn(self, pa: int) -> int: ...


class ProtectedMemory:
    """
    Regiões off-chip: dados cifrados, VN-lines (8 VNs de 56 bits por linha) e MACs.
    Tudo aqui é visível (e alterável) pelo adversário.
    Com functional=False só os VNs são guardados, num array numpy.
    """

    def __init__(self, base: int, n_lines: int, functional: bool = True):
        if base % LINE or n_lines <= 0:
            raise ValueError("região deve ser alinhada e não vazia")
        self.base = base
        self.n_lines = n_lines
        self.n_leaves = -(-n_lines // config.VNS_PER_LINE)
        self.functional = functional
        self.data: Dict[int, CipherBlock] = {}
        self.macs: Dict[int, int] = {}
        self._history: Dict[int, Tuple[CipherBlock, int, int]] = {}
        self._tensor_bases: List[int] = []
        self._tensors: Dict[int, Tuple[int, int]] = {}
        if functional:
            self.vn_lines = [bytearray(LINE) for _ in range(self.n_leaves)]
            self.vns = None
        else:
            self.vn_lines = None
            self.vns = np.zeros(n_lines, dtype=np.uint64)

    @property
    def end(self) -> int:
        return self.base + self.n_lines * LINE

    def line_index(self, pa: int) -> int:
        if pa % LINE:
            raise ValueError(f"endereço {pa:#x} não alinhado em cacheline")
        if not self.base <= pa < self.end:
            raise ValueError(f"endereço {pa:#x} fora da região protegida")
        return (pa - self.base) // LINE

    def leaf_of(self, pa: int) -> Tuple[int, int]:
        return divmod(self.line_index(pa), config.VNS_PER_LINE)

    # ═══════════════════════════════════════════════════════════════
    # VNs
    # ═══════════════════════════════════════════════════════════════

    def get_vn(self, pa: int) -> int:
        if not self.functional:
            return int(self.vns[self.line_index(pa)])
        leaf, slot = self.leaf_of(pa)
        return ProtectedMemory.unpack_vn(self.vn_lines[leaf], slot)

    def set_vn(self, pa: int, vn: int):
        if not self.functional:
            self.vns[self.line_index(pa)] = vn & MASK56
            return
        leaf, slot = self.leaf_of(pa)
        self.vn_lines[leaf][slot * VN_BYTES:(slot + 1) * VN_BYTES] = (vn & MASK56).to_bytes(VN_BYTES, "little")

    def leaf_bytes(self, leaf: int) -> Optional[bytes]:
        return bytes(self.vn_lines[leaf]) if self.functional else None

    def set_leaf(self, leaf: int, payload: bytes):
        self.vn_lines[leaf] = bytearray(payload)

    @staticmethod
    def unpack_vn(line: bytes, slot: int) -> int:
        return int.from_bytes(bytes(line[slot * VN_BYTES:(slot + 1) * VN_BYTES]), "little")

    # ═══════════════════════════════════════════════════════════════
    # BINDINGS (tensores registrados usam binding lógico)
    # ═══════════════════════════════════════════════════════════════

    def register_tensor(self, tensor_id: int, base: int, n_lines: int):
        self.line_index(base)
        self._tensors[base] = (tensor_id, n_lines)
        bisect.insort(self._tensor_bases, base)

    def tensor_at(self, pa: int) -> Optional[Tuple[int, int]]:
        """(tensor_id, offset) do tensor registrado que contém pa"""
        pos = bisect.bisect_right(self._tensor_bases, pa) - 1
        if pos < 0:
            return None
        base = self._tensor_bases[pos]
        tensor_id, n_lines = self._tensors[base]
        if pa < base + n_lines * LINE:
            return tensor_id, pa - base
        return None

    def binding_for(self, pa: int) -> CounterBinding:
        owner = self.tensor_at(pa)
        if owner is None:
            return CounterBinding.physical(pa)
        return CounterBinding.tensor(*owner)

    # ═══════════════════════════════════════════════════════════════
    # DADOS E MACs
    # ═══════════════════════════════════════════════════════════════

    def materialize(self, pa: int, key: KeyMaterial):
        """Linha nunca escrita: zeros cifrados no VN atual (estado inicial do enclave)"""
        if not self.functional or pa in self.data:
            return
        block = CryptoModel.encrypt_block(ZERO_LINE, self.binding_for(pa), self.get_vn(pa), key)
        self.data[pa] = block
        self.macs[pa] = CryptoModel.mac_block(block, key)

    def snapshot(self, pa: int):
        """Guarda a tripla atual (dados, VN, MAC) antes de sobrescrever"""
        if self.functional and pa in self.data:
            self._history[pa] = (self.data[pa], self.get_vn(pa), self.macs[pa])

    def store(self, pa: int, block: CipherBlock, mac: int):
        self.data[pa] = block
        self.macs[pa] = mac

    # ═══════════════════════════════════════════════════════════════
    # ADVERSÁRIO (só altera estado off-chip)
    # ═══════════════════════════════════════════════════════════════

    def flip_data_bit(self, pa: int, bit: int):
        block = self.data[pa]
        raw = bytearray(block.data)
        raw[(bit // 8) % LINE] ^= 1 << (bit % 8)
        self.data[pa] = CipherBlock(bytes(raw), block.binding, block.vn)

    def flip_mac_bit(self, pa: int, bit: int):
        self.macs[pa] ^= 1 << (bit % config.MAC_BITS)

    def flip_vn_bit(self, pa: int, bit: int):
        self.set_vn(pa, self.get_vn(pa) ^ (1 << (bit % config.VN_BITS)))

    def replay(self, pa: int):
        """Restaura a tripla antiga completa"""
        if pa not in self._history:
            raise ValueError(f"nenhuma versão antiga de {pa:#x} para replay")
        block, vn, mac = self._history[pa]
        self.data[pa] = block
        self.macs[pa] = mac
        self.set_vn(pa, vn)


class PlainMemory:
    """Memória sem proteção (modo NonSecure): só tráfego de dados"""

    def __init__(self, functional: bool = True):
        self.functional = functional
        self.data: Dict[int, bytes] = {}

    def read_line(self, pa: int) -> Tuple[Optional[bytes], CostReport]:
        plain = self.data.get(pa, ZERO_LINE) if self.functional else None
        return plain, CostReport(op="read", pa=pa, data_bytes=LINE, vn_on_chip=True)

    def write_line(self, pa: int, plain: Optional[bytes]) -> CostReport:
        if self.functional:
            self.data[pa] = bytes(plain)
        return CostReport(op="write", pa=pa, data_bytes=LINE, vn_on_chip=True)


# ═══════════════════════════════════════════════════════════════
# RÉPLICA TEMPORIZADA
# ═══════════════════════════════════════════════════════════════

@dataclass
class ReplayResult:
    start_cycle: int
    end_cycle: int
    reads: int = 0
    writes: int = 0
    costs: CostReport = field(default_factory=lambda: CostReport(op="replay", accesses=0))
    core_end: List[int] = field(default_factory=list)

    @property
    def cycles(self) -> int:
        return self.end_cycle - self.start_cycle


class CpuReplayer:
    """
    Reproduz um trace por core: cada acesso reserva canais de DRAM (dados + metadados),
    motores AES/MAC; o relógio do core anda pelo custo de computação e espera a
    leitura quando ela passa da janela de tolerância.
    """

    def __init__(self, protection, ledger, settings):
        self.protection = protection
        self.ledger = ledger
        self.cpu = settings.cpu

    def replay(self, records: Iterable, start_cycle: int = 0,
               on_read: Optional[Callable] = None,
               on_write: Optional[Callable] = None) -> ReplayResult:
        cpu = self.cpu
        clocks = [start_cycle] * cpu.cores
        result = ReplayResult(start_cycle, start_cycle)
        last_ready = start_cycle
        for record in records:
            core = record.core_id % cpu.cores
            at = max(clocks[core], start_cycle + record.cycle_hint)
            if record.kind == "W":
                plain = on_write(record) if on_write else None
                cost = self.protection.write_line(record.va, plain)
                result.writes += 1
            elif record.kind == "R":
                plain, cost = self.protection.read_line(record.va)
                if on_read:
                    on_read(record, plain)
                result.reads += 1
            else:
                continue
            result.costs.add(cost)
            grant = self.ledger.reserve("cpu.dram", cost.total_bytes, at, record.va)
            ready = grant
            if cost.aes_bytes:
                pad_start = at if cost.vn_on_chip else grant
                pad = self.ledger.reserve("cpu.aes", cost.aes_bytes, pad_start, record.va)
                crypto_ready = max(grant, pad)
                if not cost.vn_on_chip:
                    crypto_ready += cost.hashes * cpu.hash_latency_cycles
                ready = self.ledger.reserve("cpu.mac", LINE * max(1, cost.mac_ops),
                                            crypto_ready, record.va)
            if record.kind == "R":
                clocks[core] = max(at + cpu.compute_cycles_per_line,
                                   ready - cpu.latency_tolerance_cycles)
                last_ready = max(last_ready, ready)
            else:
                clocks[core] = at + 1
        result.core_end = clocks
        result.end_cycle = max([last_ready] + clocks)
        logger.debug("🔄 réplica: %d leituras, %d escritas, %d ciclos",
                     result.reads, result.writes, result.cycles)
        return result
