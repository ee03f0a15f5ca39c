"""
🔐 TensorTEE Simulator - NPU TEE
Proteção do lado da NPU: VN por tensor on-chip, MAC de tensor com verificação atrasada,
rastreio de poison, barreiras de verificação e caminho de código sem atraso
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

import config
from utils.cost_report import CostReport
from utils.crypto_model import CipherBlock, CounterBinding, CryptoModel, KeyMaterial
from utils.errors import ConfigError, FaultKind, FaultLimitExceeded, IntegrityFault, SimulationError
from utils.settings import SimSettings
from workloads.trace import MemRequest

logger = logging.getLogger("TensorTEE.NpuTee")

LINE = config.CACHELINE_BYTES
TAG_BYTES = 8


# ═══════════════════════════════════════════════════════════════
# TIPOS
# ═══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class VerifyMode:
    kind: str = "delayed"
    granularity: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "blocking", "delayed"):
            raise ConfigError(f"modo de verificação desconhecido: {self.kind}")
        if self.kind == "blocking":
            g = self.granularity
            if g < LINE or g > config.PAGE_BYTES or g & (g - 1):
                raise ConfigError(f"granularidade inválida: {g}")

    @staticmethod
    def delayed() -> "VerifyMode":
        return VerifyMode("delayed")

    @staticmethod
    def blocking(granularity: int = config.MGX_MAC_GRANULARITY) -> "VerifyMode":
        return VerifyMode("blocking", granularity)

    @staticmethod
    def none() -> "VerifyMode":
        return VerifyMode("none")

    @staticmethod
    def from_settings(settings: SimSettings) -> "VerifyMode":
        kind = settings.mode.resolved_verify()
        if kind == "blocking":
            return VerifyMode.blocking(settings.mode.mac_granularity)
        return VerifyMode(kind)

    @property
    def block_lines(self) -> int:
        return self.granularity // LINE if self.kind == "blocking" else 0

    @property
    def label(self) -> str:
        if self.kind == "blocking":
            return f"Blocking({self.granularity})"
        return "DelayedTensor" if self.kind == "delayed" else "None"


@dataclass
class TensorRecord:
    tensor_id: int
    base: int
    n_lines: int
    vn: int = 0
    stored_mac: int = 0
    block_macs: List[int] = field(default_factory=list)
    running_xor: int = 0
    own_pending: bool = False
    failed: bool = False
    code: bool = False
    waiting_on: Set[int] = field(default_factory=set)
    sources: Set[int] = field(default_factory=set)
    verify_done: Optional[int] = None
    seen_lines: int = 0

    @property
    def poison(self) -> bool:
        return self.own_pending or self.failed or bool(self.waiting_on)

    @property
    def size_bytes(self) -> int:
        return self.n_lines * LINE

    def addr(self, index: int) -> int:
        return self.base + index * LINE


@dataclass
class FaultCounter:
    threshold: int = config.FAULT_THRESHOLD
    count: int = 0

    def record(self, tensor_id: Optional[int] = None):
        self.count += 1
        if self.count > self.threshold:
            raise FaultLimitExceeded(self.count, self.threshold, tensor_id)


@dataclass
class RetransferRequest:
    tensor_id: int
    reason: str
    attempt: int


@dataclass
class StreamTiming:
    """Agenda de um stream de tiles (ciclos de CPU)"""
    start: int
    end: int
    lines: int
    stall_cycles: int = 0
    verify_cycles: int = 0
    verify_done: int = 0
    mac_bytes: int = 0
    arrive: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    release: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    begin: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def cycles(self) -> int:
        return self.end - self.start


# ═══════════════════════════════════════════════════════════════
# NPU TEE
# ═══════════════════════════════════════════════════════════════

class NpuTee:
    """
    Memória do dispositivo + tabela de tensores on-chip.
    Sem chave (modo none) os tensores ficam em claro.
    """

    def __init__(self, key: Optional[KeyMaterial], settings: SimSettings = SimSettings(),
                 mode: Optional[VerifyMode] = None, functional: bool = True, ledger=None):
        self.settings = settings
        self.npu = settings.npu
        self.mode = mode or VerifyMode.from_settings(settings)
        if self.mode.kind != "none" and functional and key is None:
            raise ValueError("verificação exige KeyMaterial")
        self.key = key
        self.functional = functional
        self.ledger = ledger
        self.device: Dict[int, object] = {}
        self.code_macs: Dict[int, int] = {}
        self.records: Dict[int, TensorRecord] = {}
        self.faults = FaultCounter(self.npu.fault_threshold)
        self.retransfer_requests: List[RetransferRequest] = []
        self.delayed_queue: List[int] = []
        self.code_fetches = 0
        self.delayed_lines = 0
        self.rows: List[Dict[str, object]] = []

    # ═══════════════════════════════════════════════════════════════
    # REGISTRO
    # ═══════════════════════════════════════════════════════════════

    def register_tensor(self, tensor_id: int, base: int, n_lines: int, vn: int = 0,
                        mac: int = 0, code: bool = False) -> TensorRecord:
        if tensor_id not in self.records and len(self.records) >= self.npu.poison_bits:
            raise ConfigError(f"tabela de poison cheia ({self.npu.poison_bits} tensores)")
        if base % LINE or n_lines < 0:
            raise ValueError("tensor deve ser alinhado em cacheline")
        record = TensorRecord(tensor_id, base, n_lines, vn=vn, stored_mac=mac, code=code)
        self.records[tensor_id] = record
        return record

    def record(self, tensor_id: int) -> TensorRecord:
        try:
            return self.records[tensor_id]
        except KeyError:
            raise ConfigError(f"tensor não registrado: {tensor_id}") from None

    def record_at(self, addr: int) -> Optional[TensorRecord]:
        for record in self.records.values():
            if record.base <= addr < record.base + record.size_bytes:
                return record
        return None

    @staticmethod
    def binding(record: TensorRecord, index: int) -> CounterBinding:
        return CounterBinding.tensor(record.tensor_id, index * LINE)

    def _block_ranges(self, record: TensorRecord) -> List[Tuple[int, int]]:
        step = self.mode.block_lines or record.n_lines or 1
        return [(start, min(start + step, record.n_lines)) for start in range(0, record.n_lines, step)]

    def mac_storage_bytes(self) -> int:
        """Bytes de MAC armazenados: 7 por tensor (atrasada) ou 7 por bloco de G bytes"""
        data = [r for r in self.records.values() if not r.code]
        if self.mode.kind == "delayed":
            return config.MAC_STORED_BYTES * len(data)
        if self.mode.kind == "blocking":
            return config.MAC_STORED_BYTES * sum(
                -(-r.size_bytes // self.mode.granularity) for r in data)
        return 0

    # ═══════════════════════════════════════════════════════════════
    # ESCRITA DE TENSORES
    # ═══════════════════════════════════════════════════════════════

    def store_tensor_stream(self, record: TensorRecord, lines: Sequence[Optional[bytes]],
                            order: Optional[Sequence[int]] = None) -> CostReport:
        """Uma escrita do tensor: vn+1 uma vez e MAC agregado dos novos MACs de linha"""
        if len(lines) != record.n_lines:
            raise ValueError(f"tensor {record.tensor_id} espera {record.n_lines} linhas")
        order = list(order) if order is not None else range(record.n_lines)
        record.vn += 1
        cost = CostReport(op="npu-store", pa=record.base, data_bytes=record.size_bytes, accesses=0)
        if self.mode.kind == "none" or not self.functional:
            if self.functional:
                for index in order:
                    self.device[record.addr(index)] = bytes(lines[index])
            record.failed = record.own_pending = False
            self._resolve(record.tensor_id)
            return cost

        macs = [0] * record.n_lines
        for index in order:
            block = CryptoModel.encrypt_block(bytes(lines[index]), NpuTee.binding(record, index),
                                              record.vn, self.key)
            self.device[record.addr(index)] = block
            macs[index] = CryptoModel.mac_block(block, self.key)
        if record.code:
            for index in range(record.n_lines):
                self.code_macs[record.addr(index)] = macs[index]
        record.stored_mac = CryptoModel.mac_xor_aggregate(macs) if macs else 0
        record.block_macs = [CryptoModel.mac_xor_aggregate(macs[a:b]) for a, b in self._block_ranges(record)]
        record.failed = record.own_pending = False
        self._resolve(record.tensor_id)
        cost.aes_bytes = record.size_bytes
        cost.mac_ops = record.n_lines
        cost.mac_bytes = TAG_BYTES * (len(record.block_macs) if self.mode.kind == "blocking" else 1)
        return cost

    def install_ciphertext(self, record: TensorRecord, blocks: Sequence[CipherBlock],
                           vn: int, mac: int):
        """Recebe linhas cifradas sem tocar nelas (transferência direta)"""
        for index, block in enumerate(blocks):
            self.device[record.addr(index)] = block
        record.vn = vn
        record.stored_mac = mac
        record.failed = False
        record.own_pending = False
        record.waiting_on = set()
        self._resolve(record.tensor_id)
        if self.mode.kind == "blocking" and self.key is not None:
            macs = [CryptoModel.mac_block(block, self.key) for block in blocks]
            record.block_macs = [CryptoModel.mac_xor_aggregate(macs[a:b])
                                 for a, b in self._block_ranges(record)]

    # ═══════════════════════════════════════════════════════════════
    # LEITURA DE TENSORES
    # ═══════════════════════════════════════════════════════════════

    def _open_line(self, record: TensorRecord, index: int) -> Tuple[bytes, int]:
        stored = self.device.get(record.addr(index))
        if stored is None:
            raise SimulationError(f"linha {index} do tensor {record.tensor_id} ausente")
        block = CipherBlock(stored.data, NpuTee.binding(record, index), record.vn)
        return CryptoModel.decrypt_block(block, self.key), CryptoModel.mac_block(block, self.key)

    def load_tensor_stream(self, record: TensorRecord,
                           consume: Optional[Callable[[int, bytes], None]] = None
                           ) -> Tuple[Optional[List[bytes]], CostReport]:
        """
        DelayedTensor: cada linha é liberada na hora e o XOR acumula; compara no fim.
        Blocking(G): nenhuma linha do bloco é liberada antes do MAC do bloco conferir.
        """
        cost = CostReport(op="npu-load", pa=record.base, data_bytes=record.size_bytes, accesses=0)
        if record.failed:
            raise IntegrityFault(FaultKind.TENSOR_MAC, "tensor descartado aguardando retransmissão",
                                 tensor_id=record.tensor_id)
        if not self.functional:
            return None, cost
        plains: List[bytes] = []
        if self.mode.kind == "none":
            for index in range(record.n_lines):
                plain = self.device.get(record.addr(index), bytes(LINE))
                plains.append(plain)
                if consume:
                    consume(index, plain)
            return plains, cost

        cost.aes_bytes = record.size_bytes
        cost.mac_ops = record.n_lines
        if self.mode.kind == "delayed":
            record.own_pending = True
            record.running_xor = 0
            self.delayed_queue.append(record.tensor_id)
            cost.mac_bytes = TAG_BYTES
            for index in range(record.n_lines):
                plain, tag = self._open_line(record, index)
                record.running_xor ^= tag
                self.delayed_lines += 1
                plains.append(plain)
                if consume:
                    consume(index, plain)
            self.delayed_queue.remove(record.tensor_id)
            if record.n_lines and record.running_xor != record.stored_mac:
                self._fail(record, "MAC do tensor divergente no fim do stream")
            self.complete_verification(record.tensor_id)
            return plains, cost

        cost.mac_bytes = TAG_BYTES * len(record.block_macs)
        for block_index, (start, stop) in enumerate(self._block_ranges(record)):
            opened = [self._open_line(record, index) for index in range(start, stop)]
            aggregate = CryptoModel.mac_xor_aggregate(tag for _, tag in opened)
            if block_index >= len(record.block_macs) or aggregate != record.block_macs[block_index]:
                self._fail(record, f"MAC do bloco {block_index} divergente")
            for offset, (plain, _) in enumerate(opened):
                plains.append(plain)
                if consume:
                    consume(start + offset, plain)
        return plains, cost

    def _fail(self, record: TensorRecord, reason: str):
        """Descarta o tensor, pede retransmissão e conta a falha"""
        record.failed = True
        record.own_pending = False
        for index in range(record.n_lines):
            self.device.pop(record.addr(index), None)
        attempt = sum(1 for req in self.retransfer_requests if req.tensor_id == record.tensor_id) + 1
        self.retransfer_requests.append(RetransferRequest(record.tensor_id, reason, attempt))
        logger.warning("❌ tensor %d falhou na verificação (%s); retransmissão #%d solicitada",
                       record.tensor_id, reason, attempt)
        self.faults.record(record.tensor_id)
        raise IntegrityFault(FaultKind.TENSOR_MAC, reason, tensor_id=record.tensor_id)

    def complete_verification(self, tensor_id: int):
        """Verificação passou: limpa o poison próprio e reavalia os dependentes"""
        record = self.record(tensor_id)
        record.own_pending = False
        self._resolve(tensor_id)

    def _resolve(self, tensor_id: int):
        cleared = [tensor_id]
        while cleared:
            current = cleared.pop()
            if self.records[current].poison:
                continue
            for record in self.records.values():
                if current in record.waiting_on:
                    record.waiting_on.discard(current)
                    if not record.poison:
                        cleared.append(record.tensor_id)

    # ═══════════════════════════════════════════════════════════════
    # POISON E BARREIRAS
    # ═══════════════════════════════════════════════════════════════

    def propagate_poison(self, inputs: Iterable[TensorRecord], output: TensorRecord):
        inputs = list(inputs)
        output.sources = {record.tensor_id for record in inputs}
        output.waiting_on = {record.tensor_id for record in inputs if record.poison}

    def _blockers(self, tensor_id: int, seen: Optional[Set[int]] = None) -> Set[int]:
        """Tensores com verificação própria pendente ou falha dos quais este depende"""
        seen = seen if seen is not None else set()
        if tensor_id in seen:
            return set()
        seen.add(tensor_id)
        record = self.record(tensor_id)
        found = {tensor_id} if (record.own_pending or record.failed) else set()
        for parent in record.waiting_on:
            found |= self._blockers(parent, seen)
        return found

    def verification_barrier(self, tensor_ids: Iterable[int], at_cycle: int = 0) -> int:
        """Ciclo em que a comunicação pode sair; falha pendente cancela a comunicação"""
        release = at_cycle
        for tensor_id in tensor_ids:
            for blocker_id in self._blockers(tensor_id):
                blocker = self.records[blocker_id]
                if blocker.failed:
                    logger.warning("❌ barreira: tensor %d depende do tensor %d adulterado",
                                   tensor_id, blocker_id)
                    raise IntegrityFault(FaultKind.TENSOR_MAC, "barreira de verificação",
                                         tensor_id=blocker_id)
                if blocker.verify_done is None:
                    raise SimulationError(f"tensor {blocker_id} pendente sem conclusão agendada")
                release = max(release, blocker.verify_done)
        return release

    # ═══════════════════════════════════════════════════════════════
    # CÓDIGO E REQUISIÇÕES
    # ═══════════════════════════════════════════════════════════════

    def fetch_code_line(self, pa: int) -> bytes:
        """Verificação imediata por linha; nunca passa pela fila atrasada"""
        record = self.record_at(pa)
        if record is None or not record.code:
            raise ValueError(f"{pa:#x} não pertence a uma região de código")
        self.code_fetches += 1
        index = (pa - record.base) // LINE
        if self.mode.kind == "none" or not self.functional:
            return self.device.get(pa, bytes(LINE)) if self.functional else bytes(LINE)
        plain, tag = self._open_line(record, index)
        if tag != self.code_macs.get(pa):
            logger.warning("❌ linha de código adulterada em %#x", pa)
            raise IntegrityFault(FaultKind.CODE_MAC, "MAC de código divergente", address=pa)
        return plain

    def dispatch(self, request: MemRequest) -> Optional[bytes]:
        """Leitura pelo sinal isInst: código verifica na hora, dados entram no stream atrasado"""
        if request.is_inst:
            return self.fetch_code_line(request.addr)
        record = self.record_at(request.addr)
        if record is None:
            raise ValueError(f"{request.addr:#x} fora de qualquer tensor registrado")
        if request.is_write:
            raise ValueError("escritas da NPU passam por store_tensor_stream")
        index = (request.addr - record.base) // LINE
        if self.mode.kind != "delayed" or not self.functional:
            return None
        if record.seen_lines == 0:
            record.own_pending = True
            record.running_xor = 0
            self.delayed_queue.append(record.tensor_id)
        plain, tag = self._open_line(record, index)
        record.running_xor ^= tag
        record.seen_lines += 1
        self.delayed_lines += 1
        if record.seen_lines == record.n_lines:
            record.seen_lines = 0
            self.delayed_queue.remove(record.tensor_id)
            if record.running_xor != record.stored_mac:
                self._fail(record, "MAC do tensor divergente no fim do stream")
            self.complete_verification(record.tensor_id)
        return plain

    # ═══════════════════════════════════════════════════════════════
    # ADVERSÁRIO
    # ═══════════════════════════════════════════════════════════════

    def inject_tamper(self, tensor_id: int, index: int, bit: int = 0):
        record = self.record(tensor_id)
        addr = record.addr(index)
        stored = self.device[addr]
        raw = bytearray(stored.data if isinstance(stored, CipherBlock) else stored)
        raw[(bit // 8) % LINE] ^= 1 << (bit % 8)
        if isinstance(stored, CipherBlock):
            self.device[addr] = CipherBlock(bytes(raw), stored.binding, stored.vn)
        else:
            self.device[addr] = bytes(raw)

    # ═══════════════════════════════════════════════════════════════
    # TEMPORIZAÇÃO (streams de tiles)
    # ═══════════════════════════════════════════════════════════════

    def stream_schedule(self, base: int, n_lines: int, start: int,
                        tensor_id: Optional[int] = None, passes: int = 1) -> StreamTiming:
        """
        Tiles de npu.tile_lines: chegada pelos canais GDDR, pad pelos motores AES,
        liberação conforme o modo e computação em ordem; o próximo tile começa no
        fim do anterior.
        """
        if self.ledger is None:
            raise SimulationError("stream_schedule exige um ResourceLedger")
        timing = StreamTiming(start, start, n_lines * passes)
        if n_lines <= 0:
            timing.verify_done = start
            return timing
        compute = self.settings.npu_to_cpu_cycles(self.npu.compute_cycles_per_line)
        mac_latency = self.settings.npu_to_cpu_cycles(self.npu.mac_latency_cycles)
        compare = self.settings.npu_to_cpu_cycles(self.npu.compare_cycles)
        tile = self.npu.tile_lines
        block = self.mode.block_lines
        arrives, releases, begins = [], [], []
        clock = start
        last_mac = start
        for _ in range(passes):
            for offset in range(0, n_lines, tile):
                count = min(tile, n_lines - offset)
                addr = base + offset * LINE
                arrive = self.ledger.reserve_lines("npu.gddr", addr, count, clock)
                release = arrive
                if self.mode.kind != "none":
                    pad = self.ledger.reserve_lines("npu.aes", addr, count, clock)
                    release = np.maximum(arrive, pad)
                    mac_done = np.maximum(self.ledger.reserve_lines("npu.mac", addr, count, clock), arrive)
                    last_mac = max(last_mac, int(mac_done.max()))
                if self.mode.kind == "blocking":
                    release = release.copy()
                    for first in range(0, count, block):
                        stop = min(first + block, count)
                        tag_at = self.ledger.reserve("npu.gddr", TAG_BYTES, clock, addr + first * LINE)
                        ready = max(int(mac_done[first:stop].max()), tag_at) + mac_latency
                        timing.verify_cycles += ready - int(arrive[first:stop].max())
                        timing.mac_bytes += TAG_BYTES
                        release[first:stop] = ready
                        last_mac = max(last_mac, ready)
                steps = np.arange(count, dtype=np.int64)
                ends = compute * (steps + 1) + np.maximum(
                    clock, np.maximum.accumulate(release - compute * steps))
                begin = ends - compute
                previous = np.concatenate(([clock], ends[:-1]))
                timing.stall_cycles += int(np.maximum(
                    0, begin - np.maximum(arrive, previous)).sum())
                arrives.append(arrive)
                releases.append(release)
                begins.append(begin)
                clock = int(ends[-1])
        if self.mode.kind == "delayed":
            timing.mac_bytes += TAG_BYTES * passes
            timing.verify_done = last_mac + compare
            timing.verify_cycles += compare
        elif self.mode.kind == "blocking":
            timing.verify_done = last_mac
        else:
            timing.verify_done = clock
        timing.end = clock
        timing.arrive = np.concatenate(arrives)
        timing.release = np.concatenate(releases)
        timing.begin = np.concatenate(begins)
        if tensor_id is not None:
            if tensor_id in self.records:
                self.records[tensor_id].verify_done = timing.verify_done
            self.rows.append({
                "tensor_id": tensor_id,
                "mode": self.mode.label,
                "lines": timing.lines,
                "stall_cycles": timing.stall_cycles,
                "verify_cycles": timing.verify_cycles,
                "faults": self.faults.count,
            })
        return timing

    def store_schedule(self, base: int, n_lines: int, at_cycle: int) -> int:
        """Escrita postada: AES e GDDR reservados; devolve quando as linhas estão na memória"""
        if self.ledger is None or n_lines <= 0:
            return at_cycle
        ready = at_cycle
        if self.mode.kind != "none":
            ready = int(self.ledger.reserve_lines("npu.aes", base, n_lines, at_cycle).max())
        done = self.ledger.reserve_lines("npu.gddr", base, n_lines, ready)
        return int(done.max())


def setup(system):
    system.add_component("npu.tee", NpuTee)
