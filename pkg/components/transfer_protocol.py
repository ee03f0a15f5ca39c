"""
🔐 TensorTEE Simulator - Transfer Protocol
Atestação + troca de chaves, canal confiável de metadados e os dois protocolos
de transferência entre enclaves (relay com re-criptografia e direto)
"""

import hashlib
import logging
import struct
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import config
from components.tenanalyzer import TensorDescriptor, TensorTeeCpu
from utils.cost_report import CostReport
from utils.crypto_model import MASK56, CipherBlock, CounterBinding, CryptoModel, KeyMaterial
from utils.errors import (AttestationFailure, ChannelTamper, FaultKind, IntegrityFault,
                          SimulationError, TransferRejected)

logger = logging.getLogger("TensorTEE.Transfer")

LINE = config.CACHELINE_BYTES
METADATA_LAYOUT = struct.Struct("<IQIIQQ")
NONCE_BYTES = 8
TAG_BYTES = 8
DH_PRIME = (1 << 127) - 1
DH_GENERATOR = 3
CPU_TO_NPU = "cpu->npu"
NPU_TO_CPU = "npu->cpu"


# ═══════════════════════════════════════════════════════════════
# SESSÃO (atestação + DH abstrato)
# ═══════════════════════════════════════════════════════════════

class Phase(Enum):
    UNATTESTED = "unattested"
    ATTESTED = "attested"
    KEY_ESTABLISHED = "key-established"


@dataclass(frozen=True)
class EnclaveImage:
    """Código + dados iniciais de um enclave; o relatório é o digest dos dois"""
    name: str
    code: bytes
    data: bytes = b""

    def report(self) -> bytes:
        return hashlib.blake2b(self.code + b"|" + self.data, digest_size=32,
                               person=b"enclave-report").digest()


@dataclass
class SessionState:
    phase: Phase = Phase.UNATTESTED
    shared_key: Optional[KeyMaterial] = None
    cpu_report: bytes = b""
    npu_report: bytes = b""
    cpu_key_view: Optional[KeyMaterial] = field(default=None, repr=False)
    npu_key_view: Optional[KeyMaterial] = field(default=None, repr=False)
    nonce: int = 0

    def require_established(self):
        if self.phase is not Phase.KEY_ESTABLISHED:
            raise TransferRejected(f"transferência exige KeyEstablished (fase atual: {self.phase.value})")

    def attest(self, cpu_image: EnclaveImage, npu_image: EnclaveImage,
               expected_cpu: Optional[bytes] = None, expected_npu: Optional[bytes] = None):
        """Checagem mútua dos relatórios contra as medições esperadas"""
        cpu_report, npu_report = cpu_image.report(), npu_image.report()
        for side, report, expected in (("CPU", cpu_report, expected_cpu),
                                       ("NPU", npu_report, expected_npu)):
            if expected is not None and report != expected:
                self.phase = Phase.UNATTESTED
                logger.warning("❌ relatório de atestação da %s não confere", side)
                raise AttestationFailure(f"relatório da {side} não confere com a medição esperada")
        self.cpu_report, self.npu_report = cpu_report, npu_report
        self.phase = Phase.ATTESTED

    def exchange(self, seed: int = config.DEFAULT_SEED):
        """DH de brinquedo: cada lado deriva a chave do próprio segredo e do público do outro"""
        if self.phase is not Phase.ATTESTED:
            raise TransferRejected("troca de chaves exige atestação")

        def secret(label: str) -> int:
            digest = hashlib.blake2b(seed.to_bytes(8, "little") + label.encode(),
                                     digest_size=16, person=b"dh-secret").digest()
            return int.from_bytes(digest, "little") % (DH_PRIME - 2) + 1

        cpu_secret, npu_secret = secret("cpu"), secret("npu")
        cpu_public = pow(DH_GENERATOR, cpu_secret, DH_PRIME)
        npu_public = pow(DH_GENERATOR, npu_secret, DH_PRIME)
        self.cpu_key_view = SessionState._derive(pow(npu_public, cpu_secret, DH_PRIME),
                                                 self.cpu_report, self.npu_report)
        self.npu_key_view = SessionState._derive(pow(cpu_public, npu_secret, DH_PRIME),
                                                 self.cpu_report, self.npu_report)
        if self.cpu_key_view != self.npu_key_view:
            raise AttestationFailure("chaves de sessão divergentes")
        self.shared_key = self.cpu_key_view
        self.phase = Phase.KEY_ESTABLISHED
        logger.info("✅ sessão estabelecida entre CPU e NPU")

    @staticmethod
    def _derive(shared: int, cpu_report: bytes, npu_report: bytes) -> KeyMaterial:
        digest = hashlib.blake2b(shared.to_bytes(16, "little") + cpu_report + npu_report,
                                 digest_size=8, person=b"session-key").digest()
        return KeyMaterial.from_seed(int.from_bytes(digest, "little"), "session")

    @staticmethod
    def attest_and_exchange(cpu_image: EnclaveImage, npu_image: EnclaveImage,
                            expected_cpu: Optional[bytes] = None,
                            expected_npu: Optional[bytes] = None,
                            seed: int = config.DEFAULT_SEED) -> "SessionState":
        session = SessionState()
        session.attest(cpu_image, npu_image, expected_cpu, expected_npu)
        session.exchange(seed)
        return session


# ═══════════════════════════════════════════════════════════════
# CANAL CONFIÁVEL DE METADADOS
# ═══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class MetadataMessage:
    tensor_id: int
    base: int
    n_lines: int
    stride: int
    vn: int
    mac: int


class MetadataCodec:
    """Layout fixo little-endian, cifrado e autenticado com a chave de sessão"""

    WIRE_BYTES = NONCE_BYTES + METADATA_LAYOUT.size + TAG_BYTES

    @staticmethod
    def _tag(key: KeyMaterial, payload: bytes) -> bytes:
        return hashlib.blake2b(payload, key=key.mac_key, digest_size=TAG_BYTES,
                               person=b"meta-channel").digest()

    @staticmethod
    def _pad(key: KeyMaterial, nonce: int) -> bytes:
        return CryptoModel.keystream(key, CounterBinding.physical(0), nonce)[:METADATA_LAYOUT.size]

    @staticmethod
    def encode_metadata(session: SessionState, msg: MetadataMessage) -> bytes:
        session.require_established()
        if msg.vn > MASK56 or msg.mac > MASK56:
            raise ValueError("vn e mac usam 56 bits")
        try:
            payload = METADATA_LAYOUT.pack(msg.tensor_id, msg.base, msg.n_lines, msg.stride,
                                           msg.vn, msg.mac)
        except struct.error as exc:
            raise ValueError(f"campo fora do intervalo: {exc}") from None
        session.nonce += 1
        nonce = session.nonce.to_bytes(NONCE_BYTES, "little")
        sealed = CryptoModel._xor(payload, MetadataCodec._pad(session.shared_key, session.nonce))
        return nonce + sealed + MetadataCodec._tag(session.shared_key, nonce + sealed)

    @staticmethod
    def decode_metadata(session: SessionState, wire: bytes) -> MetadataMessage:
        session.require_established()
        if len(wire) != MetadataCodec.WIRE_BYTES:
            raise ChannelTamper(f"mensagem com {len(wire)} bytes")
        body, tag = wire[:-TAG_BYTES], wire[-TAG_BYTES:]
        if MetadataCodec._tag(session.shared_key, body) != tag:
            raise ChannelTamper()
        nonce = int.from_bytes(body[:NONCE_BYTES], "little")
        payload = CryptoModel._xor(body[NONCE_BYTES:], MetadataCodec._pad(session.shared_key, nonce))
        return MetadataMessage(*METADATA_LAYOUT.unpack(payload))


# ═══════════════════════════════════════════════════════════════
# TRANSFERÊNCIAS
# ═══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class TransferTensor:
    """Tensor com endereço nos dois lados (mesmo tensor_id para o binding lógico)"""
    tensor_id: int
    cpu_base: int
    npu_base: int
    n_lines: int

    @property
    def size_bytes(self) -> int:
        return self.n_lines * LINE

    def cpu_lines(self) -> List[int]:
        return [self.cpu_base + i * LINE for i in range(self.n_lines)]


@dataclass
class TransferReport:
    protocol: str
    direction: str = CPU_TO_NPU
    tensor_id: int = 0
    bytes_link: int = 0
    bytes_meta: int = 0
    bytes_aes: int = 0
    bytes_aes_fixup: int = 0
    cycles_total: int = 0
    cycles_overlapped: int = 0
    faults: int = 0
    start: int = 0
    end: int = 0

    def to_row(self) -> Dict[str, object]:
        return {name: getattr(self, name) for name in config.TRANSFER_CSV_COLUMNS}

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


class TransferProtocol:
    """Executa transferências entre a CPU e a NPU de uma plataforma"""

    def __init__(self, session: SessionState, cpu, npu, ledger, settings,
                 functional: bool = True, capture: bool = False):
        self.session = session
        self.cpu = cpu
        self.npu = npu
        self.ledger = ledger
        self.settings = settings
        self.functional = functional
        self.capture = capture
        self.reports: List[TransferReport] = []
        self.link_log: List[Tuple[int, bytes]] = []
        self.staging_hook = None
        self.wire_hook = None
        self.retransfer_requests: List[int] = []

    # ═══════════════════════════════════════════════════════════════
    # AUXILIARES
    # ═══════════════════════════════════════════════════════════════

    def _side(self, direction: str) -> Tuple[str, str]:
        if direction == CPU_TO_NPU:
            return "cpu", "npu"
        if direction == NPU_TO_CPU:
            return "npu", "cpu"
        raise ValueError(f"direção desconhecida: {direction}")

    @staticmethod
    def _memory_resource(side: str) -> str:
        return "cpu.dram" if side == "cpu" else "npu.gddr"

    @staticmethod
    def _base(tensor: TransferTensor, side: str) -> int:
        return tensor.cpu_base if side == "cpu" else tensor.npu_base

    def _log_link(self, tensor: TransferTensor, payload: bytes):
        if self.capture:
            self.link_log.append((tensor.tensor_id, payload))

    def _npu_record(self, tensor: TransferTensor):
        record = self.npu.records.get(tensor.tensor_id)
        if record is None:
            record = self.npu.register_tensor(tensor.tensor_id, tensor.npu_base, tensor.n_lines)
        return record

    def _finish(self, report: TransferReport) -> TransferReport:
        report.cycles_total = report.end - report.start
        self.reports.append(report)
        logger.debug("🔄 %s %s tensor %d: %d ciclos", report.protocol, report.direction,
                     report.tensor_id, report.cycles_total)
        return report

    def transfer(self, tensor: TransferTensor, direction: str, at_cycle: int = 0,
                 protocol: Optional[str] = None) -> TransferReport:
        protocol = protocol or self.settings.mode.resolved_transfer()
        if protocol == "plain":
            return self.plain_transfer(tensor, direction, at_cycle)
        if protocol == "baseline":
            return self.baseline_transfer(tensor, direction, at_cycle)
        if protocol == "direct":
            return self.direct_transfer(tensor, direction, at_cycle)
        raise ValueError(f"protocolo desconhecido: {protocol}")

    # ═══════════════════════════════════════════════════════════════
    # SEM PROTEÇÃO
    # ═══════════════════════════════════════════════════════════════

    def plain_transfer(self, tensor: TransferTensor, direction: str, at_cycle: int = 0) -> TransferReport:
        sender, receiver = self._side(direction)
        report = TransferReport("plain", direction, tensor.tensor_id, start=at_cycle, end=at_cycle)
        if tensor.n_lines == 0:
            return self._finish(report)
        size = tensor.size_bytes
        read = self.ledger.reserve(self._memory_resource(sender), size, at_cycle,
                                   self._base(tensor, sender))
        link = self.ledger.reserve("link", size, at_cycle)
        write = self.ledger.reserve(self._memory_resource(receiver), size, at_cycle,
                                    self._base(tensor, receiver))
        report.end = max(read, link, write)
        report.bytes_link = size
        if self.functional:
            if direction == CPU_TO_NPU:
                plains = [self.cpu.read_line(pa)[0] for pa in tensor.cpu_lines()]
                self.npu.store_tensor_stream(self._npu_record(tensor), plains)
            else:
                plains, _ = self.npu.load_tensor_stream(self._npu_record(tensor))
                for pa, plain in zip(tensor.cpu_lines(), plains):
                    self.cpu.write_line(pa, plain)
        return self._finish(report)

    # ═══════════════════════════════════════════════════════════════
    # BASELINE: RELAY PELA MEMÓRIA NÃO SEGURA
    # ═══════════════════════════════════════════════════════════════

    def baseline_transfer(self, tensor: TransferTensor, direction: str,
                          at_cycle: int = 0) -> TransferReport:
        """
        Quatro estágios em série: decifra no enclave de origem, re-cifra com a chave
        de sessão na área de staging, DMA pelo link, decifra e re-cifra no destino.
        """
        self.session.require_established()
        sender, receiver = self._side(direction)
        report = TransferReport("baseline", direction, tensor.tensor_id, start=at_cycle, end=at_cycle)
        if tensor.n_lines == 0:
            return self._finish(report)
        size = tensor.size_bytes
        send_mem, recv_mem = self._memory_resource(sender), self._memory_resource(receiver)
        send_aes, recv_aes = f"{sender}.xfer_aes", f"{receiver}.xfer_aes"
        send_base, recv_base = self._base(tensor, sender), self._base(tensor, receiver)

        t1 = max(self.ledger.reserve(send_mem, size, at_cycle, send_base),
                 self.ledger.reserve(send_aes, size, at_cycle))
        t2 = max(self.ledger.reserve(send_aes, size, t1),
                 self.ledger.reserve(send_mem, size, t1, send_base))
        t3 = max(self.ledger.reserve("link", size, t2),
                 self.ledger.reserve(send_mem, size, t2, send_base))
        t4 = max(self.ledger.reserve(recv_aes, 2 * size, t3),
                 self.ledger.reserve(recv_mem, 2 * size, t3, recv_base))
        report.end = t4
        report.bytes_link = size
        report.bytes_aes = 4 * size

        if self.functional:
            try:
                self._baseline_payload(tensor, direction)
            except IntegrityFault:
                report.faults += 1
                self._finish(report)
                raise
        return self._finish(report)

    def _baseline_payload(self, tensor: TransferTensor, direction: str):
        key = self.session.shared_key
        if direction == CPU_TO_NPU:
            plains = [self.cpu.read_line(pa)[0] for pa in tensor.cpu_lines()]
        else:
            plains, _ = self.npu.load_tensor_stream(self._npu_record(tensor))
        self.session.nonce += 1
        nonce = self.session.nonce
        staging = [CryptoModel.encrypt_block(plain, CounterBinding.tensor(tensor.tensor_id, i * LINE),
                                             nonce, key) for i, plain in enumerate(plains)]
        session_mac = CryptoModel.mac_xor_aggregate(CryptoModel.mac_block(b, key) for b in staging)
        if self.staging_hook is not None:
            staging = self.staging_hook(tensor, staging)
        for block in staging:
            self._log_link(tensor, block.data)
        received = CryptoModel.mac_xor_aggregate(CryptoModel.mac_block(b, key) for b in staging)
        if received != session_mac:
            logger.warning("❌ dados adulterados na área de staging (tensor %d)", tensor.tensor_id)
            raise IntegrityFault(FaultKind.STAGED_DATA, "staging adulterado", tensor_id=tensor.tensor_id)
        plains = [CryptoModel.decrypt_block(block, key) for block in staging]
        if direction == CPU_TO_NPU:
            self.npu.store_tensor_stream(self._npu_record(tensor), plains)
        else:
            for pa, plain in zip(tensor.cpu_lines(), plains):
                self.cpu.write_line(pa, plain)

    # ═══════════════════════════════════════════════════════════════
    # DIRETA: METADADOS PELO CANAL CONFIÁVEL + TEXTO CIFRADO VERBATIM
    # ═══════════════════════════════════════════════════════════════

    def direct_transfer(self, tensor: TransferTensor, direction: str,
                        at_cycle: int = 0) -> TransferReport:
        self.session.require_established()
        sender, receiver = self._side(direction)
        report = TransferReport("direct", direction, tensor.tensor_id, start=at_cycle, end=at_cycle)
        if tensor.n_lines == 0:
            return self._finish(report)
        start = at_cycle
        if direction == NPU_TO_CPU:
            start = self.npu.verification_barrier([tensor.tensor_id], at_cycle)
            report.start = start
            report.end = start

        try:
            if direction == CPU_TO_NPU:
                msg, blocks, fixup = self._cpu_sender(tensor)
            else:
                msg, blocks, fixup = self._npu_sender(tensor)
        except IntegrityFault:
            report.faults += 1
            self._finish(report)
            raise
        report.bytes_aes_fixup = fixup
        wire = MetadataCodec.encode_metadata(self.session, msg)
        if self.wire_hook is not None:
            wire = self.wire_hook(wire)

        size = tensor.size_bytes
        fixup_done = start
        if fixup:
            fixup_done = self.ledger.reserve(f"{sender}.xfer_aes", fixup, start)
        meta_done = self.ledger.reserve("link.meta", len(wire), start)
        read = self.ledger.reserve(self._memory_resource(sender), size, fixup_done,
                                   self._base(tensor, sender))
        link = self.ledger.reserve("link", size, fixup_done)
        write = self.ledger.reserve(self._memory_resource(receiver), size, fixup_done,
                                    self._base(tensor, receiver))
        payload_done = max(read, link, write)
        report.end = max(payload_done, meta_done) + self.settings.link.sync_cycles
        serial = sum(done - fixup_done for done in (read, link, write)) + (meta_done - start)
        report.cycles_overlapped = max(0, serial - (max(payload_done, meta_done) - start))
        report.bytes_link = size
        report.bytes_meta = len(wire)

        try:
            received = MetadataCodec.decode_metadata(self.session, wire)
            if direction == CPU_TO_NPU:
                self._npu_receiver(tensor, received, blocks)
            else:
                self._cpu_receiver(tensor, received, blocks)
        except IntegrityFault:
            report.faults += 1
            self._finish(report)
            raise
        return self._finish(report)

    def _require_tensortee_cpu(self):
        if not isinstance(self.cpu, TensorTeeCpu):
            raise SimulationError("transferência direta exige a CPU TensorTEE")

    def _cpu_sender(self, tensor: TransferTensor) -> Tuple[MetadataMessage, List, int]:
        """VN/MAC da Meta Table; VNs não uniformes são re-cifrados para o maior antes do envio"""
        self._require_tensortee_cpu()
        desc = TensorDescriptor.contiguous(tensor.cpu_base, tensor.n_lines)
        lines = tensor.cpu_lines()
        analyzer = self.cpu.analyzer
        # Linhas trocadas de uma atualização em curso só têm o VN certo off-chip depois disso
        analyzer.retire_overlapping(lines)
        store = self.cpu.vn_store
        vns = [store.peek_vn(pa) for pa in lines]
        top = max(vns)
        lagging = [pa for pa, vn in zip(lines, vns) if vn != top]
        fixup = 0
        if lagging:
            logger.warning("⚠️ tensor %d com VNs não uniformes: %d linhas re-cifradas",
                           tensor.tensor_id, len(lagging))
            for pa in lagging:
                plain = store.check_line(pa, store.peek_vn(pa))
                if self.functional:
                    store.memory.snapshot(pa)
                store.seal_line(pa, plain, top)
            store.write_vn_range(lagging, top)
            fixup = 2 * LINE * len(lagging)
        analyzer.install_hint(desc, top)
        mac = self.cpu.tensor_mac(desc) if self.functional else 0
        blocks = [store.memory.data[pa] for pa in lines] if self.functional else []
        for block in blocks:
            self._log_link(tensor, block.data)
        return MetadataMessage(tensor.tensor_id, tensor.npu_base, tensor.n_lines, LINE, top, mac), blocks, fixup

    def _npu_sender(self, tensor: TransferTensor) -> Tuple[MetadataMessage, List, int]:
        record = self.npu.record(tensor.tensor_id)
        blocks = []
        if self.functional:
            blocks = [self.npu.device[record.addr(i)] for i in range(record.n_lines)]
            for block in blocks:
                self._log_link(tensor, block.data)
        msg = MetadataMessage(tensor.tensor_id, tensor.cpu_base, tensor.n_lines, LINE,
                              record.vn, record.stored_mac)
        return msg, blocks, 0

    def _npu_receiver(self, tensor: TransferTensor, msg: MetadataMessage, blocks: Sequence[CipherBlock]):
        """Registro do tensor; a verificação fica para o primeiro uso (atrasada)"""
        record = self._npu_record(tensor)
        if self.functional:
            self.npu.install_ciphertext(record, blocks, msg.vn, msg.mac)
        else:
            record.vn, record.stored_mac = msg.vn, msg.mac

    def _cpu_receiver(self, tensor: TransferTensor, msg: MetadataMessage, blocks: Sequence[CipherBlock]):
        """Verificação imediata do MAC agregado antes de instalar a dica"""
        self._require_tensortee_cpu()
        store = self.cpu.vn_store
        lines = tensor.cpu_lines()
        cost = self.cpu.analyzer.retire_overlapping(lines)
        current = max(store.peek_vn(pa) for pa in lines)
        if msg.vn <= current:
            raise IntegrityFault(FaultKind.REPLAY_OR_TAMPER,
                                 f"VN {msg.vn} não avança o VN local {current}",
                                 tensor_id=tensor.tensor_id)
        key = store.key
        if self.functional:
            tags = []
            for index, (pa, block) in enumerate(zip(lines, blocks)):
                binding = store.memory.binding_for(pa)
                if binding != CounterBinding.tensor(tensor.tensor_id, index * LINE):
                    raise SimulationError(f"{pa:#x} não está registrado para o tensor {tensor.tensor_id}")
                tags.append(CryptoModel.mac_block(CipherBlock(block.data, binding, msg.vn), key))
            if CryptoModel.mac_xor_aggregate(tags) != msg.mac:
                self.retransfer_requests.append(tensor.tensor_id)
                logger.warning("❌ MAC do tensor %d divergente na CPU; retransmissão solicitada",
                               tensor.tensor_id)
                raise IntegrityFault(FaultKind.TENSOR_MAC, "MAC recebido não confere",
                                     tensor_id=tensor.tensor_id)
            for pa, block, tag in zip(lines, blocks, tags):
                store.memory.snapshot(pa)
                store.memory.store(pa, CipherBlock(block.data, store.memory.binding_for(pa), msg.vn), tag)
        cost.absorb_metadata(store.write_vn_range(lines, msg.vn))
        self.cpu.analyzer.install_hint(TensorDescriptor.contiguous(tensor.cpu_base, tensor.n_lines),
                                       msg.vn, msg.mac)
        return cost


def setup(system):
    system.add_component("transfer", TransferProtocol)
