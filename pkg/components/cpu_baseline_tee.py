"""
🔐 TensorTEE Simulator - CPU Baseline TEE
Proteção tipo SGX: VN e MAC por cacheline off-chip, cache de metadados e árvore 8-ária
"""

import logging
from collections import OrderedDict
from enum import Enum
from typing import Iterable, List, Optional, Tuple

import config
from components.cpu_memory import LINE, ProtectedMemory
from utils.cost_report import CostReport
from utils.crypto_model import MASK56, CipherBlock, CryptoModel, KeyMaterial
from utils.errors import FaultKind, IntegrityFault
from utils.merkle_tree import VersionTree
from utils.metadata_cache import MetadataCache
from utils.settings import CpuSettings

logger = logging.getLogger("TensorTEE.CpuBaseline")


class AttackKind(Enum):
    BITFLIP = "bitflip"
    REPLAY = "replay"
    VN_TAMPER = "vntamper"


ATTACK_REGIONS = ("data", "vn", "mac")


class CpuBaselineTee:
    """
    Controlador de memória protegido por cacheline.
    Também serve de VnStore para o TenAnalyzer (fallback por cacheline).
    """

    def __init__(self, memory: ProtectedMemory, key: Optional[KeyMaterial],
                 cpu: CpuSettings = CpuSettings(), cache: Optional[MetadataCache] = None):
        if memory.functional and key is None:
            raise ValueError("modo funcional exige KeyMaterial")
        self.memory = memory
        self.key = key
        self.cpu = cpu
        self.functional = memory.functional
        self.cache = cache or MetadataCache(cpu.metadata_cache_bytes)
        self.tree = VersionTree(memory.n_leaves, key, hashing=memory.functional)
        if self.functional:
            self.tree.build([memory.leaf_bytes(leaf) for leaf in range(memory.n_leaves)])

    @property
    def depth(self) -> int:
        return self.tree.depth

    # ═══════════════════════════════════════════════════════════════
    # VN-LINES (carga confiável, verificação pela árvore)
    # ═══════════════════════════════════════════════════════════════

    @staticmethod
    def _vn_key(leaf: int) -> Tuple[str, int]:
        return ("vn", leaf)

    @staticmethod
    def _charge_evictions(evicted: List, cost: CostReport):
        for key, dirty in evicted:
            if not dirty:
                continue
            if key[0] == "vn":
                cost.vn_bytes += LINE
            else:
                cost.tree_bytes += LINE

    def _load_vn_line(self, leaf: int, cost: CostReport) -> Tuple[Optional[bytes], bool]:
        """Linha de VNs: cópia confiável do cache ou leitura off-chip (ainda não verificada)"""
        trusted = self.cache.lookup(CpuBaselineTee._vn_key(leaf))
        if trusted is not None:
            return (trusted if self.functional else None), True
        cost.vn_bytes += LINE
        return self.memory.leaf_bytes(leaf), False

    def _verify_vn_line(self, leaf: int, raw: Optional[bytes], cost: CostReport):
        walk = self.tree.verify_path(leaf, raw, self.cache)
        cost.tree_bytes += LINE * len(walk.fetched)
        cost.hashes += walk.hashes
        evicted = walk.evicted + self.cache.insert(CpuBaselineTee._vn_key(leaf), raw)
        CpuBaselineTee._charge_evictions(evicted, cost)

    def _trusted_vn_line(self, leaf: int, cost: CostReport) -> Tuple[Optional[bytes], bool]:
        raw, cached = self._load_vn_line(leaf, cost)
        if not cached:
            self._verify_vn_line(leaf, raw, cost)
        return raw, cached

    def _slot_vn(self, raw: Optional[bytes], slot: int, pa: int) -> int:
        if self.functional:
            return ProtectedMemory.unpack_vn(raw, slot)
        return self.memory.get_vn(pa)

    def _commit_leaf(self, leaf: int, trusted: Optional[bytes],
                     updates: Iterable[Tuple[int, int, int]], cost: CostReport):
        """Aplica (pa, slot, vn) sobre a cópia confiável e atualiza o caminho da árvore"""
        vn_bytes = config.VN_BITS // 8
        line = bytearray(trusted) if self.functional else None
        for pa, slot, vn in updates:
            if line is not None:
                line[slot * vn_bytes:(slot + 1) * vn_bytes] = (vn & MASK56).to_bytes(vn_bytes, "little")
            else:
                self.memory.set_vn(pa, vn)
        new_line = bytes(line) if line is not None else None
        if new_line is not None:
            self.memory.set_leaf(leaf, new_line)
        key = CpuBaselineTee._vn_key(leaf)
        evicted = []
        if not self.cache.update(key, new_line):
            evicted += self.cache.insert(key, new_line, dirty=True)
        walk = self.tree.update_path(leaf, new_line, self.cache)
        cost.tree_bytes += LINE * len(walk.fetched)
        cost.hashes += walk.hashes
        CpuBaselineTee._charge_evictions(evicted + walk.evicted, cost)

    # ═══════════════════════════════════════════════════════════════
    # INTERFACE VnStore
    # ═══════════════════════════════════════════════════════════════

    def fetch_vn(self, pa: int) -> Tuple[int, CostReport]:
        leaf, slot = self.memory.leaf_of(pa)
        cost = CostReport(op="vn-fetch", pa=pa, accesses=0)
        raw, cached = self._trusted_vn_line(leaf, cost)
        cost.vn_on_chip = cached
        return self._slot_vn(raw, slot, pa), cost

    def write_vn(self, pa: int, vn: int) -> CostReport:
        leaf, slot = self.memory.leaf_of(pa)
        cost = CostReport(op="vn-write", pa=pa, accesses=0)
        raw, _ = self._trusted_vn_line(leaf, cost)
        self._commit_leaf(leaf, raw, [(pa, slot, vn)], cost)
        return cost

    def advance_vn(self, pa: int) -> Tuple[int, CostReport]:
        vn, cost = self.fetch_vn(pa)
        cost.add(self.write_vn(pa, vn + 1))
        cost.accesses = 0
        return vn + 1, cost

    def write_vn_range(self, lines: Iterable[int], vn: int) -> CostReport:
        """Sincroniza vários VNs de uma vez: uma carga e uma atualização de árvore por VN-line"""
        cost = CostReport(op="vn-sync", accesses=0)
        grouped: "OrderedDict[int, List[Tuple[int, int, int]]]" = OrderedDict()
        for pa in lines:
            leaf, slot = self.memory.leaf_of(pa)
            grouped.setdefault(leaf, []).append((pa, slot, vn))
        for leaf, updates in grouped.items():
            raw, _ = self._trusted_vn_line(leaf, cost)
            self._commit_leaf(leaf, raw, updates, cost)
        return cost

    def peek_vn(self, pa: int) -> int:
        """VN off-chip atual, sem custo (visão de oráculo)"""
        return self.memory.get_vn(pa)

    # ═══════════════════════════════════════════════════════════════
    # CAMINHO DE DADOS
    # ═══════════════════════════════════════════════════════════════

    def _crypto_cycles(self, cost: CostReport) -> int:
        cycles = self.cpu.mac_latency_cycles
        if not cost.vn_on_chip:
            cycles += self.cpu.aes_latency_cycles + cost.hashes * self.cpu.hash_latency_cycles
        return cycles

    def check_line(self, pa: int, vn: int) -> Optional[bytes]:
        """Confere o MAC armazenado com o VN dado e devolve o texto claro"""
        if not self.functional:
            return None
        self.memory.materialize(pa, self.key)
        stored = self.memory.data[pa]
        block = CipherBlock(stored.data, self.memory.binding_for(pa), vn)
        if CryptoModel.mac_block(block, self.key) != self.memory.macs[pa]:
            raise IntegrityFault(FaultKind.MAC_MISMATCH, "MAC da linha não confere", address=pa)
        return CryptoModel.decrypt_block(block, self.key)

    def seal_line(self, pa: int, plain: Optional[bytes], vn: int):
        """Cifra e grava a linha (e o MAC) no VN dado, guardando a tripla anterior"""
        if not self.functional:
            return
        block = CryptoModel.encrypt_block(bytes(plain), self.memory.binding_for(pa), vn, self.key)
        self.memory.store(pa, block, CryptoModel.mac_block(block, self.key))

    def read_line(self, pa: int) -> Tuple[Optional[bytes], CostReport]:
        leaf, slot = self.memory.leaf_of(pa)
        if self.functional:
            self.memory.materialize(pa, self.key)
        cost = CostReport(op="read", pa=pa, data_bytes=LINE, mac_bytes=LINE,
                          aes_bytes=LINE, mac_ops=1)
        raw, cached = self._load_vn_line(leaf, cost)
        vn = self._slot_vn(raw, slot, pa)
        plain = self.check_line(pa, vn)
        if not cached:
            self._verify_vn_line(leaf, raw, cost)
        cost.vn_on_chip = cached
        cost.cycles = self._crypto_cycles(cost)
        return plain, cost

    def write_line(self, pa: int, plain: Optional[bytes]) -> CostReport:
        if self.functional:
            self.memory.materialize(pa, self.key)
            self.memory.snapshot(pa)
        cost = CostReport(op="write", pa=pa, data_bytes=LINE, mac_bytes=LINE,
                          aes_bytes=LINE, mac_ops=1)
        vn, vn_cost = self.advance_vn(pa)
        cost.absorb_metadata(vn_cost)
        cost.vn_on_chip = vn_cost.vn_on_chip
        self.seal_line(pa, plain, vn)
        cost.cycles = self._crypto_cycles(cost)
        return cost

    # ═══════════════════════════════════════════════════════════════
    # ADVERSÁRIO
    # ═══════════════════════════════════════════════════════════════

    def inject_attack(self, kind: AttackKind, pa: int, region: str = "data", bit: int = 0):
        """
        Altera apenas estado off-chip. A VN-line em cache é descartada antes
        (write-through), modelando um ataque que chega depois da expulsão.
        """
        if not self.functional:
            raise ValueError("ataques exigem modo funcional")
        if region not in ATTACK_REGIONS:
            raise ValueError(f"região desconhecida: {region}")
        leaf, _ = self.memory.leaf_of(pa)
        self.memory.materialize(pa, self.key)
        self.cache.invalidate(CpuBaselineTee._vn_key(leaf))
        if kind is AttackKind.REPLAY:
            self.memory.replay(pa)
        elif kind is AttackKind.VN_TAMPER:
            self.memory.set_vn(pa, (self.memory.get_vn(pa) + 1 + bit) & MASK56)
        elif region == "data":
            self.memory.flip_data_bit(pa, bit)
        elif region == "vn":
            self.memory.flip_vn_bit(pa, bit)
        else:
            self.memory.flip_mac_bit(pa, bit)
        logger.debug("⚠️ ataque %s injetado em %#x (%s, bit %d)", kind.value, pa, region, bit)


def setup(system):
    system.add_component("cpu.baseline", CpuBaselineTee)
