"""
🔐 TensorTEE Simulator - Version Tree
Árvore 8-ária sobre as VN-lines (somente os VNs são protegidos pela árvore)
"""

import threading
from dataclasses import dataclass, field
from typing import Hashable, List, Optional, Sequence, Tuple

import config
from utils.crypto_model import CryptoModel, KeyMaterial
from utils.errors import FaultKind, IntegrityFault
from utils.metadata_cache import MetadataCache

HASH_BYTES = 8
ARITY = config.MERKLE_ARITY


@dataclass
class TreeWalk:
    """Resultado de uma verificação ou atualização de caminho"""
    fetched: List[Hashable] = field(default_factory=list)
    evicted: List[Tuple[Hashable, bool]] = field(default_factory=list)
    hashes: int = 0
    updated: int = 0


class VersionTree:
    """
    Níveis de nós off-chip acima das folhas (VN-lines).
    Cada nó tem 64 bytes = 8 hashes de 8 bytes dos filhos; a raiz fica on-chip.
    Com hashing=False só o caminho no cache é percorrido (modo de custo).
    """

    def __init__(self, n_leaves: int, key: Optional[KeyMaterial] = None, hashing: bool = True):
        if n_leaves <= 0:
            raise ValueError("árvore precisa de ao menos uma folha")
        self.n_leaves = n_leaves
        self.depth = VersionTree.depth_for(n_leaves)
        self.key = key
        self.hashing = hashing and key is not None
        self.level_sizes = [-(-n_leaves // ARITY ** (lvl + 1)) for lvl in range(self.depth)]
        self.root: Optional[bytes] = None
        self._nodes: List[List[bytearray]] = []
        self._lock = threading.RLock()

    @staticmethod
    def depth_for(n_leaves: int) -> int:
        depth, span = 1, ARITY
        while span < n_leaves:
            span *= ARITY
            depth += 1
        return depth

    @staticmethod
    def node_key(level: int, index: int) -> Tuple[str, int, int]:
        return ("node", level, index)

    def path_keys(self, leaf_index: int) -> List[Tuple[str, int, int]]:
        return [VersionTree.node_key(lvl, leaf_index // ARITY ** (lvl + 1))
                for lvl in range(self.depth)]

    def _hash(self, payload: bytes) -> bytes:
        return CryptoModel.node_hash(self.key, payload)

    def build(self, leaves: Sequence[bytes]) -> Optional[bytes]:
        """Constrói todos os níveis e devolve a raiz on-chip"""
        if not self.hashing:
            return None
        if len(leaves) != self.n_leaves:
            raise ValueError(f"esperava {self.n_leaves} folhas, recebeu {len(leaves)}")
        with self._lock:
            child_hashes = [self._hash(bytes(leaf)) for leaf in leaves]
            self._nodes = []
            for size in self.level_sizes:
                level = []
                for idx in range(size):
                    chunk = child_hashes[idx * ARITY:(idx + 1) * ARITY]
                    chunk += [bytes(HASH_BYTES)] * (ARITY - len(chunk))
                    level.append(bytearray(b"".join(chunk)))
                self._nodes.append(level)
                child_hashes = [self._hash(bytes(node)) for node in level]
            self.root = child_hashes[0]
            return self.root

    def read_node(self, level: int, index: int) -> bytes:
        """Leitura off-chip (sem confiança)"""
        return bytes(self._nodes[level][index])

    def write_node(self, level: int, index: int, payload: bytes):
        """Escrita off-chip arbitrária, usada pelo adversário"""
        self._nodes[level][index] = bytearray(payload)

    def verify_path(self, leaf_index: int, leaf_bytes: Optional[bytes],
                    cache: MetadataCache) -> TreeWalk:
        """
        Sobe da folha até o primeiro nó confiável (em cache) ou até a raiz.
        Nós buscados e aprovados entram no cache.
        """
        walk = TreeWalk(hashes=1)
        with self._lock:
            digest = self._hash(bytes(leaf_bytes)) if self.hashing else None
            child = leaf_index
            fetched_nodes = []
            reached_trusted = False
            for level in range(self.depth):
                index, slot = divmod(child, ARITY)
                key = VersionTree.node_key(level, index)
                trusted = cache.lookup(key)
                if trusted is not None:
                    if self.hashing and trusted[slot * HASH_BYTES:(slot + 1) * HASH_BYTES] != digest:
                        raise IntegrityFault(FaultKind.REPLAY_OR_TAMPER,
                                             f"hash divergente no nível {level}")
                    reached_trusted = True
                    break
                node = self.read_node(level, index) if self.hashing else None
                walk.fetched.append(key)
                fetched_nodes.append(node)
                if self.hashing:
                    if node[slot * HASH_BYTES:(slot + 1) * HASH_BYTES] != digest:
                        raise IntegrityFault(FaultKind.REPLAY_OR_TAMPER,
                                             f"hash divergente no nível {level}")
                    digest = self._hash(node)
                walk.hashes += 1
                child = index
            if not reached_trusted and self.hashing and digest != self.root:
                raise IntegrityFault(FaultKind.REPLAY_OR_TAMPER, "raiz on-chip divergente")
            for key, node in zip(walk.fetched, fetched_nodes):
                walk.evicted += cache.insert(key, node)
        return walk

    def update_path(self, leaf_index: int, leaf_bytes: Optional[bytes],
                    cache: MetadataCache) -> TreeWalk:
        """Recalcula o caminho até a raiz: exatamente depth nós atualizados"""
        walk = TreeWalk()
        with self._lock:
            digest = self._hash(bytes(leaf_bytes)) if self.hashing else None
            child = leaf_index
            for level in range(self.depth):
                index, slot = divmod(child, ARITY)
                key = VersionTree.node_key(level, index)
                node = None
                if self.hashing:
                    base = cache.peek(key) if key in cache else self.read_node(level, index)
                    node = bytearray(base)
                    node[slot * HASH_BYTES:(slot + 1) * HASH_BYTES] = digest
                    node = bytes(node)
                    self._nodes[level][index] = bytearray(node)
                    digest = self._hash(node)
                    walk.hashes += 1
                if not cache.update(key, node):
                    walk.fetched.append(key)
                    walk.evicted += cache.insert(key, node, dirty=True)
                walk.updated += 1
                child = index
            if self.hashing:
                self.root = digest
        return walk
