"""
🔐 TensorTEE Simulator - Metadata Cache
Cache LRU on-chip de linhas de metadados (VN-lines, nós da árvore, MACs, bitmap)
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Hashable, List, Optional, Tuple

import config


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    dirty_evictions: int = 0

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


class MetadataCache:
    """
    Pool LRU único de linhas de 64 bytes.
    O valor guardado é a cópia confiável (on-chip) da linha.
    """

    def __init__(self, capacity_bytes: int, line_bytes: int = config.CACHELINE_BYTES):
        self.capacity_lines = max(1, capacity_bytes // line_bytes)
        self.line_bytes = line_bytes
        self._lines: "OrderedDict[Hashable, List[Any]]" = OrderedDict()
        self.stats = CacheStats()

    def __len__(self) -> int:
        return len(self._lines)

    def __contains__(self, key: Hashable) -> bool:
        return key in self._lines

    def lookup(self, key: Hashable) -> Optional[Any]:
        """Consulta com atualização do LRU e das estatísticas"""
        slot = self._lines.get(key)
        if slot is None:
            self.stats.misses += 1
            return None
        self._lines.move_to_end(key)
        self.stats.hits += 1
        return slot[0] if slot[0] is not None else True

    def peek(self, key: Hashable) -> Optional[Any]:
        """Consulta sem tocar no LRU"""
        slot = self._lines.get(key)
        return None if slot is None else slot[0]

    def insert(self, key: Hashable, value: Any = None,
               dirty: bool = False) -> List[Tuple[Hashable, bool]]:
        """Insere (ou atualiza) uma linha. Retorna as linhas despejadas (chave, suja)"""
        slot = self._lines.get(key)
        if slot is not None:
            slot[0] = value
            slot[1] = slot[1] or dirty
            self._lines.move_to_end(key)
            return []
        self._lines[key] = [value, dirty]
        evicted = []
        while len(self._lines) > self.capacity_lines:
            old_key, (_, old_dirty) = self._lines.popitem(last=False)
            self.stats.evictions += 1
            if old_dirty:
                self.stats.dirty_evictions += 1
            evicted.append((old_key, old_dirty))
        return evicted

    def update(self, key: Hashable, value: Any = None) -> bool:
        """Atualiza uma linha presente e marca como suja"""
        slot = self._lines.get(key)
        if slot is None:
            return False
        slot[0] = value
        slot[1] = True
        self._lines.move_to_end(key)
        return True

    def invalidate(self, key: Hashable) -> bool:
        return self._lines.pop(key, None) is not None

    def clear(self):
        self._lines.clear()
