"""
🔐 TensorTEE Simulator - TenAnalyzer
Detecção de tensores no fluxo de endereços da CPU: Meta Table, Tensor Filter,
merge de entradas e protocolo de atualização guardado pelo bitmap
"""

import copy
import heapq
import itertools
import logging
from collections import Counter, OrderedDict
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import config
from components.cpu_baseline_tee import CpuBaselineTee
from components.cpu_memory import LINE, ProtectedMemory
from utils.cost_report import CostReport
from utils.crypto_model import KeyMaterial
from utils.metadata_cache import MetadataCache
from utils.settings import CpuSettings

logger = logging.getLogger("TensorTEE.TenAnalyzer")

BITMAP_LINE_BITS = config.CACHELINE_BYTES * 8


# ═══════════════════════════════════════════════════════════════
# TIPOS
# ═══════════════════════════════════════════════════════════════

class ReadOutcome(Enum):
    HIT_IN = "hit_in"
    HIT_BOUNDARY = "hit_boundary"
    MISS = "miss"


class WriteKind(Enum):
    HIT_EDGE_START = "hit_edge_start"
    HIT_EDGE_FINISH = "hit_edge_finish"
    HIT_IN = "hit_in"
    MISS = "miss"
    INVALIDATE = "invalidate"


class HintOutcome(Enum):
    INSTALLED = "installed"
    NOOP = "noop"
    DEFERRED = "deferred"
    IGNORED = "ignored"


@dataclass
class VnResolution:
    kind: ReadOutcome
    vn: int
    cost: CostReport
    speculative_vn: Optional[int] = None
    confirmed: bool = True

    @property
    def vn_on_chip(self) -> bool:
        return self.kind is not ReadOutcome.MISS


@dataclass
class WriteOutcome:
    kind: WriteKind
    vn: int
    cost: CostReport
    reason: str = ""


@dataclass(frozen=True)
class TensorDescriptor:
    """Estrutura de um tensor em cachelines (até 3 dimensões)"""
    base: int
    cols: int
    rows: int = 1
    planes: int = 1
    stride: int = LINE
    row_stride: int = 0
    plane_stride: int = 0

    @staticmethod
    def contiguous(base: int, n_lines: int) -> "TensorDescriptor":
        return TensorDescriptor(base, n_lines)

    @property
    def n_lines(self) -> int:
        return self.cols * self.rows * self.planes

    @property
    def geometry(self) -> Tuple[int, ...]:
        return (self.base, self.cols, self.rows, self.planes, self.stride,
                self.row_stride, self.plane_stride)

    def lines(self) -> Iterator[int]:
        for plane in range(self.planes):
            for row in range(self.rows):
                start = self.base + plane * self.plane_stride + row * self.row_stride
                for col in range(self.cols):
                    yield start + col * self.stride


@dataclass
class MetaTableEntry:
    entry_id: int
    base: int
    cols: int
    rows: int = 1
    planes: int = 1
    stride: int = LINE
    row_stride: int = 0
    plane_stride: int = 0
    vn: int = 0
    mac: int = 0
    uf: int = 0
    bs: int = 0
    valid: bool = True
    flipped: int = 0
    last_update: int = 0
    last_used: int = 0

    @property
    def n_lines(self) -> int:
        return self.cols * self.rows * self.planes

    @property
    def dims(self) -> Tuple[int, int, int]:
        return (self.cols, self.rows, self.planes)

    @property
    def is_1d(self) -> bool:
        return self.rows == 1 and self.planes == 1

    @property
    def last_addr(self) -> int:
        return (self.base + (self.cols - 1) * self.stride + (self.rows - 1) * self.row_stride
                + (self.planes - 1) * self.plane_stride)

    @property
    def boundary(self) -> int:
        return self.last_addr + self.stride

    @property
    def geometry(self) -> Tuple[int, ...]:
        return (self.base, self.cols, self.rows, self.planes, self.stride,
                self.row_stride, self.plane_stride)

    def lines(self) -> Iterator[int]:
        return TensorDescriptor(*self.geometry).lines()

    def to_dict(self) -> Dict[str, object]:
        return {
            "base": self.base,
            "dims": list(self.dims),
            "stride": self.stride,
            "row_stride": self.row_stride,
            "plane_stride": self.plane_stride,
            "vn": self.vn,
            "uf": self.uf,
            "bs": self.bs,
            "valid": self.valid,
        }


@dataclass
class FilterEntry:
    addrs: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def last(self) -> int:
        return self.addrs[-1][0]

    @property
    def stride(self) -> Optional[int]:
        if len(self.addrs) < 2:
            return None
        return self.addrs[1][0] - self.addrs[0][0]


@dataclass
class MergeOutcome:
    entry: MetaTableEntry
    merges: int = 0

    @property
    def merged(self) -> bool:
        return self.merges > 0


@dataclass
class AnalyzerStats:
    reads: int = 0
    hit_in: int = 0
    hit_boundary: int = 0
    mispredictions: int = 0
    misses: int = 0
    writes: int = 0
    edge_starts: int = 0
    edge_finishes: int = 0
    write_hit_in: int = 0
    write_misses: int = 0
    promotions: int = 0
    merges: int = 0
    evictions: int = 0
    table_full: int = 0
    filter_recycled: int = 0
    filter_rejected: int = 0
    hints_installed: int = 0
    hints_deferred: int = 0
    hints_noop: int = 0
    hints_absorbed: int = 0
    invalidations: Counter = field(default_factory=Counter)

    @property
    def hit_in_rate(self) -> float:
        return self.hit_in / self.reads if self.reads else 0.0

    @property
    def hit_boundary_rate(self) -> float:
        return self.hit_boundary / self.reads if self.reads else 0.0

    @property
    def hit_all_rate(self) -> float:
        return (self.hit_in + self.hit_boundary) / self.reads if self.reads else 0.0

    def since(self, earlier: "AnalyzerStats") -> "AnalyzerStats":
        """Diferença entre dois instantes (para taxas por iteração)"""
        delta = AnalyzerStats()
        for name, value in asdict(self).items():
            if name == "invalidations":
                delta.invalidations = self.invalidations - earlier.invalidations
            else:
                setattr(delta, name, value - getattr(earlier, name))
        return delta

    def to_dict(self) -> Dict[str, object]:
        payload = asdict(self)
        payload["invalidations"] = dict(self.invalidations)
        payload["hit_in_rate"] = self.hit_in_rate
        payload["hit_boundary_rate"] = self.hit_boundary_rate
        payload["hit_all_rate"] = self.hit_all_rate
        return payload


# ═══════════════════════════════════════════════════════════════
# TENANALYZER
# ═══════════════════════════════════════════════════════════════

class TenAnalyzer:
    """
    Dono lógico da Meta Table (no controlador de memória).
    Entradas válidas têm intervalos disjuntos; _owner mapeia cada linha coberta
    para a sua entrada e _boundary guarda o próximo endereço das entradas 1D.
    """

    def __init__(self, vn_store, cpu: CpuSettings = CpuSettings()):
        self.vn_store = vn_store
        self.cpu = cpu
        self.en_tmf = cpu.en_tmf
        self.max_row_stride = cpu.filter_max_stride
        self.bitmap_cache = MetadataCache(cpu.bitmap_cache_bytes)
        self.stats = AnalyzerStats()
        self._ids = itertools.count(1)
        self._entries: Dict[int, MetaTableEntry] = {}
        self._owner: Dict[int, MetaTableEntry] = {}
        self._boundary: Dict[int, MetaTableEntry] = {}
        self._bitmap: Dict[int, int] = {}
        self._filter: "OrderedDict[int, FilterEntry]" = OrderedDict()
        self._filter_ids = itertools.count(1)
        self._deferred: List[Tuple[TensorDescriptor, Optional[int], int]] = []
        self._saved: Dict[int, Dict[str, object]] = {}
        self.active_enclave = 0
        self._clock = 0

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> List[MetaTableEntry]:
        return sorted(self._entries.values(), key=lambda e: e.base)

    def entry_for(self, va: int) -> Optional[MetaTableEntry]:
        return self._owner.get(va)

    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    # ═══════════════════════════════════════════════════════════════
    # BITMAP (região off-chip com cache de 6 KiB)
    # ═══════════════════════════════════════════════════════════════

    def _touch_bitmap(self, va: int, cost: CostReport, write: bool):
        key = ("bm", va // (LINE * BITMAP_LINE_BITS))
        if self.bitmap_cache.lookup(key) is None:
            cost.bitmap_bytes += LINE
            evicted = self.bitmap_cache.insert(key, None, dirty=write)
            cost.bitmap_bytes += LINE * sum(1 for _, dirty in evicted if dirty)
        elif write:
            self.bitmap_cache.update(key)

    def _bit(self, va: int, cost: CostReport) -> int:
        self._touch_bitmap(va, cost, write=False)
        return self._bitmap.get(va, 0)

    def _flip(self, entry: MetaTableEntry, va: int, cost: CostReport):
        self._touch_bitmap(va, cost, write=True)
        self._bitmap[va] = self._bitmap.get(va, 0) ^ 1
        entry.flipped += 1

    # ═══════════════════════════════════════════════════════════════
    # LEITURAS
    # ═══════════════════════════════════════════════════════════════

    def on_read(self, va: int) -> VnResolution:
        if va % LINE:
            raise ValueError(f"endereço {va:#x} não alinhado em cacheline")
        self.stats.reads += 1
        if not self.en_tmf:
            vn, cost = self.vn_store.fetch_vn(va)
            self.stats.misses += 1
            return VnResolution(ReadOutcome.MISS, vn, cost)

        now = self._tick()
        cost = CostReport(op="vn-resolve", pa=va, accesses=0)
        entry = self._owner.get(va)
        if entry is not None:
            entry.last_used = now
            vn = entry.vn
            if entry.uf and self._bit(va, cost) != entry.bs:
                vn += 1
            self.stats.hit_in += 1
            return VnResolution(ReadOutcome.HIT_IN, vn, cost)

        entry = self._boundary.get(va)
        if entry is not None and entry.valid:
            fetched, fetch_cost = self.vn_store.fetch_vn(va)
            cost.absorb_metadata(fetch_cost)
            entry.last_used = now
            if fetched == entry.vn:
                self._extend(entry, va, cost)
                self.stats.hit_boundary += 1
                return VnResolution(ReadOutcome.HIT_BOUNDARY, fetched, cost,
                                    speculative_vn=entry.vn)
            self.stats.mispredictions += 1
            logger.debug("⚠️ predição de fronteira errada em %#x (%d != %d)", va, entry.vn, fetched)
            return VnResolution(ReadOutcome.HIT_BOUNDARY, fetched, cost,
                                speculative_vn=entry.vn, confirmed=False)

        vn, fetch_cost = self.vn_store.fetch_vn(va)
        cost.absorb_metadata(fetch_cost)
        self.stats.misses += 1
        self.filter_collect(va, vn)
        return VnResolution(ReadOutcome.MISS, vn, cost)

    def _extend(self, entry: MetaTableEntry, va: int, cost: CostReport):
        self._boundary.pop(va, None)
        entry.cols += 1
        self._owner[va] = entry
        self._bitmap[va] = entry.bs
        self._touch_bitmap(va, cost, write=True)
        self._boundary[entry.boundary] = entry
        entry.last_update = self._clock

    # ═══════════════════════════════════════════════════════════════
    # TENSOR FILTER
    # ═══════════════════════════════════════════════════════════════

    def filter_collect(self, va: int, vn: int) -> Optional[MetaTableEntry]:
        """Associa o miss à entrada do filtro mais próxima ou aloca uma (LRU)"""
        best_id, best_dist = None, None
        for fid, candidate in self._filter.items():
            dist = va - candidate.last
            if 0 < dist <= self.cpu.filter_max_stride and (best_dist is None or dist < best_dist):
                best_id, best_dist = fid, dist
        if best_id is None:
            if len(self._filter) >= self.cpu.filter_entries:
                self._filter.popitem(last=False)
            self._filter[next(self._filter_ids)] = FilterEntry([(va, vn)])
            return None

        candidate = self._filter[best_id]
        self._filter.move_to_end(best_id)
        if candidate.stride is not None and best_dist != candidate.stride:
            candidate.addrs = [(va, vn)]
            self.stats.filter_recycled += 1
            return None
        candidate.addrs.append((va, vn))
        if len(candidate.addrs) < self.cpu.filter_collect_limit:
            return None

        if len({seen_vn for _, seen_vn in candidate.addrs}) != 1:
            candidate.addrs = [(va, vn)]
            self.stats.filter_rejected += 1
            return None
        del self._filter[best_id]
        return self._promote(candidate)

    def _drop_from_filter(self, va: int):
        stale = [fid for fid, candidate in self._filter.items()
                 if any(addr == va for addr, _ in candidate.addrs)]
        for fid in stale:
            del self._filter[fid]

    def _promote(self, candidate: FilterEntry) -> Optional[MetaTableEntry]:
        addrs = [addr for addr, _ in candidate.addrs]
        if any(addr in self._owner for addr in addrs):
            return None
        entry = MetaTableEntry(next(self._ids), addrs[0], len(addrs),
                               stride=candidate.stride, vn=candidate.addrs[0][1])
        if not self._insert(entry):
            return None
        self.stats.promotions += 1
        logger.debug("✅ tensor detectado em %#x (%d linhas, stride %d)", entry.base,
                     entry.n_lines, entry.stride)
        return self.try_merge(entry).entry

    # ═══════════════════════════════════════════════════════════════
    # META TABLE
    # ═══════════════════════════════════════════════════════════════

    def _insert(self, entry: MetaTableEntry) -> bool:
        if len(self._entries) >= self.cpu.meta_table_entries:
            victims = [e for e in self._entries.values() if not e.uf]
            if not victims:
                self.stats.table_full += 1
                return False
            self._remove(min(victims, key=lambda e: e.last_used))
            self.stats.evictions += 1
        entry.last_update = entry.last_used = self._tick()
        self._entries[entry.entry_id] = entry
        for line in entry.lines():
            self._owner[line] = entry
            self._bitmap[line] = entry.bs
        if entry.is_1d:
            self._boundary[entry.boundary] = entry
        return True

    def _remove(self, entry: MetaTableEntry):
        entry.valid = False
        for line in entry.lines():
            if self._owner.get(line) is entry:
                del self._owner[line]
        if self._boundary.get(entry.boundary) is entry:
            del self._boundary[entry.boundary]
        self._entries.pop(entry.entry_id, None)

    # ═══════════════════════════════════════════════════════════════
    # MERGE
    # ═══════════════════════════════════════════════════════════════

    def _merge_geometry(self, a: MetaTableEntry, b: MetaTableEntry) -> Optional[Tuple[int, ...]]:
        """Geometria resultante de a (primeiro) seguido de b, ou None"""
        stride = a.stride
        width = a.cols * stride

        if a.planes == b.planes == 1 and a.rows == b.rows and b.base == a.base + width:
            if a.rows == 1:
                return (a.base, a.cols + b.cols, 1, 1, stride, 0, 0)
            if a.row_stride != b.row_stride:
                return None
            cols = a.cols + b.cols
            if cols * stride > a.row_stride:
                return None
            if cols * stride == a.row_stride:
                return (a.base, cols * a.rows, 1, 1, stride, 0, 0)
            return (a.base, cols, a.rows, 1, stride, a.row_stride, 0)

        if a.planes == b.planes == 1 and a.cols == b.cols:
            if a.rows == 1 and b.rows == 1:
                row_stride = b.base - a.base
                if not width < row_stride <= self.max_row_stride:
                    return None
            elif a.rows > 1 and b.rows > 1:
                if a.row_stride != b.row_stride:
                    return None
                row_stride = a.row_stride
            else:
                row_stride = a.row_stride if a.rows > 1 else b.row_stride
            if row_stride <= width or b.base != a.base + a.rows * row_stride:
                return None
            return (a.base, a.cols, a.rows + b.rows, 1, stride, row_stride, 0)

        if a.cols == b.cols and a.rows == b.rows > 1 and a.row_stride == b.row_stride:
            span = a.rows * a.row_stride
            if a.planes == 1 and b.planes == 1:
                plane_stride = b.base - a.base
                if not span < plane_stride <= self.max_row_stride:
                    return None
            elif a.planes > 1 and b.planes > 1:
                if a.plane_stride != b.plane_stride:
                    return None
                plane_stride = a.plane_stride
            else:
                plane_stride = a.plane_stride if a.planes > 1 else b.plane_stride
            if plane_stride <= span or b.base != a.base + a.planes * plane_stride:
                return None
            return (a.base, a.cols, a.rows, a.planes + b.planes, stride,
                    a.row_stride, plane_stride)
        return None

    def _mergeable(self, a: MetaTableEntry, b: MetaTableEntry) -> bool:
        return (a is not b and a.valid and b.valid and not a.uf and not b.uf
                and a.vn == b.vn and a.stride == b.stride)

    def _fuse(self, a: MetaTableEntry, b: MetaTableEntry, geometry: Tuple[int, ...]) -> MetaTableEntry:
        keep, drop = (a, b) if a.n_lines >= b.n_lines else (b, a)
        dropped_lines = list(drop.lines())
        self._remove(drop)
        if self._boundary.get(keep.boundary) is keep:
            del self._boundary[keep.boundary]
        for line in dropped_lines:
            self._owner[line] = keep
            self._bitmap[line] = keep.bs
        (keep.base, keep.cols, keep.rows, keep.planes, keep.stride,
         keep.row_stride, keep.plane_stride) = geometry
        keep.mac ^= drop.mac
        keep.last_update = keep.last_used = self._tick()
        if keep.is_1d:
            self._boundary[keep.boundary] = keep
        self.stats.merges += 1
        return keep

    def try_merge(self, entry: MetaTableEntry) -> MergeOutcome:
        """Examina as K entradas atualizadas mais recentemente, em cascata"""
        outcome = MergeOutcome(entry)
        current = entry
        while current.valid and self.en_tmf:
            window = heapq.nlargest(self.cpu.merge_window,
                                    (e for e in self._entries.values() if e is not current),
                                    key=lambda e: e.last_update)
            for candidate in window:
                if not self._mergeable(current, candidate):
                    continue
                first, second = sorted((current, candidate), key=lambda e: e.base)
                geometry = self._merge_geometry(first, second)
                if geometry is not None:
                    current = self._fuse(first, second, geometry)
                    outcome.merges += 1
                    break
            else:
                break
        outcome.entry = current
        return outcome

    # ═══════════════════════════════════════════════════════════════
    # ESCRITAS
    # ═══════════════════════════════════════════════════════════════

    def on_write(self, va: int) -> WriteOutcome:
        if va % LINE:
            raise ValueError(f"endereço {va:#x} não alinhado em cacheline")
        self.stats.writes += 1
        if self.en_tmf:
            # Candidatos do filtro guardam o VN visto no miss; qualquer escrita o torna velho
            self._drop_from_filter(va)
        entry = self._owner.get(va) if self.en_tmf else None
        if entry is None:
            if self.en_tmf:
                self._tick()
            vn, cost = self.vn_store.advance_vn(va)
            self.stats.write_misses += 1
            return WriteOutcome(WriteKind.MISS, vn, cost)

        entry.last_used = self._tick()
        cost = CostReport(op="vn-update", pa=va, accesses=0)
        if va == entry.base and not entry.uf:
            if entry.flipped:
                return self._invalidate(entry, va, "pre-updated", cost, apply_write=True)
            entry.uf = 1
            self._flip(entry, va, cost)
            self.stats.edge_starts += 1
            if entry.n_lines == 1:
                return self._finish(entry, cost)
            return WriteOutcome(WriteKind.HIT_EDGE_START, entry.vn + 1, cost)

        if not entry.uf:
            return self._invalidate(entry, va, "not-started", cost, apply_write=True)
        if self._bit(va, cost) != entry.bs:
            return self._invalidate(entry, va, "double-update", cost, apply_write=True)
        self._flip(entry, va, cost)
        if va == entry.last_addr:
            if entry.flipped == entry.n_lines:
                return self._finish(entry, cost)
            return self._invalidate(entry, va, "incomplete", cost, apply_write=False)
        self.stats.write_hit_in += 1
        return WriteOutcome(WriteKind.HIT_IN, entry.vn + 1, cost)

    def _finish(self, entry: MetaTableEntry, cost: CostReport) -> WriteOutcome:
        entry.vn += 1
        entry.bs ^= 1
        entry.uf = 0
        entry.flipped = 0
        entry.last_update = self._clock
        cost.absorb_metadata(self.vn_store.write_vn_range(entry.lines(), entry.vn))
        self.stats.edge_finishes += 1
        new_vn = entry.vn
        self._apply_deferred(cost)
        self.try_merge(entry)
        return WriteOutcome(WriteKind.HIT_EDGE_FINISH, new_vn, cost)

    def _invalidate(self, entry: MetaTableEntry, va: int, reason: str, cost: CostReport,
                    apply_write: bool) -> WriteOutcome:
        """Sincroniza as linhas já atualizadas e volta à proteção por cacheline"""
        flipped = [line for line in entry.lines() if self._bitmap.get(line, 0) != entry.bs]
        if flipped:
            cost.absorb_metadata(self.vn_store.write_vn_range(flipped, entry.vn + 1))
        self._remove(entry)
        self.stats.invalidations[reason] += 1
        logger.warning("⚠️ entrada %#x invalidada (%s) na escrita de %#x", entry.base, reason, va)
        if apply_write:
            vn, write_cost = self.vn_store.advance_vn(va)
            cost.absorb_metadata(write_cost)
        else:
            vn = entry.vn + 1
        self._apply_deferred(cost)
        return WriteOutcome(WriteKind.INVALIDATE, vn, cost, reason)

    def retire_overlapping(self, lines: Iterable[int], reason: str = "transfer") -> CostReport:
        """
        Entradas em atualização que cobrem linhas cujos VNs vão mudar por fora
        (transferências) são invalidadas antes, com as linhas já trocadas sincronizadas.
        """
        cost = CostReport(op="vn-sync", accesses=0)
        stale: Dict[int, MetaTableEntry] = {}
        for line in lines:
            self._drop_from_filter(line)
            owner = self._owner.get(line)
            if owner is not None and owner.uf:
                stale[owner.entry_id] = owner
        for entry in stale.values():
            self._invalidate(entry, entry.base, reason, cost, apply_write=False)
        return cost

    # ═══════════════════════════════════════════════════════════════
    # DICAS DE ESTRUTURA (transferências da NPU)
    # ═══════════════════════════════════════════════════════════════

    def install_hint(self, desc: TensorDescriptor, vn: Optional[int] = None,
                     mac: int = 0) -> HintOutcome:
        if not self.en_tmf:
            return HintOutcome.IGNORED
        lines = list(desc.lines())
        overlapping = {}
        for line in lines:
            owner = self._owner.get(line)
            if owner is not None:
                overlapping[owner.entry_id] = owner
        if any(entry.uf for entry in overlapping.values()):
            self._deferred.append((desc, vn, mac))
            self.stats.hints_deferred += 1
            return HintOutcome.DEFERRED

        cost = CostReport(op="hint", accesses=0)
        if vn is None:
            vn, fetch_cost = self.vn_store.fetch_vn(desc.base)
            cost.absorb_metadata(fetch_cost)
        if len(overlapping) == 1:
            (only,) = overlapping.values()
            if only.geometry == desc.geometry and only.vn == vn:
                only.last_used = self._tick()
                self.stats.hints_noop += 1
                return HintOutcome.NOOP

        covered = set(lines)
        for entry in overlapping.values():
            if all(line in covered for line in entry.lines()):
                self.stats.hints_absorbed += 1
            self._remove(entry)
        entry = MetaTableEntry(next(self._ids), *desc.geometry, vn=vn, mac=mac)
        if not self._insert(entry):
            return HintOutcome.IGNORED
        self.stats.hints_installed += 1
        logger.debug("✅ dica instalada em %#x (%d linhas, vn %d)", desc.base, desc.n_lines, vn)
        self.try_merge(entry)
        return HintOutcome.INSTALLED

    def _apply_deferred(self, cost: CostReport):
        pending, self._deferred = self._deferred, []
        for desc, vn, mac in pending:
            self.install_hint(desc, vn, mac)

    # ═══════════════════════════════════════════════════════════════
    # TROCA DE CONTEXTO
    # ═══════════════════════════════════════════════════════════════

    def context_switch(self, op: str, enclave_id: int):
        """save guarda a tabela do enclave e esvazia; restore recarrega (ou tabela vazia)"""
        if op == "save":
            self._saved[enclave_id] = copy.deepcopy({
                "entries": list(self._entries.values()),
                "filter": self._filter,
                "deferred": self._deferred,
                "stats": self.stats,
                "clock": self._clock,
            })
            self._entries, self._owner, self._boundary = {}, {}, {}
            self._filter, self._deferred = OrderedDict(), []
            self.stats = AnalyzerStats()
            self.bitmap_cache.clear()
            return
        if op != "restore":
            raise ValueError(f"operação de contexto desconhecida: {op}")
        state = self._saved.pop(enclave_id, None)
        self._entries, self._owner, self._boundary = {}, {}, {}
        self._filter, self._deferred = OrderedDict(), []
        self.stats = AnalyzerStats()
        self.active_enclave = enclave_id
        if state is None:
            return
        self._filter = state["filter"]
        self._deferred = state["deferred"]
        self.stats = state["stats"]
        self._clock = max(self._clock, state["clock"])
        for entry in state["entries"]:
            self._entries[entry.entry_id] = entry
            for line in entry.lines():
                self._owner[line] = entry
            if entry.is_1d:
                self._boundary[entry.boundary] = entry

    # ═══════════════════════════════════════════════════════════════
    # DEPURAÇÃO
    # ═══════════════════════════════════════════════════════════════

    def dump_table(self) -> List[Dict[str, object]]:
        return [entry.to_dict() for entry in self.entries]

    def check_invariants(self) -> List[str]:
        """Disjunção de intervalos, consistência de VN off-chip e contadores do bitmap"""
        problems = []
        covered = 0
        for entry in self._entries.values():
            if not entry.valid:
                problems.append(f"entrada inválida na tabela: {entry.base:#x}")
            flipped = 0
            for line in entry.lines():
                covered += 1
                if self._owner.get(line) is not entry:
                    problems.append(f"linha {line:#x} não pertence à entrada {entry.base:#x}")
                if self.vn_store.peek_vn(line) != entry.vn:
                    problems.append(f"VN off-chip de {line:#x} diverge da entrada {entry.base:#x}")
                if self._bitmap.get(line, 0) != entry.bs:
                    flipped += 1
            if flipped != entry.flipped:
                problems.append(f"contador de bits de {entry.base:#x} diverge ({flipped} != {entry.flipped})")
            if not entry.uf and flipped:
                problems.append(f"entrada {entry.base:#x} ociosa com bits trocados")
        if covered != len(self._owner):
            problems.append(f"intervalos sobrepostos ({covered} != {len(self._owner)})")
        return problems


# ═══════════════════════════════════════════════════════════════
# CPU TENSORTEE
# ═══════════════════════════════════════════════════════════════

class TensorTeeCpu:
    """
    Controlador da CPU no modo TensorTEE: VNs vindos do TenAnalyzer, MACs por
    linha empacotados 8 por linha atrás de um buffer de MACs.
    """

    def __init__(self, memory: ProtectedMemory, key: Optional[KeyMaterial],
                 cpu: CpuSettings = CpuSettings(), vn_store: Optional[CpuBaselineTee] = None):
        self.memory = memory
        self.cpu = cpu
        self.vn_store = vn_store or CpuBaselineTee(memory, key, cpu)
        self.analyzer = TenAnalyzer(self.vn_store, cpu)
        self.mac_buffer = MetadataCache(cpu.mac_buffer_lines * LINE)
        self._enclave_keys: Dict[int, Optional[KeyMaterial]] = {0: key}

    @property
    def functional(self) -> bool:
        return self.memory.functional

    @property
    def key(self) -> Optional[KeyMaterial]:
        return self.vn_store.key

    def _touch_mac_line(self, pa: int, cost: CostReport, write: bool):
        key = ("mac", self.memory.line_index(pa) // config.MACS_PER_LINE)
        if self.mac_buffer.lookup(key) is None:
            cost.mac_bytes += LINE
            evicted = self.mac_buffer.insert(key, None, dirty=write)
            cost.mac_bytes += LINE * sum(1 for _, dirty in evicted if dirty)
        elif write:
            self.mac_buffer.update(key)

    def read_line(self, pa: int) -> Tuple[Optional[bytes], CostReport]:
        self.memory.line_index(pa)
        resolution = self.analyzer.on_read(pa)
        cost = CostReport(op="read", pa=pa, data_bytes=LINE, aes_bytes=LINE, mac_ops=1)
        cost.absorb_metadata(resolution.cost)
        self._touch_mac_line(pa, cost, write=False)
        cost.vn_on_chip = resolution.vn_on_chip and resolution.confirmed
        if not resolution.confirmed:
            cost.aes_bytes += LINE
        plain = self.vn_store.check_line(pa, resolution.vn)
        cost.cycles = self.cpu.mac_latency_cycles
        if not cost.vn_on_chip:
            cost.cycles += self.cpu.aes_latency_cycles + cost.hashes * self.cpu.hash_latency_cycles
        return plain, cost

    def write_line(self, pa: int, plain: Optional[bytes]) -> CostReport:
        self.memory.line_index(pa)
        if self.functional:
            self.memory.materialize(pa, self.key)
            self.memory.snapshot(pa)
        outcome = self.analyzer.on_write(pa)
        cost = CostReport(op="write", pa=pa, data_bytes=LINE, aes_bytes=LINE, mac_ops=1,
                          vn_on_chip=outcome.kind is not WriteKind.MISS)
        cost.absorb_metadata(outcome.cost)
        self._touch_mac_line(pa, cost, write=True)
        self.vn_store.seal_line(pa, plain, outcome.vn)
        cost.cycles = self.cpu.mac_latency_cycles
        return cost

    def tensor_mac(self, desc: TensorDescriptor) -> int:
        """MAC agregado do tensor (XOR dos MACs de linha armazenados)"""
        mac = 0
        for line in desc.lines():
            self.memory.materialize(line, self.key)
            mac ^= self.memory.macs.get(line, 0)
        return mac

    def inject_attack(self, kind, pa: int, region: str = "data", bit: int = 0):
        self.vn_store.inject_attack(kind, pa, region, bit)

    def switch_enclave(self, enclave_id: int, key: Optional[KeyMaterial] = None):
        """Guarda a Meta Table do enclave ativo e carrega a do próximo com a sua chave"""
        current = self.analyzer.active_enclave
        self._enclave_keys[current] = self.vn_store.key
        self.analyzer.context_switch("save", current)
        self.analyzer.context_switch("restore", enclave_id)
        self.vn_store.key = key if key is not None else self._enclave_keys.get(enclave_id, self.vn_store.key)
        self.mac_buffer.clear()


def setup(system):
    system.add_component("cpu.tensortee", TensorTeeCpu)
