"""
🔐 TensorTEE Simulator - Testes do TenAnalyzer e da CPU TensorTEE
"""

import pytest

from components.cpu_baseline_tee import AttackKind, CpuBaselineTee
from components.cpu_memory import ProtectedMemory
from components.tenanalyzer import (HintOutcome, ReadOutcome, TenAnalyzer, TensorDescriptor,
                                    TensorTeeCpu, WriteKind)
from utils.cost_report import CostReport
from utils.errors import IntegrityFault
from utils.settings import CpuSettings

from conftest import BASE

LINE = 64


def _analyzer(n_lines=256, **cpu_overrides):
    store = CpuBaselineTee(ProtectedMemory(BASE, n_lines, functional=False), None)
    return TenAnalyzer(store, CpuSettings(**cpu_overrides))


def _lines(count, start=BASE, stride=LINE):
    return [start + i * stride for i in range(count)]


def _detect(analyzer, count=64):
    return [analyzer.on_read(va).kind for va in _lines(count)]


# ═══════════════════════════════════════════════════════════════
# DETECÇÃO
# ═══════════════════════════════════════════════════════════════

def test_sequential_reads_are_detected_and_extended():
    analyzer = _analyzer()
    kinds = _detect(analyzer)
    assert kinds[:4] == [ReadOutcome.MISS] * 4
    assert kinds[4:] == [ReadOutcome.HIT_BOUNDARY] * 60
    assert analyzer.stats.promotions == 1
    assert len(analyzer) == 1
    assert analyzer.entries[0].cols == 64


def test_second_pass_hits_inside_the_entry():
    analyzer = _analyzer()
    _detect(analyzer)
    before = analyzer.stats.hit_in
    assert {analyzer.on_read(va).kind for va in _lines(64)} == {ReadOutcome.HIT_IN}
    assert analyzer.stats.hit_in - before == 64


def test_strided_stream_is_detected():
    analyzer = _analyzer()
    for va in _lines(4, stride=2 * LINE):
        analyzer.on_read(va)
    entry = analyzer.entries[0]
    assert entry.stride == 2 * LINE
    assert analyzer.on_read(BASE + 4 * 2 * LINE).kind is ReadOutcome.HIT_BOUNDARY


def test_filter_rejects_mixed_vns():
    analyzer = _analyzer()
    analyzer.vn_store.write_vn(BASE + 2 * LINE, 1)
    _detect(analyzer, 4)
    assert analyzer.stats.filter_rejected == 1
    assert len(analyzer) == 0


def test_disabled_analyzer_always_misses():
    analyzer = _analyzer(en_tmf=False)
    assert set(_detect(analyzer)) == {ReadOutcome.MISS}
    assert len(analyzer) == 0


def test_unaligned_access_is_rejected():
    analyzer = _analyzer()
    with pytest.raises(ValueError):
        analyzer.on_read(BASE + 3)


# ═══════════════════════════════════════════════════════════════
# PROTOCOLO DE ATUALIZAÇÃO
# ═══════════════════════════════════════════════════════════════

def test_in_order_update_bumps_the_entry_vn():
    analyzer = _analyzer()
    _detect(analyzer)
    kinds = [analyzer.on_write(va).kind for va in _lines(64)]
    assert kinds[0] is WriteKind.HIT_EDGE_START
    assert set(kinds[1:-1]) == {WriteKind.HIT_IN}
    assert kinds[-1] is WriteKind.HIT_EDGE_FINISH
    assert analyzer.entries[0].vn == 1
    assert analyzer.vn_store.peek_vn(BASE + 10 * LINE) == 1
    assert analyzer.check_invariants() == []


def test_reads_during_update_see_the_new_vn():
    analyzer = _analyzer()
    _detect(analyzer)
    analyzer.on_write(BASE)
    analyzer.on_write(BASE + LINE)
    assert analyzer.on_read(BASE + LINE).vn == 1
    assert analyzer.on_read(BASE + 2 * LINE).vn == 0


def test_write_before_start_invalidates():
    analyzer = _analyzer()
    _detect(analyzer)
    outcome = analyzer.on_write(BASE + 2 * LINE)
    assert outcome.kind is WriteKind.INVALIDATE
    assert outcome.reason == "not-started"
    assert analyzer.vn_store.peek_vn(BASE + 2 * LINE) == 1
    assert analyzer.vn_store.peek_vn(BASE) == 0
    assert len(analyzer) == 0


def test_double_update_invalidates_and_syncs_flipped_lines():
    analyzer = _analyzer()
    _detect(analyzer)
    analyzer.on_write(BASE)
    analyzer.on_write(BASE + LINE)
    outcome = analyzer.on_write(BASE + LINE)
    assert outcome.reason == "double-update"
    assert analyzer.vn_store.peek_vn(BASE) == 1
    assert analyzer.vn_store.peek_vn(BASE + LINE) == 2
    assert analyzer.stats.invalidations["double-update"] == 1


def test_incomplete_update_invalidates():
    analyzer = _analyzer()
    _detect(analyzer)
    analyzer.on_write(BASE)
    outcome = analyzer.on_write(BASE + 63 * LINE)
    assert outcome.reason == "incomplete"
    assert outcome.vn == 1
    assert analyzer.vn_store.peek_vn(BASE + 63 * LINE) == 1
    assert analyzer.vn_store.peek_vn(BASE + 5 * LINE) == 0


def test_retire_overlapping_syncs_mid_update_entry():
    analyzer = _analyzer()
    _detect(analyzer)
    analyzer.on_write(BASE)
    analyzer.on_write(BASE + LINE)
    analyzer.retire_overlapping(_lines(64))
    assert len(analyzer) == 0
    assert analyzer.vn_store.peek_vn(BASE + LINE) == 1
    assert analyzer.vn_store.peek_vn(BASE + 2 * LINE) == 0
    assert analyzer.stats.invalidations["transfer"] == 1


def test_write_discards_stale_filter_candidates():
    analyzer = _analyzer()
    lines = _lines(8)
    for va in lines[4:6] + lines[:5]:
        analyzer.on_read(va)
    assert analyzer.entries[0].cols == 5
    for va in lines[:5]:
        analyzer.on_write(va)
    analyzer.on_write(lines[2])
    for va in lines[6:8]:
        analyzer.on_read(va)
    assert len(analyzer) == 0
    assert analyzer.on_read(lines[4]).vn == 1


# ═══════════════════════════════════════════════════════════════
# DICAS E MERGE
# ═══════════════════════════════════════════════════════════════

def test_adjacent_hints_merge_and_exact_hint_is_noop():
    analyzer = _analyzer()
    assert analyzer.install_hint(TensorDescriptor.contiguous(BASE, 4), 0) is HintOutcome.INSTALLED
    analyzer.install_hint(TensorDescriptor.contiguous(BASE + 4 * LINE, 4), 0)
    assert len(analyzer) == 1
    assert analyzer.stats.merges == 1
    assert analyzer.entries[0].cols == 8
    assert analyzer.install_hint(TensorDescriptor.contiguous(BASE, 8), 0) is HintOutcome.NOOP


def test_strided_rows_merge_into_2d_entry():
    analyzer = _analyzer()
    for row in range(3):
        analyzer.install_hint(TensorDescriptor.contiguous(BASE + row * 1024, 4), 0)
    assert len(analyzer) == 1
    entry = analyzer.entries[0]
    assert entry.dims == (4, 3, 1)
    assert entry.row_stride == 1024
    assert analyzer.on_read(BASE + 2 * 1024 + 3 * LINE).kind is ReadOutcome.HIT_IN


def test_entries_with_different_vns_do_not_merge():
    analyzer = _analyzer()
    analyzer.install_hint(TensorDescriptor.contiguous(BASE, 4), 0)
    analyzer.install_hint(TensorDescriptor.contiguous(BASE + 4 * LINE, 4), 1)
    assert len(analyzer) == 2
    assert analyzer.stats.merges == 0


def test_hint_during_update_is_deferred():
    analyzer = _analyzer()
    analyzer.install_hint(TensorDescriptor.contiguous(BASE, 8), 0)
    analyzer.on_write(BASE)
    outcome = analyzer.install_hint(TensorDescriptor.contiguous(BASE + 2 * LINE, 2), 5)
    assert outcome is HintOutcome.DEFERRED
    assert analyzer.stats.hints_deferred == 1


def test_context_switch_saves_and_restores_table():
    analyzer = _analyzer()
    analyzer.install_hint(TensorDescriptor.contiguous(BASE, 8), 0)
    analyzer.context_switch("save", 0)
    assert len(analyzer) == 0
    analyzer.context_switch("restore", 0)
    assert len(analyzer) == 1
    assert analyzer.dump_table()[0]["dims"] == [8, 1, 1]
    with pytest.raises(ValueError):
        analyzer.context_switch("swap", 0)


# ═══════════════════════════════════════════════════════════════
# CPU TENSORTEE (modo funcional)
# ═══════════════════════════════════════════════════════════════

def _tensortee_cpu(key, n_lines=16):
    memory = ProtectedMemory(BASE, n_lines)
    memory.register_tensor(3, BASE, n_lines)
    return TensorTeeCpu(memory, key)


def test_tensortee_cpu_round_trip_and_detection(key):
    cpu = _tensortee_cpu(key)
    lines = _lines(16)
    for index, pa in enumerate(lines):
        cpu.write_line(pa, bytes([index]) * 64)
    for index, pa in enumerate(lines):
        plain, _ = cpu.read_line(pa)
        assert plain == bytes([index]) * 64
    assert len(cpu.analyzer) == 1

    for index, pa in enumerate(lines):
        cpu.write_line(pa, bytes([index + 100]) * 64)
    assert cpu.analyzer.stats.edge_finishes == 1
    assert cpu.vn_store.peek_vn(BASE) == 2
    plain, cost = cpu.read_line(BASE + 5 * LINE)
    assert plain == bytes([105]) * 64
    assert cost.vn_on_chip is True


def test_tensortee_cpu_detects_data_bitflip(key):
    cpu = _tensortee_cpu(key)
    for pa in _lines(16):
        cpu.write_line(pa, b"\x07" * 64)
    for pa in _lines(16):
        cpu.read_line(pa)
    cpu.inject_attack(AttackKind.BITFLIP, BASE + 3 * LINE, "data", 7)
    with pytest.raises(IntegrityFault):
        cpu.read_line(BASE + 3 * LINE)


def test_switch_enclave_swaps_meta_table(key):
    cpu = _tensortee_cpu(key)
    for pa in _lines(16):
        cpu.read_line(pa)
    assert len(cpu.analyzer) == 1
    cpu.switch_enclave(1)
    assert len(cpu.analyzer) == 0
    cpu.switch_enclave(0)
    assert len(cpu.analyzer) == 1
    assert cpu.analyzer.active_enclave == 0


def test_covered_reads_fetch_no_offchip_versions(key):
    cpu = TensorTeeCpu(ProtectedMemory(BASE, 64), key)
    for pa in _lines(64):
        cpu.read_line(pa)
    covered = [cpu.read_line(pa)[1] for pa in _lines(64)]
    assert cpu.analyzer.stats.hit_in == 64
    assert CostReport.total(covered).offchip_vn_bytes == 0

    baseline = CpuBaselineTee(ProtectedMemory(BASE, 64), key)
    cold = CostReport.total(baseline.read_line(pa)[1] for pa in _lines(64))
    assert cold.vn_bytes == 8 * LINE
