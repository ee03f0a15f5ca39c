"""
🔐 TensorTEE Simulator - Testes do TEE da NPU
"""

import pytest

import config
from components.npu_tee import NpuTee, VerifyMode
from engine.resources import ResourceLedger
from utils.errors import ConfigError, FaultKind, FaultLimitExceeded, IntegrityFault, SimulationError
from workloads.trace import MemRequest

from conftest import NPU_BASE

LINE = 64


def _lines(count, seed=0):
    return [bytes([(seed + index) % 256]) * LINE for index in range(count)]


def _npu(key, settings, mode=None, ledger=None):
    return NpuTee(key, settings, mode or VerifyMode.delayed(), ledger=ledger)


def _stored(npu, tensor_id=0, n_lines=8, base=NPU_BASE):
    record = npu.register_tensor(tensor_id, base, n_lines)
    npu.store_tensor_stream(record, _lines(n_lines))
    return record


def test_verify_mode_labels_and_validation():
    assert VerifyMode.delayed().label == "DelayedTensor"
    assert VerifyMode.blocking(512).label == "Blocking(512)"
    assert VerifyMode.none().label == "None"
    with pytest.raises(ConfigError):
        VerifyMode.blocking(100)
    with pytest.raises(ConfigError):
        VerifyMode("lazy")


def test_delayed_load_round_trip(key, settings):
    npu = _npu(key, settings)
    record = _stored(npu)
    assert record.vn == 1
    plains, cost = npu.load_tensor_stream(record)
    assert plains == _lines(8)
    assert npu.delayed_lines == 8
    assert not record.poison
    assert cost.mac_bytes == 8
    assert npu.mac_storage_bytes() == config.MAC_STORED_BYTES


def test_blocking_mac_storage_scales_with_granularity(key, settings):
    npu = _npu(key, settings, VerifyMode.blocking(128))
    _stored(npu, n_lines=8)
    assert npu.mac_storage_bytes() == config.MAC_STORED_BYTES * 4


def test_tamper_discards_tensor_and_requests_retransfer(key, settings):
    npu = _npu(key, settings)
    record = _stored(npu)
    npu.inject_tamper(0, 3, 9)
    with pytest.raises(IntegrityFault) as excinfo:
        npu.load_tensor_stream(record)
    assert excinfo.value.kind is FaultKind.TENSOR_MAC
    assert record.failed
    assert len(npu.retransfer_requests) == 1
    assert npu.faults.count == 1
    with pytest.raises(IntegrityFault):
        npu.load_tensor_stream(record)
    assert npu.faults.count == 1


def test_fault_threshold_stops_execution(key, settings):
    npu = _npu(key, settings)
    record = npu.register_tensor(0, NPU_BASE, 4)
    for attempt in range(1, 5):
        npu.store_tensor_stream(record, _lines(4, attempt))
        npu.inject_tamper(0, 0)
        if attempt <= settings.npu.fault_threshold:
            with pytest.raises(IntegrityFault) as excinfo:
                npu.load_tensor_stream(record)
            assert not isinstance(excinfo.value, FaultLimitExceeded)
        else:
            with pytest.raises(FaultLimitExceeded):
                npu.load_tensor_stream(record)
    assert [req.attempt for req in npu.retransfer_requests] == [1, 2, 3, 4]


def test_blocking_never_releases_lines_of_a_bad_block(key, settings):
    npu = _npu(key, settings, VerifyMode.blocking(128))
    record = _stored(npu)
    npu.inject_tamper(0, 5)
    consumed = []
    with pytest.raises(IntegrityFault):
        npu.load_tensor_stream(record, lambda index, _: consumed.append(index))
    assert consumed == [0, 1, 2, 3]


def test_delayed_consumes_all_lines_before_failing(key, settings):
    npu = _npu(key, settings)
    record = _stored(npu)
    npu.inject_tamper(0, 5)
    consumed = []
    with pytest.raises(IntegrityFault):
        npu.load_tensor_stream(record, lambda index, _: consumed.append(index))
    assert consumed == list(range(8))


def test_code_fetch_is_verified_per_line(key, settings):
    npu = _npu(key, settings)
    record = npu.register_tensor(9, config.CODE_BASE_VA, 4, code=True)
    npu.store_tensor_stream(record, _lines(4, 50))
    assert npu.dispatch(MemRequest(config.CODE_BASE_VA + LINE, is_inst=True)) == bytes([51]) * LINE
    npu.inject_tamper(9, 2)
    with pytest.raises(IntegrityFault) as excinfo:
        npu.fetch_code_line(config.CODE_BASE_VA + 2 * LINE)
    assert excinfo.value.kind is FaultKind.CODE_MAC
    assert npu.delayed_lines == 0
    assert npu.code_fetches == 2


def test_poison_follows_pending_inputs_until_verified(key, settings):
    npu = _npu(key, settings)
    source = _stored(npu, 0, 4)
    output = npu.register_tensor(1, NPU_BASE + 4 * LINE, 4)
    npu.dispatch(MemRequest(source.addr(0)))
    npu.dispatch(MemRequest(source.addr(1)))
    assert source.poison
    npu.propagate_poison([source], output)
    assert output.poison
    npu.dispatch(MemRequest(source.addr(2)))
    npu.dispatch(MemRequest(source.addr(3)))
    assert not source.poison
    assert not output.poison


def test_barrier_cancels_communication_of_tampered_descendants(key, settings):
    npu = _npu(key, settings)
    source = _stored(npu, 0, 4)
    output = npu.register_tensor(1, NPU_BASE + 4 * LINE, 4)
    npu.inject_tamper(0, 1)
    with pytest.raises(IntegrityFault):
        npu.load_tensor_stream(source)
    npu.propagate_poison([source], output)
    with pytest.raises(IntegrityFault):
        npu.verification_barrier([1])


def test_retransfer_clears_poison_of_descendants(key, settings):
    npu = _npu(key, settings)
    source = _stored(npu, 0, 4)
    output = npu.register_tensor(1, NPU_BASE + 4 * LINE, 4)
    npu.inject_tamper(0, 1)
    with pytest.raises(IntegrityFault):
        npu.load_tensor_stream(source)
    npu.propagate_poison([source], output)
    assert output.poison
    npu.store_tensor_stream(source, _lines(4, 7))
    assert not source.failed
    assert not output.poison
    assert output.waiting_on == set()
    assert npu.verification_barrier([1], at_cycle=42) == 42


def test_received_ciphertext_clears_poison_of_descendants(key, settings):
    sender = _npu(key, settings)
    clean = _stored(sender, 0, 4)
    blocks = [sender.device[clean.addr(index)] for index in range(4)]
    npu = _npu(key, settings)
    source = _stored(npu, 0, 4)
    output = npu.register_tensor(1, NPU_BASE + 4 * LINE, 4)
    npu.inject_tamper(0, 2)
    with pytest.raises(IntegrityFault):
        npu.load_tensor_stream(source)
    npu.propagate_poison([source], output)
    npu.install_ciphertext(source, blocks, clean.vn, clean.stored_mac)
    assert not output.poison
    plains, _ = npu.load_tensor_stream(source)
    assert plains == _lines(4)
    assert npu.verification_barrier([1]) == 0


def test_barrier_waits_for_pending_verification(key, settings):
    npu = _npu(key, settings)
    source = _stored(npu, 0, 4)
    npu.dispatch(MemRequest(source.addr(0)))
    with pytest.raises(SimulationError):
        npu.verification_barrier([0])
    source.verify_done = 500
    assert npu.verification_barrier([0], at_cycle=100) == 500
    assert npu.verification_barrier([0], at_cycle=900) == 900


def test_blocking_streams_are_slower_than_delayed(settings):
    ends = {}
    for name, mode in (("none", VerifyMode.none()), ("delayed", VerifyMode.delayed()),
                       ("blocking", VerifyMode.blocking(512))):
        npu = NpuTee(None, settings, mode, functional=False,
                     ledger=ResourceLedger.from_settings(settings))
        timing = npu.stream_schedule(NPU_BASE, 1024, 0, tensor_id=0)
        ends[name] = timing.end
        assert len(npu.rows) == 1
        assert npu.rows[0]["mode"] == mode.label
    assert ends["blocking"] > ends["delayed"]
    assert ends["none"] <= ends["delayed"]


def test_stream_schedule_requires_ledger(key, settings):
    npu = _npu(key, settings)
    with pytest.raises(SimulationError):
        npu.stream_schedule(NPU_BASE, 4, 0)
