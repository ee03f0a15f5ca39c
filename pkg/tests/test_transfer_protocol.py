"""
🔐 TensorTEE Simulator - Testes da sessão, do canal de metadados e das transferências
"""

import pytest

from components.transfer_protocol import (CPU_TO_NPU, NPU_TO_CPU, EnclaveImage, MetadataCodec,
                                          MetadataMessage, Phase, SessionState)
from engine.system import DEFAULT_CPU_IMAGE, DEFAULT_NPU_IMAGE, TensorTeeSystem
from utils.crypto_model import CipherBlock
from utils.errors import (AttestationFailure, ChannelTamper, FaultKind, IntegrityFault,
                          TransferRejected)

from conftest import BASE, NPU_BASE

LINE = 64


def _platform(settings, mode="tensortee", functional=True, n_lines=64, **kwargs):
    return TensorTeeSystem(settings).build_platform(mode, functional, region=(BASE, n_lines),
                                                     **kwargs)


def _write_tensor(platform, tensor, seed=0):
    lines = [bytes([(seed + i) % 256]) * LINE for i in range(tensor.n_lines)]
    for pa, line in zip(tensor.cpu_lines(), lines):
        platform.cpu.write_line(pa, line)
    return lines


def _session():
    return SessionState.attest_and_exchange(DEFAULT_CPU_IMAGE, DEFAULT_NPU_IMAGE)


# ═══════════════════════════════════════════════════════════════
# SESSÃO E CANAL
# ═══════════════════════════════════════════════════════════════

def test_attestation_and_key_exchange():
    session = _session()
    assert session.phase is Phase.KEY_ESTABLISHED
    assert session.cpu_key_view == session.npu_key_view
    assert session.shared_key is not None


def test_attestation_rejects_unexpected_image():
    with pytest.raises(AttestationFailure):
        TensorTeeSystem().attest(cpu_image=EnclaveImage("cpu-enclave", b"patched"))


def test_exchange_requires_attestation():
    with pytest.raises(TransferRejected):
        SessionState().exchange()


def test_metadata_codec_round_trip():
    session = _session()
    message = MetadataMessage(5, NPU_BASE, 16, LINE, 3, 0xABCDEF)
    wire = MetadataCodec.encode_metadata(session, message)
    assert len(wire) == MetadataCodec.WIRE_BYTES == 52
    assert MetadataCodec.decode_metadata(session, wire) == message


def test_metadata_codec_rejects_tampering_and_oversized_fields():
    session = _session()
    wire = MetadataCodec.encode_metadata(session, MetadataMessage(1, 0, 1, LINE, 1, 1))
    with pytest.raises(ChannelTamper):
        MetadataCodec.decode_metadata(session, bytes([wire[0] ^ 1]) + wire[1:])
    with pytest.raises(ChannelTamper):
        MetadataCodec.decode_metadata(session, wire[:-1])
    with pytest.raises(ValueError):
        MetadataCodec.encode_metadata(session, MetadataMessage(1, 0, 1, LINE, 1 << 56, 0))


def test_transfers_require_established_session(settings):
    platform = _platform(settings, functional=False, session=SessionState())
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    with pytest.raises(TransferRejected):
        platform.transfer.transfer(tensor, CPU_TO_NPU)


# ═══════════════════════════════════════════════════════════════
# TRANSFERÊNCIA DIRETA
# ═══════════════════════════════════════════════════════════════

def test_direct_transfer_moves_ciphertext_verbatim(settings):
    platform = _platform(settings)
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    lines = _write_tensor(platform, tensor)
    report = platform.transfer.transfer(tensor, CPU_TO_NPU)
    assert report.protocol == "direct"
    assert report.bytes_aes == 0
    assert report.bytes_aes_fixup == 0
    assert report.bytes_link == 16 * LINE
    assert report.bytes_meta == 52
    plains, _ = platform.npu.load_tensor_stream(platform.npu.record(5))
    assert plains == lines


def test_npu_result_reaches_cpu(settings):
    platform = _platform(settings)
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    _write_tensor(platform, tensor)
    platform.transfer.transfer(tensor, CPU_TO_NPU)
    updated = [bytes([200 + i]) * LINE for i in range(16)]
    platform.npu.store_tensor_stream(platform.npu.record(5), updated)
    platform.transfer.transfer(tensor, NPU_TO_CPU)
    assert [platform.cpu.read_line(pa)[0] for pa in tensor.cpu_lines()] == updated
    assert platform.cpu.vn_store.peek_vn(BASE) == platform.npu.record(5).vn


def test_resending_an_old_version_is_a_replay(settings):
    platform = _platform(settings)
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    _write_tensor(platform, tensor)
    platform.transfer.transfer(tensor, CPU_TO_NPU)
    platform.npu.store_tensor_stream(platform.npu.record(5), [bytes(LINE)] * 16)
    platform.transfer.transfer(tensor, NPU_TO_CPU)
    with pytest.raises(IntegrityFault) as excinfo:
        platform.transfer.transfer(tensor, NPU_TO_CPU)
    assert excinfo.value.kind is FaultKind.REPLAY_OR_TAMPER


def test_tampered_metadata_message_is_rejected(settings):
    platform = _platform(settings)
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    _write_tensor(platform, tensor)
    platform.transfer.wire_hook = lambda wire: wire[:-1] + bytes([wire[-1] ^ 1])
    with pytest.raises(ChannelTamper):
        platform.transfer.transfer(tensor, CPU_TO_NPU)
    assert platform.transfer.reports[-1].faults == 1


def test_tampered_payload_fails_cpu_side_check(settings):
    platform = _platform(settings)
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    _write_tensor(platform, tensor)
    platform.transfer.transfer(tensor, CPU_TO_NPU)
    platform.npu.store_tensor_stream(platform.npu.record(5), [bytes(LINE)] * 16)
    platform.npu.inject_tamper(5, 7, 3)
    with pytest.raises(IntegrityFault) as excinfo:
        platform.transfer.transfer(tensor, NPU_TO_CPU)
    assert excinfo.value.kind is FaultKind.TENSOR_MAC
    assert platform.transfer.retransfer_requests == [5]


def test_non_uniform_vns_are_fixed_up_before_sending(settings):
    platform = _platform(settings)
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    lines = _write_tensor(platform, tensor)
    lines[0] = b"\xee" * LINE
    platform.cpu.write_line(BASE, lines[0])
    report = platform.transfer.transfer(tensor, CPU_TO_NPU)
    assert report.bytes_aes_fixup == 2 * LINE * 15
    assert {platform.cpu.vn_store.peek_vn(pa) for pa in tensor.cpu_lines()} == {2}
    plains, _ = platform.npu.load_tensor_stream(platform.npu.record(5))
    assert plains == lines


def test_send_during_cpu_update_uses_synced_vns(settings):
    platform = _platform(settings)
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    lines = _write_tensor(platform, tensor)
    for pa in tensor.cpu_lines():
        platform.cpu.read_line(pa)
    lines[0] = b"\x55" * LINE
    platform.cpu.write_line(BASE, lines[0])
    platform.transfer.transfer(tensor, CPU_TO_NPU)
    plains, _ = platform.npu.load_tensor_stream(platform.npu.record(5))
    assert plains == lines


# ═══════════════════════════════════════════════════════════════
# BASELINE E CUSTOS
# ═══════════════════════════════════════════════════════════════

def test_baseline_transfer_reencrypts_through_staging(settings):
    platform = _platform(settings, mode="sgx-mgx")
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    lines = _write_tensor(platform, tensor)
    report = platform.transfer.transfer(tensor, CPU_TO_NPU)
    assert report.protocol == "baseline"
    assert report.bytes_aes == 4 * 16 * LINE
    plains, _ = platform.npu.load_tensor_stream(platform.npu.record(5))
    assert plains == lines


def test_baseline_staging_tamper_is_detected(settings):
    platform = _platform(settings, mode="sgx-mgx")
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    _write_tensor(platform, tensor)

    def flip_first(_, staging):
        first = staging[0]
        corrupted = CipherBlock(bytes([first.data[0] ^ 1]) + first.data[1:], first.binding, first.vn)
        return [corrupted] + list(staging[1:])

    platform.transfer.staging_hook = flip_first
    with pytest.raises(IntegrityFault) as excinfo:
        platform.transfer.transfer(tensor, CPU_TO_NPU)
    assert excinfo.value.kind is FaultKind.STAGED_DATA


def test_direct_transfer_is_faster_than_relay(settings):
    cycles = {}
    for mode in ("sgx-mgx", "tensortee"):
        platform = _platform(settings, mode=mode, functional=False)
        tensor = platform.register_tensor(5, BASE, NPU_BASE, 64)
        cycles[mode] = platform.transfer.transfer(tensor, CPU_TO_NPU).cycles_total
    assert cycles["sgx-mgx"] > cycles["tensortee"]


def test_plain_transfer_has_no_crypto(settings):
    platform = _platform(settings, mode="nonsecure")
    tensor = platform.register_tensor(5, BASE, NPU_BASE, 16)
    lines = _write_tensor(platform, tensor)
    report = platform.transfer.transfer(tensor, CPU_TO_NPU)
    assert (report.protocol, report.bytes_aes, report.bytes_meta) == ("plain", 0, 0)
    plains, _ = platform.npu.load_tensor_stream(platform.npu.record(5))
    assert plains == lines
