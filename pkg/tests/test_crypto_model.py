"""
🔐 TensorTEE Simulator - Testes do modelo criptográfico
"""

import numpy as np
import pytest

from utils.crypto_model import MASK56, CipherBlock, CounterBinding, CryptoModel, KeyMaterial

LINE = 64


def test_keys_are_deterministic_per_seed_and_enclave(key):
    assert KeyMaterial.from_seed(0x5EED) == key
    assert KeyMaterial.from_seed(0x5EEE) != key
    assert key.for_enclave(1) != key.for_enclave(2)
    assert key.for_enclave(1) == KeyMaterial.from_seed(0x5EED).for_enclave(1)


def test_encrypt_then_decrypt_restores_plaintext(key):
    plain = bytes(range(64))
    binding = CounterBinding.physical(0x1000)
    block = CryptoModel.encrypt_block(plain, binding, 3, key)
    assert block.data != plain
    assert CryptoModel.decrypt_block(block, key) == plain


def test_keystream_known_answer(key):
    pad = CryptoModel.keystream(key, CounterBinding.physical(0x1000), 1)
    assert pad.hex() == (
        "dc27138e86c3997e3bce79c5df05fe58509f642f57e96185db2db3e369b3d71d"
        "0fdd82f491330308766e965c3fa0a8c69bd69f75bb93719af02b047721c660b9")


def test_keystream_depends_on_vn_and_binding(key):
    pads = {
        CryptoModel.keystream(key, CounterBinding.physical(0x1000), 1),
        CryptoModel.keystream(key, CounterBinding.physical(0x1000), 2),
        CryptoModel.keystream(key, CounterBinding.physical(0x1040), 1),
        CryptoModel.keystream(key, CounterBinding.tensor(7, 0), 1),
    }
    assert len(pads) == 4


def test_wrong_counter_decrypts_to_garbage(key):
    plain = b"\x11" * 64
    block = CryptoModel.encrypt_block(plain, CounterBinding.tensor(1, 64), 5, key)
    stale = CipherBlock(block.data, block.binding, 4)
    assert CryptoModel.decrypt_block(stale, key) != plain


def test_encrypt_requires_full_cacheline(key):
    with pytest.raises(ValueError):
        CryptoModel.encrypt_block(b"short", CounterBinding.physical(0), 0, key)


def test_tensor_binding_requires_aligned_offset():
    with pytest.raises(ValueError):
        CounterBinding.tensor(1, 10)
    assert CounterBinding.tensor(1, 128).offset == 128


def test_mac_fits_in_56_bits_and_detects_flip(key):
    block = CryptoModel.encrypt_block(bytes(64), CounterBinding.physical(0x2000), 1, key)
    tag = CryptoModel.mac_block(block, key)
    assert 0 <= tag <= MASK56
    flipped = CipherBlock(bytes([block.data[0] ^ 1]) + block.data[1:], block.binding, block.vn)
    assert CryptoModel.mac_block(flipped, key) != tag


def test_xor_aggregate_is_order_insensitive():
    tags = [0x1234, 0xABCDEF, 0x55AA55, 0x1]
    assert CryptoModel.mac_xor_aggregate(tags) == CryptoModel.mac_xor_aggregate(reversed(tags))
    assert CryptoModel.mac_xor_aggregate([0x42]) == 0x42


def test_xor_aggregate_rejects_empty_tensor():
    with pytest.raises(ValueError, match="empty tensor"):
        CryptoModel.mac_xor_aggregate([])


def test_node_hash_is_keyed(key):
    other = KeyMaterial.from_seed(1)
    assert CryptoModel.node_hash(key, b"node") != CryptoModel.node_hash(other, b"node")
    assert len(CryptoModel.node_hash(key, b"node")) == 8


# ═══════════════════════════════════════════════════════════════
# PROPRIEDADES (amostras com semente fixa)
# ═══════════════════════════════════════════════════════════════

def _random_binding(rng):
    if rng.integers(2):
        return CounterBinding.physical(int(rng.integers(0, 1 << 40)) * LINE)
    return CounterBinding.tensor(int(rng.integers(0, 1 << 16)), int(rng.integers(0, 1 << 20)) * LINE)


def test_random_blocks_round_trip(key):
    rng = np.random.default_rng(7)
    for _ in range(1000):
        plain = rng.bytes(LINE)
        binding = _random_binding(rng)
        vn = int(rng.integers(0, MASK56, endpoint=True))
        block = CryptoModel.encrypt_block(plain, binding, vn, key)
        assert CryptoModel.decrypt_block(block, key) == plain


@pytest.fixture(scope="module")
def sealed_block():
    key = KeyMaterial.from_seed(0x5EED)
    plain = np.random.default_rng(11).bytes(LINE)
    block = CryptoModel.encrypt_block(plain, CounterBinding.tensor(3, 5 * LINE), 9, key)
    return key, block, CryptoModel.mac_block(block, key)


@pytest.mark.parametrize("bit", range(LINE * 8))
def test_every_single_bit_flip_changes_the_mac(sealed_block, bit):
    key, block, tag = sealed_block
    raw = bytearray(block.data)
    raw[bit // 8] ^= 1 << (bit % 8)
    flipped = CipherBlock(bytes(raw), block.binding, block.vn)
    assert CryptoModel.mac_block(flipped, key) != tag


def test_aggregate_ignores_line_order_across_random_tensors():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        tags = rng.integers(0, MASK56, size=int(rng.integers(1, 33)), endpoint=True).tolist()
        shuffled = rng.permutation(tags).tolist()
        assert CryptoModel.mac_xor_aggregate(shuffled) == CryptoModel.mac_xor_aggregate(tags)


def test_repeated_tag_cancels_out():
    rng = np.random.default_rng(99)
    for tag, other in rng.integers(0, MASK56, size=(1000, 2), endpoint=True).tolist():
        assert CryptoModel.mac_xor_aggregate([tag, tag]) == 0
        assert CryptoModel.mac_xor_aggregate([other, tag, tag]) == other
        assert CryptoModel.mac_xor_aggregate([tag, other, tag]) == other
