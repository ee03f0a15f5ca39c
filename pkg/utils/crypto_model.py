"""
🔐 TensorTEE Simulator - Crypto Model
Modelos funcionais determinísticos: criptografia em modo contador, MAC por bloco,
agregação XOR de MACs de tensor e hash dos nós da árvore de versões
"""

import hashlib
import struct
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from typing import Iterable

import config

MASK56 = (1 << 56) - 1
VN_MAX = MASK56


class BindingMode(Enum):
    """Como o contador é vinculado ao bloco"""
    PHYSICAL_ADDR = 0
    TENSOR_LOGICAL = 1


@dataclass(frozen=True)
class KeyMaterial:
    """Chaves de um enclave (K_AES, K_MAC) e a semente de reprodutibilidade"""
    enc_key: bytes
    mac_key: bytes
    seed: int

    @staticmethod
    def from_seed(seed: int, label: str = "") -> "KeyMaterial":
        """Deriva um par de chaves a partir da semente (e de um rótulo opcional)"""
        material = hashlib.blake2b(
            seed.to_bytes(8, "little") + label.encode(),
            digest_size=2 * config.KEY_BYTES,
            person=b"tensortee-keys",
        ).digest()
        return KeyMaterial(
            enc_key=material[:config.KEY_BYTES],
            mac_key=material[config.KEY_BYTES:],
            seed=seed,
        )

    def for_enclave(self, enclave_id: int) -> "KeyMaterial":
        """Chave dedicada de cada enclave"""
        return KeyMaterial.from_seed(self.seed, f"enclave-{enclave_id}")


@dataclass(frozen=True)
class CounterBinding:
    mode: BindingMode
    ident: int
    offset: int = 0

    def __post_init__(self):
        if self.mode is BindingMode.TENSOR_LOGICAL and self.offset % config.CACHELINE_BYTES:
            raise ValueError(f"offset {self.offset:#x} não alinhado em 64 bytes")
        if self.mode is BindingMode.PHYSICAL_ADDR and self.offset:
            raise ValueError("binding por endereço físico não tem offset")

    @staticmethod
    def physical(pa: int) -> "CounterBinding":
        return CounterBinding(BindingMode.PHYSICAL_ADDR, pa)

    @staticmethod
    def tensor(tensor_id: int, offset: int) -> "CounterBinding":
        return CounterBinding(BindingMode.TENSOR_LOGICAL, tensor_id, offset)

    def encode(self) -> bytes:
        return struct.pack("<BQQ", self.mode.value, self.ident, self.offset)


@dataclass(frozen=True)
class CipherBlock:
    """64 bytes de texto cifrado com o contador que os gerou"""
    data: bytes
    binding: CounterBinding
    vn: int


class CryptoModel:
    """Primitivas de brinquedo com comportamento de avalanche (blake2b com chave)"""

    @staticmethod
    def keystream(key: KeyMaterial, binding: CounterBinding, vn: int) -> bytes:
        """Pad de 64 bytes: AES(K_AES, (binding, VN)) modelado por hash com chave"""
        return hashlib.blake2b(
            binding.encode() + (vn & VN_MAX).to_bytes(8, "little"),
            key=key.enc_key,
            digest_size=config.CACHELINE_BYTES,
        ).digest()

    @staticmethod
    def _xor(left: bytes, right: bytes) -> bytes:
        return (int.from_bytes(left, "little") ^ int.from_bytes(right, "little")).to_bytes(
            len(left), "little")

    @staticmethod
    def encrypt_block(plain: bytes, binding: CounterBinding, vn: int,
                      key: KeyMaterial) -> CipherBlock:
        if len(plain) != config.CACHELINE_BYTES:
            raise ValueError(f"bloco deve ter 64 bytes, recebeu {len(plain)}")
        pad = CryptoModel.keystream(key, binding, vn)
        return CipherBlock(CryptoModel._xor(plain, pad), binding, vn)

    @staticmethod
    def decrypt_block(block: CipherBlock, key: KeyMaterial) -> bytes:
        # Contador errado devolve lixo; quem detecta é o MAC
        pad = CryptoModel.keystream(key, block.binding, block.vn)
        return CryptoModel._xor(block.data, pad)

    @staticmethod
    def mac_block(block: CipherBlock, key: KeyMaterial) -> int:
        """MAC = Hash(K_MAC, (C, binding, VN)) truncado em 56 bits"""
        digest = hashlib.blake2b(
            block.data + block.binding.encode() + (block.vn & VN_MAX).to_bytes(8, "little"),
            key=key.mac_key,
            digest_size=8,
        ).digest()
        return int.from_bytes(digest, "little") & MASK56

    @staticmethod
    def mac_xor_aggregate(tags: Iterable[int]) -> int:
        """MAC do tensor: XOR de todos os MACs de linha (insensível à ordem)"""
        tags = list(tags)
        if not tags:
            raise ValueError("empty tensor")
        return reduce(lambda acc, tag: acc ^ tag, tags, 0) & MASK56

    @staticmethod
    def node_hash(key: KeyMaterial, payload: bytes) -> bytes:
        """Hash de 8 bytes usado pelos nós da árvore de VNs"""
        return hashlib.blake2b(payload, key=key.mac_key, digest_size=8,
                               person=b"vn-tree").digest()
