"""
🔐 TensorTEE Simulator - Resource Ledger
Recursos compartilhados com reserva de banda por intervalos ocupados (DRAM, AES, MAC, link)
"""

import bisect
from fractions import Fraction
from typing import Dict, Iterable, List, Union

import numpy as np

import config
from utils.errors import ConfigError, SimulationError

Amount = Union[int, Fraction]


class Resource:
    """
    Um canal/motor: capacidade em bytes por ciclo e latência fixa.

    Guarda os intervalos ocupados [início, fim) ordenados e fundidos; cada
    pedido entra na primeira lacuna livre a partir do seu ciclo, então um
    pedido feito depois mas com ciclo anterior não espera trabalho futuro.
    """

    def __init__(self, name: str, capacity: Fraction, latency: int = 0):
        capacity = Fraction(capacity)
        if capacity <= 0:
            raise ConfigError(f"capacidade de {name} deve ser positiva")
        self.name = name
        self.capacity = capacity
        self.latency = int(latency)
        self._starts: List[int] = []
        self._ends: List[int] = []
        self.bytes_charged = 0
        self.busy_cycles = 0
        self.wait_cycles = 0
        self.reservations = 0

    @property
    def busy_until(self) -> int:
        return self._ends[-1] if self._ends else 0

    @property
    def intervals(self) -> List[tuple]:
        return list(zip(self._starts, self._ends))

    def duration(self, amount: int) -> int:
        """Ciclos de ocupação: quantidade / capacidade, arredondado para cima"""
        return -(-amount * self.capacity.denominator // self.capacity.numerator)

    def _occupy(self, start: int, end: int):
        """Marca [start, end) como ocupado; o trecho cai sempre numa lacuna"""
        idx = bisect.bisect_left(self._starts, start)
        if idx > 0 and self._ends[idx - 1] == start:
            idx -= 1
            self._ends[idx] = end
        else:
            self._starts.insert(idx, start)
            self._ends.insert(idx, end)
        if idx + 1 < len(self._starts) and self._starts[idx + 1] == self._ends[idx]:
            self._ends[idx] = self._ends[idx + 1]
            del self._starts[idx + 1]
            del self._ends[idx + 1]

    def claim(self, unit: int, count: int, at_cycle: int) -> np.ndarray:
        """
        Encaixa `count` unidades de `unit` ciclos nas lacunas a partir de
        at_cycle, em ordem. Devolve o ciclo de término de cada unidade.
        """
        ends = np.zeros(count, dtype=np.int64)
        if count <= 0:
            return ends
        placed: List[tuple] = []
        cursor, done = at_cycle, 0
        idx = bisect.bisect_right(self._ends, cursor)
        while done < count:
            if idx < len(self._starts) and self._starts[idx] <= cursor:
                cursor = max(cursor, self._ends[idx])
                idx += 1
                continue
            gap_end = self._starts[idx] if idx < len(self._starts) else None
            remaining = count - done
            take = remaining if gap_end is None else min(remaining, (gap_end - cursor) // unit)
            if take > 0:
                ends[done:done + take] = cursor + unit * np.arange(1, take + 1, dtype=np.int64)
                placed.append((cursor, cursor + unit * take))
                if done == 0:
                    self.wait_cycles += cursor - at_cycle
                done += take
            if gap_end is not None and done < count:
                cursor = self._ends[idx]
                idx += 1
        for start, end in placed:
            self._occupy(start, end)
        self.busy_cycles += unit * count
        self.reservations += count
        return ends

    def reserve(self, amount: int, at_cycle: int) -> int:
        """Reserva `amount` bytes; devolve o ciclo em que o resultado está disponível"""
        if amount < 0:
            raise SimulationError(f"reserva negativa em {self.name}")
        if amount == 0:
            return at_cycle
        end = int(self.claim(self.duration(amount), 1, at_cycle)[0])
        self.bytes_charged += amount
        return end + self.latency

    def snapshot(self) -> Dict[str, int]:
        return {
            "bytes": self.bytes_charged,
            "busy_cycles": self.busy_cycles,
            "wait_cycles": self.wait_cycles,
            "busy_until": self.busy_until,
            "reservations": self.reservations,
        }


class ChannelGroup:
    """Canais iguais com linhas intercaladas por endereço"""

    def __init__(self, name: str, channels: int, capacity_per_channel: Fraction,
                 latency: int = 0, line_bytes: int = config.CACHELINE_BYTES):
        if channels <= 0:
            raise ConfigError(f"{name} precisa de ao menos um canal")
        self.name = name
        self.line_bytes = line_bytes
        self.channels = [Resource(f"{name}[{idx}]", capacity_per_channel, latency)
                         for idx in range(channels)]

    @property
    def latency(self) -> int:
        return self.channels[0].latency

    @property
    def busy_until(self) -> int:
        return max(channel.busy_until for channel in self.channels)

    @property
    def bytes_charged(self) -> int:
        return sum(channel.bytes_charged for channel in self.channels)

    def channel_for(self, addr: int) -> int:
        return (addr // self.line_bytes) % len(self.channels)

    def reserve(self, amount: int, at_cycle: int, addr: int = 0) -> int:
        """Espalha a quantidade em linhas pelos canais a partir do canal de addr"""
        if amount < 0:
            raise SimulationError(f"reserva negativa em {self.name}")
        if amount == 0:
            return at_cycle
        count = len(self.channels)
        if amount <= self.line_bytes:
            return self.channels[self.channel_for(addr)].reserve(amount, at_cycle)
        n_lines = -(-amount // self.line_bytes)
        per_channel, extra = divmod(n_lines, count)
        first = self.channel_for(addr)
        last_offset = (n_lines - 1) % count
        shortfall = n_lines * self.line_bytes - amount
        grant = at_cycle
        for offset in range(min(count, n_lines)):
            lines = per_channel + (1 if offset < extra else 0)
            share = lines * self.line_bytes - (shortfall if offset == last_offset else 0)
            grant = max(grant, self.channels[(first + offset) % count].reserve(share, at_cycle))
        return grant

    def reserve_lines(self, first_addr: int, count: int, at_cycle: int,
                      bytes_per_line: int = config.CACHELINE_BYTES) -> np.ndarray:
        """Reserva linhas contíguas; devolve o ciclo de chegada de cada linha"""
        grants = np.zeros(count, dtype=np.int64)
        if count <= 0:
            return grants
        n_channels = len(self.channels)
        first_line = first_addr // self.line_bytes
        for idx, channel in enumerate(self.channels):
            k0 = (idx - first_line) % n_channels
            if k0 >= count:
                continue
            positions = np.arange(k0, count, n_channels)
            ends = channel.claim(channel.duration(bytes_per_line), len(positions), at_cycle)
            grants[positions] = ends + channel.latency
            channel.bytes_charged += bytes_per_line * len(positions)
        return grants

    def snapshot(self) -> Dict[str, int]:
        merged: Dict[str, int] = {"bytes": 0, "busy_cycles": 0, "wait_cycles": 0,
                                  "busy_until": 0, "reservations": 0}
        for channel in self.channels:
            snap = channel.snapshot()
            for key in ("bytes", "busy_cycles", "wait_cycles", "reservations"):
                merged[key] += snap[key]
            merged["busy_until"] = max(merged["busy_until"], snap["busy_until"])
        return merged


class ResourceLedger:
    """Registro de todos os recursos com reserva por nome"""

    def __init__(self):
        self._resources: Dict[str, Union[Resource, ChannelGroup]] = {}

    def add(self, resource: Union[Resource, ChannelGroup]):
        self._resources[resource.name] = resource
        return resource

    def names(self) -> Iterable[str]:
        return self._resources.keys()

    def get(self, name: str) -> Union[Resource, ChannelGroup]:
        try:
            return self._resources[name]
        except KeyError:
            raise ConfigError(f"recurso desconhecido: {name}") from None

    def reserve(self, name: str, amount: int, at_cycle: int, addr: int = 0) -> int:
        resource = self.get(name)
        if isinstance(resource, ChannelGroup):
            return resource.reserve(amount, at_cycle, addr)
        return resource.reserve(amount, at_cycle)

    def reserve_lines(self, name: str, first_addr: int, count: int, at_cycle: int,
                      bytes_per_line: int = config.CACHELINE_BYTES) -> np.ndarray:
        resource = self.get(name)
        if not isinstance(resource, ChannelGroup):
            raise ConfigError(f"{name} não é um grupo de canais")
        return resource.reserve_lines(first_addr, count, at_cycle, bytes_per_line)

    def busy_until(self) -> int:
        return max((res.busy_until for res in self._resources.values()), default=0)

    def snapshot(self) -> Dict[str, Dict[str, int]]:
        return {name: res.snapshot() for name, res in self._resources.items()}

    @staticmethod
    def from_settings(settings) -> "ResourceLedger":
        """Recursos padrão da plataforma CPU+NPU (capacidades em bytes/ciclo de CPU)"""
        cpu, npu, link = settings.cpu, settings.npu, settings.link
        rate = settings.cpu_bytes_per_cycle
        npu_cycles = settings.npu_to_cpu_cycles
        ledger = ResourceLedger()
        ledger.add(ChannelGroup("cpu.dram", cpu.dram_channels,
                                rate(cpu.dram_gbps_per_channel), cpu.dram_latency_cycles))
        ledger.add(ChannelGroup("cpu.aes", cpu.dram_channels,
                                rate(cpu.aes_gbps_per_channel), cpu.aes_latency_cycles))
        ledger.add(ChannelGroup("cpu.mac", cpu.dram_channels,
                                rate(cpu.aes_gbps_per_channel), cpu.mac_latency_cycles))
        ledger.add(Resource("cpu.xfer_aes", rate(link.xfer_aes_gbps), cpu.aes_latency_cycles))
        ledger.add(ChannelGroup("npu.gddr", npu.gddr_channels,
                                rate(Fraction(str(npu.gddr_gbps)) / npu.gddr_channels),
                                npu_cycles(npu.gddr_latency_cycles)))
        ledger.add(ChannelGroup("npu.aes", npu.aes_engines, rate(npu.aes_gbps_per_engine),
                                npu_cycles(npu.aes_latency_cycles)))
        ledger.add(ChannelGroup("npu.mac", npu.aes_engines, rate(npu.aes_gbps_per_engine),
                                npu_cycles(npu.mac_latency_cycles)))
        ledger.add(Resource("npu.xfer_aes", rate(link.xfer_aes_gbps),
                            npu_cycles(npu.aes_latency_cycles)))
        ledger.add(Resource("link", rate(link.gbps), link.latency_cycles))
        ledger.add(Resource("link.meta", rate(link.metadata_gbps), link.latency_cycles))
        return ledger
