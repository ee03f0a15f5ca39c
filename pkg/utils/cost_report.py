"""
🔐 TensorTEE Simulator - Cost Report
Contabilidade de tráfego de DRAM e latência de criptografia por acesso
"""

from dataclasses import asdict, dataclass, fields
from typing import Dict, Iterable

import config


@dataclass
class CostReport:
    """Custos de um acesso (ou a soma de vários)"""
    op: str = ""
    pa: int = 0
    data_bytes: int = 0
    vn_bytes: int = 0
    mac_bytes: int = 0
    tree_bytes: int = 0
    bitmap_bytes: int = 0
    cycles: int = 0
    aes_bytes: int = 0
    mac_ops: int = 0
    hashes: int = 0
    vn_on_chip: bool = False
    accesses: int = 1

    @property
    def metadata_bytes(self) -> int:
        return self.vn_bytes + self.mac_bytes + self.tree_bytes + self.bitmap_bytes

    @property
    def offchip_vn_bytes(self) -> int:
        """Tráfego de VN + árvore (o que a Meta Table elimina)"""
        return self.vn_bytes + self.tree_bytes

    @property
    def total_bytes(self) -> int:
        return self.data_bytes + self.metadata_bytes

    def add(self, other: "CostReport") -> "CostReport":
        """Acumula outro relatório neste (op/pa do primeiro são mantidos)"""
        self.data_bytes += other.data_bytes
        self.vn_bytes += other.vn_bytes
        self.mac_bytes += other.mac_bytes
        self.tree_bytes += other.tree_bytes
        self.bitmap_bytes += other.bitmap_bytes
        self.cycles += other.cycles
        self.aes_bytes += other.aes_bytes
        self.mac_ops += other.mac_ops
        self.hashes += other.hashes
        self.accesses += other.accesses
        return self

    def absorb_metadata(self, other: "CostReport") -> "CostReport":
        """Soma apenas tráfego de metadados e hashes (latência fica com o chamador)"""
        self.vn_bytes += other.vn_bytes
        self.mac_bytes += other.mac_bytes
        self.tree_bytes += other.tree_bytes
        self.bitmap_bytes += other.bitmap_bytes
        self.hashes += other.hashes
        self.aes_bytes += other.aes_bytes
        self.mac_ops += other.mac_ops
        return self

    def to_row(self) -> Dict[str, object]:
        return {
            "op": self.op,
            "pa": f"{self.pa:#x}" if self.pa else "",
            "data_bytes": self.data_bytes,
            "vn_bytes": self.vn_bytes,
            "mac_bytes": self.mac_bytes,
            "tree_bytes": self.tree_bytes,
            "cycles": self.cycles,
        }

    def to_dict(self) -> Dict[str, object]:
        payload = asdict(self)
        payload["metadata_bytes"] = self.metadata_bytes
        return payload

    @staticmethod
    def total(reports: Iterable["CostReport"], op: str = "total") -> "CostReport":
        summary = CostReport(op=op, accesses=0)
        for report in reports:
            summary.add(report)
        return summary

    @staticmethod
    def lines(num_bytes: int) -> float:
        return num_bytes / config.CACHELINE_BYTES


COST_FIELDS = tuple(f.name for f in fields(CostReport))
