"""
🔐 TensorTEE Simulator - Report Tables
Tabelas no formato das figuras a partir do metrics.json (funções puras das métricas)
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple

import config
from utils.errors import ConfigError

EXPECTED_FILES = (config.METRICS_FILE,)
MODE_ORDER = ("nonsecure", "sgx-mgx", "tensortee", "blocking", "delayed")

Row = Dict[str, Any]


class ReportTables:
    """Cada método recebe o dicionário runs do metrics.json e devolve linhas"""

    @staticmethod
    def progress_bar(fraction: float, length: int = 10) -> str:
        """Barra de progresso visual (valores fora de [0, 1] são saturados)"""
        fraction = min(max(fraction, 0.0), 1.0)
        filled = int(fraction * length)
        return "[" + "█" * filled + "░" * (length - filled) + "]"

    @staticmethod
    def require(runs: Dict[str, Any], directory: str = "."):
        if not runs:
            listed = ", ".join(EXPECTED_FILES)
            raise ConfigError(f"nenhuma métrica em {directory}; arquivos esperados: {listed}")

    @staticmethod
    def _cycles(run: Dict[str, Any]) -> Optional[int]:
        metrics = run.get("metrics", {})
        for key in ("total_cycles", "cycles"):
            if key in metrics:
                return metrics[key]
        return None

    @staticmethod
    def _point(run: Dict[str, Any]) -> str:
        """Ponto do sweep sem o modo (agrupa as execuções comparáveis)"""
        sweep = {k: v for k, v in run.get("sweep", {}).items() if k not in ("mode", "mode.name")}
        parts = [run.get("scenario", "?")] + [f"{k}={v}" for k, v in sorted(sweep.items())]
        return " ".join(parts)

    @staticmethod
    def _grouped(runs: Dict[str, Any]) -> Dict[str, Dict[str, Dict[str, Any]]]:
        groups: Dict[str, Dict[str, Dict[str, Any]]] = {}
        for run in runs.values():
            groups.setdefault(ReportTables._point(run), {})[run.get("mode", "?")] = run
        return groups

    # ═══════════════════════════════════════════════════════════════
    # DESEMPENHO NORMALIZADO
    # ═══════════════════════════════════════════════════════════════

    @staticmethod
    def normalized_performance(runs: Dict[str, Any]) -> List[Row]:
        """Desempenho relativo ao NonSecure (1.0) por ponto; uma coluna por modo"""
        rows = []
        for point, by_mode in sorted(ReportTables._grouped(runs).items()):
            base = by_mode.get("nonsecure")
            base_cycles = ReportTables._cycles(base) if base else None
            row: Row = {"point": point}
            for mode in MODE_ORDER:
                run = by_mode.get(mode)
                if run is None:
                    continue
                cycles = ReportTables._cycles(run)
                label = config.MODE_LABELS.get(mode, mode)
                if base_cycles and cycles:
                    row[label] = round(base_cycles / cycles, 4)
                else:
                    row[label] = None
            rows.append(row)
        return rows

    @staticmethod
    def breakdown(runs: Dict[str, Any]) -> List[Row]:
        rows = []
        for label, run in sorted(runs.items()):
            parts = run.get("metrics", {}).get("breakdown")
            if not parts:
                continue
            rows.append({
                "run": label,
                "mode": config.MODE_LABELS.get(run.get("mode"), run.get("mode")),
                "npu_compute": round(parts["npu_compute"], 4),
                "cpu_compute": round(parts["cpu_compute"], 4),
                "communication": round(parts["communication"], 4),
            })
        return rows

    # ═══════════════════════════════════════════════════════════════
    # TENANALYZER
    # ═══════════════════════════════════════════════════════════════

    @staticmethod
    def hit_rate_vs_iteration(runs: Dict[str, Any]) -> List[Row]:
        rows = []
        for label, run in sorted(runs.items()):
            metrics = run.get("metrics", {})
            steps = metrics.get("iterations") or metrics.get("passes") or []
            for step in steps:
                if "hit_in" not in step:
                    continue
                rows.append({
                    "run": label,
                    "iteration": step.get("iteration", step.get("pass")),
                    "hit_in": round(step["hit_in"], 4),
                    "hit_boundary": round(step["hit_boundary"], 4),
                    "hit_all": round(step["hit_all"], 4),
                    "bar": ReportTables.progress_bar(step["hit_in"]),
                })
        return rows

    # ═══════════════════════════════════════════════════════════════
    # NPU E TRANSFERÊNCIAS
    # ═══════════════════════════════════════════════════════════════

    @staticmethod
    def mac_granularity(runs: Dict[str, Any]) -> List[Row]:
        """Tradeoff de granularidade: overhead de tempo contra bytes de MAC armazenados"""
        rows = []
        for label, run in runs.items():
            metrics = run.get("metrics", {})
            if "verify_mode" not in metrics:
                continue
            delayed = metrics["verify_mode"] == "DelayedTensor"
            rows.append({
                "run": label,
                "verify_mode": metrics["verify_mode"],
                "granularity": "tensor" if delayed else metrics["mac_granularity"],
                "overhead": round(metrics["overhead"], 4),
                "mac_storage_bytes": metrics["mac_storage_bytes"],
            })

        def order(row: Row) -> Tuple[int, int]:
            granularity = row["granularity"]
            return (1, 0) if granularity == "tensor" else (0, int(granularity))

        return sorted(rows, key=order)

    @staticmethod
    def transfers(runs: Dict[str, Any]) -> List[Row]:
        rows = []
        for label, run in sorted(runs.items()):
            metrics = run.get("metrics", {})
            if "transfer_bytes_link" not in metrics:
                continue
            iterations = metrics.get("iterations", [])
            rows.append({
                "run": label,
                "mode": config.MODE_LABELS.get(run.get("mode"), run.get("mode")),
                "bytes_link": metrics["transfer_bytes_link"],
                "bytes_aes": metrics["transfer_bytes_aes"],
                "communication_cycles": sum(it.get("communication", 0) for it in iterations),
                "exposed_cycles": sum(it.get("exposed_communication", 0) for it in iterations),
            })
        return rows

    # ═══════════════════════════════════════════════════════════════
    # MONTAGEM
    # ═══════════════════════════════════════════════════════════════

    @staticmethod
    def build_all(runs: Dict[str, Any], directory: str = ".") -> Dict[str, List[Row]]:
        ReportTables.require(runs, directory)
        tables = {
            "performance": ReportTables.normalized_performance(runs),
            "breakdown": ReportTables.breakdown(runs),
            "hit_rate": ReportTables.hit_rate_vs_iteration(runs),
            "mac_granularity": ReportTables.mac_granularity(runs),
            "transfers": ReportTables.transfers(runs),
        }
        return {name: rows for name, rows in tables.items() if rows}

    @staticmethod
    def columns(rows: Sequence[Row]) -> List[str]:
        seen: List[str] = []
        for row in rows:
            for key in row:
                if key not in seen:
                    seen.append(key)
        return seen

    @staticmethod
    def render(name: str, rows: Sequence[Row]) -> str:
        """Tabela em texto alinhado para o terminal"""
        columns = ReportTables.columns(rows)
        cells = [[("-" if row.get(c) is None else str(row.get(c))) for c in columns] for row in rows]
        widths = [max(len(c), *(len(line[i]) for line in cells)) for i, c in enumerate(columns)]
        lines = [f"── {name} ──",
                 "  ".join(c.ljust(w) for c, w in zip(columns, widths))]
        lines += ["  ".join(v.ljust(w) for v, w in zip(line, widths)) for line in cells]
        return "\n".join(lines)
