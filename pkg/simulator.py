"""
🔐 TensorTEE Simulator
Simulador de proteção de memória em granularidade de tensor para computação CPU+NPU
"""

import argparse
import itertools
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

from dotenv import load_dotenv

import config
from storage import CsvQueries, MetricsQueries, TraceQueries, get_results_store
from utils.errors import (AttestationFailure, ConfigError, IntegrityFault, TransferRejected)
from utils.report_tables import ReportTables
from utils.settings import MODE_NAMES, SimSettings
from workloads.generators import PARAM_KINDS

# Carrega variáveis de ambiente
load_dotenv()

logger = logging.getLogger("TensorTEE.CLI")

TRACE_SCENARIOS = ("adam", "gemm", "stream", "mixed")


# ═══════════════════════════════════════════════════════════════
# ARGUMENTOS
# ═══════════════════════════════════════════════════════════════

def _pairs(items: Optional[Sequence[str]], option: str) -> Dict[str, str]:
    parsed = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"{option} espera CHAVE=VALOR, recebeu {item!r}")
        parsed[key.strip()] = value.strip()
    return parsed


def expand_sweep(items: Optional[Sequence[str]]) -> List[Dict[str, str]]:
    """--sweep a=1,2 --sweep b=x,y → produto cartesiano dos pontos"""
    axes = _pairs(items, "--sweep")
    if not axes:
        return [{}]
    names = list(axes)
    values = [[v for v in axes[name].split(",") if v] for name in names]
    for name, options in zip(names, values):
        if not options:
            raise ConfigError(f"--sweep {name} sem valores")
    return [dict(zip(names, combo)) for combo in itertools.product(*values)]


def run_label(scenario: str, mode: str, point: Dict[str, str]) -> str:
    parts = [scenario, mode] + [f"{k}={v}" for k, v in sorted(point.items())
                                if k not in ("mode", "mode.name")]
    return "-".join(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simulator.py",
                                     description="Simulador TensorTEE (CPU+NPU)")
    parser.add_argument("--log-level", default=os.getenv("TENSORTEE_LOG_LEVEL", "INFO"))
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="executa um cenário, um sweep ou uma campanha de ataque")
    run.add_argument("--config", help="JSON com seções cpu/npu/link/crypto/workload/mode")
    run.add_argument("--mode", choices=MODE_NAMES)
    run.add_argument("--scenario", help="zero-offload, adam, gemm ou npu-stream")
    run.add_argument("--set", action="append", metavar="CHAVE=VALOR", help="override pontual")
    run.add_argument("--sweep", action="append", metavar="CHAVE=V1,V2", help="eixo do sweep")
    run.add_argument("--functional", action="store_true", help="modelo funcional completo")
    run.add_argument("--attack", help="bitflip, replay, vntamper, npu-bitflip ou vn-fuzz")
    run.add_argument("--trials", type=int, default=100)
    run.add_argument("--inject-fault", action="store_true",
                     help="adultera um gradiente na memória da NPU durante a 1ª iteração")
    run.add_argument("--expect-fault", action="store_true",
                     help="falha de integridade é o resultado esperado (sai com 0)")
    run.add_argument("--out", default=None, help="diretório de resultados")

    report = sub.add_parser("report", help="tabelas no formato das figuras a partir do metrics.json")
    report.add_argument("--out", default=None)

    dump = sub.add_parser("trace-dump", help="gera e grava um trace de acesso")
    dump.add_argument("--scenario", choices=TRACE_SCENARIOS, default="adam")
    dump.add_argument("--config")
    dump.add_argument("--file", help="nome do arquivo (.gz comprime)")
    dump.add_argument("--head", type=int, default=10, help="registros mostrados no terminal")
    dump.add_argument("--out", default=None)

    selftest = sub.add_parser("selftest", help="confere os vetores de referência da criptografia")
    selftest.add_argument("--freeze", action="store_true", help="grava os vetores se ainda não existem")
    return parser


# ═══════════════════════════════════════════════════════════════
# RUN
# ═══════════════════════════════════════════════════════════════

def _gradient_tamper(platform, iteration: int):
    """Vira um bit da primeira linha do gradiente do parâmetro 0 na 1ª iteração"""
    if iteration == 1:
        platform.npu.inject_tamper(PARAM_KINDS.index("g"), 0, 5)
        logger.warning("⚠️ gradiente do parâmetro 0 adulterado na memória da NPU")


def cmd_run(args) -> int:
    from workloads.campaigns import run_campaign
    from workloads.scenarios import run_scenario

    settings = SimSettings.load(args.config)
    overrides: Dict[str, object] = dict(_pairs(args.set, "--set"))
    if args.scenario:
        overrides["workload.scenario"] = args.scenario
    if args.functional or args.inject_fault:
        overrides["workload.functional"] = True
    settings = settings.with_overrides(overrides)
    get_results_store(args.out).ensure()

    if args.attack:
        mode = args.mode or settings.mode.name
        result = run_campaign(settings, args.attack, args.trials, mode)
        MetricsQueries.save_run(f"attack-{args.attack}-{result.mode}",
                                {"scenario": "attack", "mode": result.mode,
                                 "metrics": result.to_dict()})
        print(f"🔐 {result.summary()}")
        return config.EXIT_OK if result.clean else config.EXIT_INTEGRITY_FAULT

    scenario = settings.workload.scenario
    if args.inject_fault and scenario != "zero-offload":
        raise ConfigError("--inject-fault só se aplica ao cenário zero-offload")
    extra = {"on_backward": _gradient_tamper} if args.inject_fault else {}
    faults = 0
    for point in expand_sweep(args.sweep):
        point_overrides = dict(point)
        mode = point_overrides.pop("mode", None) or args.mode or settings.mode.name
        point_settings = settings.with_overrides({**point_overrides, "mode.name": mode})
        label = run_label(scenario, mode, point)
        print(f"🔄 {label}")
        try:
            outcome = run_scenario(point_settings, mode, **extra)
        except IntegrityFault as exc:
            faults += 1
            if not args.expect_fault:
                logger.error("❌ falha de integridade em %s: %s", label, exc)
                return config.EXIT_INTEGRITY_FAULT
            print(f"   ✅ falha esperada detectada: {exc}")
            MetricsQueries.save_run(label, {"scenario": scenario, "mode": mode, "sweep": point,
                                            "fault": {"kind": exc.kind.value, "detail": str(exc)}})
            continue
        MetricsQueries.save_run(label, {"scenario": scenario, "mode": mode, "sweep": point,
                                        "seed": point_settings.crypto.seed,
                                        "metrics": outcome.metrics})
        CsvQueries.save_outcome(label, outcome.cost_rows, outcome.npu_rows, outcome.transfer_rows)
        cycles = outcome.metrics.get("total_cycles", outcome.metrics.get("cycles"))
        print(f"   ✅ {cycles} ciclos")

    if args.expect_fault and not faults:
        logger.error("❌ --expect-fault: nenhuma falha de integridade ocorreu")
        return config.EXIT_INTEGRITY_FAULT
    return config.EXIT_OK


# ═══════════════════════════════════════════════════════════════
# REPORT / TRACE-DUMP / SELFTEST
# ═══════════════════════════════════════════════════════════════

def cmd_report(args) -> int:
    store = get_results_store(args.out)
    tables = ReportTables.build_all(MetricsQueries.runs(), str(store.root))
    for name, rows in tables.items():
        CsvQueries.write(f"report_{name}.csv", ReportTables.columns(rows), rows)
        print(ReportTables.render(name, rows))
        print()
    print(f"✅ {len(tables)} tabelas gravadas em {store.root}")
    return config.EXIT_OK


def cmd_trace_dump(args) -> int:
    from workloads.generators import (ScenarioConfig, gen_adam_trace, gen_gemm_trace,
                                      gen_mixed_trace, gen_stream_trace)

    settings = SimSettings.load(args.config)
    workload = settings.workload
    if args.scenario == "adam":
        records = gen_adam_trace(ScenarioConfig.from_settings(settings))
    elif args.scenario == "gemm":
        records = gen_gemm_trace(workload.gemm_dim, workload.gemm_dim, workload.gemm_dim,
                                 workload.gemm_tile)
    elif args.scenario == "stream":
        records = gen_stream_trace(config.TENSOR_BASE_VA, 1024, passes=2)
    else:
        regions = [(config.TENSOR_BASE_VA + i * 64 * config.PAGE_BYTES, 64) for i in range(4)]
        records = gen_mixed_trace(settings.crypto.seed, regions, 10_000)
    get_results_store(args.out)
    name = args.file or f"trace-{args.scenario}.txt"
    written = TraceQueries.dump(name, records)
    for record in TraceQueries.load(name, limit=args.head):
        print(f"   {record.cycle_hint} {record.core_id} {record.kind} {record.va:#x}")
    print(f"✅ {written} registros gravados em {get_results_store().path(name)}")
    return config.EXIT_OK


def cmd_selftest(args) -> int:
    from freeze_golden_vectors import GOLDEN_PATH, compute_golden_vectors, freeze, load_golden_vectors

    if args.freeze:
        freeze()
    if not GOLDEN_PATH.exists():
        print(f"⚠️  {GOLDEN_PATH} ausente; rode selftest --freeze")
        return config.EXIT_CONFIG_ERROR
    frozen = load_golden_vectors()
    seed = frozen[0]["seed"] if frozen else config.DEFAULT_SEED
    current = compute_golden_vectors(seed)
    if len(frozen) != len(current):
        print(f"❌ {len(frozen)} vetores congelados, {len(current)} esperados")
        return config.EXIT_INTEGRITY_FAULT
    mismatched = [str(index) for index, (old, new) in enumerate(zip(frozen, current)) if old != new]
    if mismatched:
        print(f"❌ vetores divergentes: {', '.join(mismatched)}")
        return config.EXIT_INTEGRITY_FAULT
    print("✅ vetores de referência conferem")
    return config.EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "report": cmd_report,
    "trace-dump": cmd_trace_dump,
    "selftest": cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Função principal"""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    print(f"\n{'=' * 50}")
    print(f"🔐 TensorTEE Simulator - {args.command}")
    print(f"{'=' * 50}")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"❌ Erro de configuração: {exc}")
        return config.EXIT_CONFIG_ERROR
    except (AttestationFailure, TransferRejected) as exc:
        print(f"❌ Atestação falhou: {exc}")
        return config.EXIT_ATTESTATION_FAILURE
    except IntegrityFault as exc:
        print(f"❌ Falha de integridade: {exc}")
        return config.EXIT_INTEGRITY_FAULT


if __name__ == "__main__":
    sys.exit(main())
