"""
🔐 TensorTEE Simulator - Event Loop
Relógio global em ciclos de CPU e fila de eventos discretos
"""

import heapq
import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from utils.cost_report import CostReport
from utils.errors import SimulationError

logger = logging.getLogger("TensorTEE.Engine")


@dataclass
class SimEvent:
    event_id: int
    fire_cycle: int
    kind: str
    payload: Any = None
    parent_id: Optional[int] = None
    callback: Optional[Callable[["SimEvent"], None]] = None


@dataclass
class Metrics:
    """Agregado de uma execução do loop"""
    cycles: int = 0
    events_fired: int = 0
    counters: Counter = field(default_factory=Counter)
    costs: CostReport = field(default_factory=lambda: CostReport(op="total", accesses=0))
    values: Dict[str, Any] = field(default_factory=dict)

    def record_cost(self, report: CostReport):
        self.costs.add(report)

    def count(self, name: str, amount: int = 1):
        self.counters[name] += amount

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cycles": self.cycles,
            "events_fired": self.events_fired,
            "counters": dict(self.counters),
            "costs": self.costs.to_dict(),
            **self.values,
        }


class EventLoop:
    """
    Fila de prioridade por (ciclo, ordem de inserção).
    É a única dona do estado dos módulos durante a simulação: os cenários
    avançam por callbacks de evento e a causalidade é conferida a cada disparo.
    """

    def __init__(self, debug: bool = False):
        self.now = 0
        self.debug = debug
        self.metrics = Metrics()
        self._queue: List[Tuple[int, int, SimEvent]] = []
        self._ids = itertools.count(1)
        self._fire_cycles: Dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._queue)

    def schedule(self, fire_cycle: int, kind: str,
                 callback: Optional[Callable[[SimEvent], None]] = None,
                 payload: Any = None, parent: Optional[SimEvent] = None) -> int:
        """Agenda um evento; agendar no passado ou antes do pai é bug do chamador"""
        if fire_cycle < self.now:
            raise SimulationError(f"evento '{kind}' agendado no passado ({fire_cycle} < {self.now})")
        parent_id = parent.event_id if parent is not None else None
        if parent is not None and fire_cycle < parent.fire_cycle:
            raise SimulationError(f"evento '{kind}' precede o pai {parent_id}")
        event = SimEvent(next(self._ids), int(fire_cycle), kind, payload, parent_id, callback)
        heapq.heappush(self._queue, (event.fire_cycle, event.event_id, event))
        return event.event_id

    def run_until(self, cycle: Optional[int] = None) -> Metrics:
        """Executa até o ciclo dado ou até a fila esvaziar"""
        while self._queue and (cycle is None or self._queue[0][0] <= cycle):
            fire_cycle, _, event = heapq.heappop(self._queue)
            if event.parent_id is not None and self._fire_cycles.get(event.parent_id, 0) > fire_cycle:
                raise SimulationError(f"causalidade violada pelo evento {event.event_id}")
            self.now = fire_cycle
            self._fire_cycles[event.event_id] = fire_cycle
            self.metrics.events_fired += 1
            self.metrics.counters[f"event.{event.kind}"] += 1
            if self.debug:
                logger.debug("⏱️ %d %s", fire_cycle, event.kind)
            if event.callback is not None:
                event.callback(event)
        if cycle is not None:
            self.now = max(self.now, cycle)
        self.metrics.cycles = max(self.metrics.cycles, self.now)
        return self.metrics

    def run_chain(self, kind: str, count: int, step: Callable[[int, int], int],
                  start_cycle: int = 0) -> int:
        """
        Executa `count` passos encadeados: `step(indice, ciclo)` devolve o ciclo
        de término e o passo seguinte é agendado nele. Devolve o fim do último.
        """
        last = {"end": start_cycle}

        def fire(event: SimEvent):
            end = step(event.payload, event.fire_cycle)
            last["end"] = end
            if event.payload + 1 < count:
                self.schedule(end, kind, fire, payload=event.payload + 1, parent=event)

        if count > 0:
            self.schedule(start_cycle, kind, fire, payload=0)
            self.run_until()
        self.advance_to(last["end"])
        return last["end"]

    def advance_to(self, cycle: int):
        """Move o relógio para frente depois que a fila esvaziou"""
        if cycle > self.now:
            self.now = cycle
            self.metrics.cycles = max(self.metrics.cycles, cycle)
