"""The ten injectable faults, installed as hooks at operator call sites."""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field

from sotest import psopp
from sotest.domain import Partition, Partitioning, SystemStructure
from sotest.envmodel import ConfigurationError
from sotest.generation import PSOPP, SPADA


class FaultId(str, enum.Enum):
    SPADA_F1 = "SPADA_F1"
    SPADA_F2 = "SPADA_F2"
    SPADA_F3 = "SPADA_F3"
    SPADA_F4 = "SPADA_F4"
    PSOPP_F1 = "PSOPP_F1"
    PSOPP_F2 = "PSOPP_F2"
    PSOPP_F3 = "PSOPP_F3"
    PSOPP_F4 = "PSOPP_F4"
    PSOPP_F5 = "PSOPP_F5"
    PSOPP_F5D = "PSOPP_F5D"

    @property
    def algorithm(self) -> str:
        return SPADA if self.value.startswith("SPADA") else PSOPP

    @property
    def directed(self) -> bool:
        """F5D pins the partition count so only exchange moves stay applicable."""
        return self is FaultId.PSOPP_F5D

    @property
    def paired(self) -> "FaultId":
        """Block whose seed this fault reuses, so F5D runs F5's configurations with the count pinned."""
        return FaultId.PSOPP_F5 if self is FaultId.PSOPP_F5D else self


@dataclass(frozen=True)
class FaultConfig:
    t1: int = 2
    t2: int = 100
    spada_f1_avpps: int = 100
    spada_f2_avpps: int = 5
    spada_size: int = 100

    def __post_init__(self):
        if not self.t1 < self.t2:
            raise ValueError("t1 must be below t2")

    def size_condition(self, *sizes: int) -> bool:
        return any(s < self.t1 for s in sizes) or any(s > self.t2 for s in sizes)


@dataclass
class ActivationCounter:
    count: int = 0
    log: list = field(default_factory=list)

    def fire(self, what: str):
        self.count += 1
        self.log.append(what)


def activations(counter: ActivationCounter) -> int:
    return counter.count


def _pick(rng: random.Random, items):
    items = sorted(items)
    return items[rng.randrange(len(items))]


class PsoppFaultHook:
    """Move hook corrupting one operator kind when the size condition holds."""

    def __init__(self, fault: FaultId, cfg: FaultConfig, counter: ActivationCounter, rng: random.Random):
        self.fault, self.cfg, self.counter, self.rng = fault, cfg, counter, rng

    def __call__(self, kind: str, info: dict, parts, _algo_rng):
        f, cfg, rng = self.fault, self.cfg, self.rng
        parts = list(parts)
        if f is FaultId.PSOPP_F1 and kind == psopp.RANDOM_SPLIT:
            l, m = info["L"], info["M"]
            if cfg.size_condition(len(l), len(m)):
                x, y = _pick(rng, l), _pick(rng, m)
                parts[_index(parts, l)] = (l - {x}) | {y}
                self.counter.fire(kind)
        elif f is FaultId.PSOPP_F2 and kind == psopp.RANDOM_JOIN:
            k, l = info["K"], info["L"]
            if cfg.size_condition(len(k), len(l)):
                parts.append(k if rng.random() < 0.5 else l)
                self.counter.fire(kind)
        elif f is FaultId.PSOPP_F3 and kind == psopp.APPROACH_SPLIT:
            l, m = info["L"], info["M"]
            if cfg.size_condition(len(l), len(m)):
                parts.pop(_index(parts, l if rng.random() < 0.5 else m))
                self.counter.fire(kind)
        elif f is FaultId.PSOPP_F4 and kind == psopp.APPROACH_JOIN:
            k, l, m = info["K"], info["L"], info["M"]
            if cfg.size_condition(len(k), len(l)) and len(m) > 1:
                parts[_index(parts, m)] = m - {_pick(rng, m)}
                self.counter.fire(kind)
        elif f in (FaultId.PSOPP_F5, FaultId.PSOPP_F5D) and kind == psopp.APPROACH_EXCHANGE:
            k, l, m, n = info["K"], info["L"], info["M"], info["N"]
            if cfg.size_condition(len(m), len(n)):
                x = _pick(rng, k | l)
                if x in m:
                    parts[_index(parts, n)] = n | {x}
                else:
                    parts[_index(parts, m)] = m | {x}
                self.counter.fire(kind)
        return tuple(parts)


def _index(parts: list, s: frozenset) -> int:
    # new sets are appended by the operators, so search from the end
    for i in range(len(parts) - 1, -1, -1):
        if parts[i] == s:
            return i
    raise ValueError("set not found in position")


class SpadaFaultHooks:
    """Graph-construction and result-transformation faults."""

    def __init__(self, fault: FaultId, cfg: FaultConfig, counter: ActivationCounter, rng: random.Random):
        self.fault, self.cfg, self.counter, self.rng = fault, cfg, counter, rng

    def omit(self, structure: SystemStructure) -> set:
        n = len(structure.avpps)
        hit = (self.fault is FaultId.SPADA_F1 and n > self.cfg.spada_f1_avpps) or (
            self.fault is FaultId.SPADA_F2 and n < self.cfg.spada_f2_avpps
        )
        if not hit or n == 0:
            return set()
        self.counter.fire("omit_avpp")
        return {_pick(self.rng, structure.avpps)}

    def transform(self, result: Partitioning, _algo_rng) -> Partitioning:
        limit = self.cfg.spada_size
        if self.fault not in (FaultId.SPADA_F3, FaultId.SPADA_F4):
            return result
        sets = result.member_sets()
        if not any(len(s) > limit for s in sets):
            return result
        out = []
        for i, s in enumerate(sets):
            if len(s) <= limit:
                out.append(s)
            elif self.fault is FaultId.SPADA_F3:
                keep = self.rng.sample(sorted(s), limit)
                out.append(frozenset(keep))
                self.counter.fire("trim_partition")
            else:
                others = [j for j in range(len(sets)) if j != i]
                if not others:
                    out.append(s)
                    continue
                out.append(sets[others[self.rng.randrange(len(others))]])
                self.counter.fire("replace_partition")
        return Partitioning(tuple(Partition(s) for s in out))


def wrap(controller, fault: FaultId | str | None, cfg: FaultConfig | None, rng: random.Random):
    """Install ``fault`` into ``controller`` (in place) and return it; ``controller.counter`` counts firings."""
    controller.counter = ActivationCounter()
    if fault is None:
        return controller
    fault = FaultId(fault)
    cfg = cfg or FaultConfig()
    if fault.algorithm != controller.kind:
        raise ConfigurationError(f"{fault.value} cannot be injected into {controller.kind}")
    if controller.kind == PSOPP:
        controller.hook = PsoppFaultHook(fault, cfg, controller.counter, rng)
    else:
        hooks = SpadaFaultHooks(fault, cfg, controller.counter, rng)
        if fault in (FaultId.SPADA_F1, FaultId.SPADA_F2):
            controller.omit_hook = hooks.omit
        else:
            controller.transform = hooks.transform
    controller.fault = fault
    return controller
