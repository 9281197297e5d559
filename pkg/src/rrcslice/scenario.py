"""
Scenario documents.

A scenario is a YAML mapping. Rates may be written as fractions (``1/1000``)
or decimals. Minimal example::

    schema_version: 1
    seed: 7
    duration_ms: 1000000
    mode: det                  # det | bench
    controller:
      n_d: 10
      lambda: 0.5
      t_max_ms: 300
      hyper: {alpha_lr: 0.1, gamma: 0.9, epsilon: 0.3}
    slices:
      - {rat: NbIotCpOpt, drx: {n_c: 1, n_on: 1, n_in: 0, n_so: 0}}
    ues:
      - ue_id: 1
        slice: 0               # index into ``slices``
        traffic:
          - {lambda_idt: 1/1000, lambda_size: 1/600, active_from: 0}

Optional keys: ``service_rate`` (bytes per subframe), ``power_mw`` (four
state powers), ``commands`` (southbound commands fired at given times) and
``benchmark`` (``slice_counts``, ``repetitions``) for bench mode.

:func:`load_scenario` and :func:`parse_scenario` are the only places where
documents are checked, so ``validate`` and ``run`` always agree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import yaml

from .drx import DEFAULT_SERVICE_RATE, DrxParams, PowerProfile
from .errors import InvalidDrxParams, InvalidScenario
from .qlearn import ControllerConfig, Hyper
from .rrc import RatFlavor
from .slicing import Op
from .traffic import TrafficProfile, TrafficSchedule

SCHEMA_VERSION = 1
MODES = ("det", "bench")


@dataclass(frozen=True)
class SliceSpec:
    rat: RatFlavor
    drx: DrxParams


@dataclass(frozen=True)
class UeSpec:
    ue_id: int
    slice: int
    schedule: TrafficSchedule


@dataclass(frozen=True)
class CommandSpec:
    at: int
    op: Op
    slice_id: int = 0
    rat: RatFlavor | None = None
    drx: DrxParams | None = None
    ue_id: int | None = None


@dataclass(frozen=True)
class BenchSpec:
    slice_counts: tuple[int, ...] = (1, 2, 3)
    repetitions: int = 100


@dataclass
class Scenario:
    seed: int
    duration: int
    slices: list[SliceSpec]
    ues: list[UeSpec]
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    mode: str = "det"
    service_rate: int = DEFAULT_SERVICE_RATE
    power: PowerProfile = field(default_factory=PowerProfile)
    commands: list[CommandSpec] = field(default_factory=list)
    bench: BenchSpec = field(default_factory=BenchSpec)

    def __post_init__(self):
        check_scenario(self)

    def with_seed(self, seed: int) -> "Scenario":
        from dataclasses import replace
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        """Plain-data echo, suitable for run metadata and for re-parsing."""
        c = self.controller
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "duration_ms": self.duration,
            "mode": self.mode,
            "service_rate": self.service_rate,
            "power_mw": list(self.power.p),
            "controller": {
                "n_d": c.n_d, "lambda": c.lam, "t_max_ms": c.t_max,
                "state_mode": c.state_mode, "pin_inactivity": c.pin_inactivity,
                "enabled": c.enabled, "hyper": vars(c.hyper).copy(),
            },
            "slices": [{"rat": s.rat.name, "drx": _drx_dict(s.drx)} for s in self.slices],
            "ues": [{"ue_id": u.ue_id, "slice": u.slice,
                     "traffic": [{"lambda_idt": p.lambda_idt, "lambda_size": p.lambda_size,
                                  "active_from": p.active_from} for p in u.schedule]}
                    for u in self.ues],
            "commands": [_command_dict(c) for c in self.commands],
            "benchmark": {"slice_counts": list(self.bench.slice_counts),
                          "repetitions": self.bench.repetitions},
        }


def _drx_dict(p: DrxParams) -> dict:
    return {"n_c": p.n_c, "n_on": p.n_on, "n_in": p.n_in, "n_so": p.n_so}


def _command_dict(c: CommandSpec) -> dict:
    d: dict[str, Any] = {"at_ms": c.at, "op": c.op.name.lower(), "slice_id": c.slice_id}
    if c.rat is not None:
        d["rat"] = c.rat.name
    if c.drx is not None:
        d["drx"] = _drx_dict(c.drx)
    if c.ue_id is not None:
        d["ue_id"] = c.ue_id
    return d


def check_scenario(sc: Scenario) -> None:
    """Cross-field checks shared by the parser and direct construction."""
    if not isinstance(sc.seed, int) or not 0 <= sc.seed < 2**64:
        raise InvalidScenario("seed", "must be an unsigned 64-bit integer")
    if not isinstance(sc.duration, int) or sc.duration <= 0:
        raise InvalidScenario("duration_ms", "must be a positive integer")
    if sc.mode not in MODES:
        raise InvalidScenario("mode", f"must be one of {MODES}")
    if sc.service_rate < 1:
        raise InvalidScenario("service_rate", "must be at least 1 byte per subframe")
    if sc.controller.t_max <= 0:
        raise InvalidScenario("controller.t_max_ms", "T_max must be positive")
    if not 0.0 <= sc.controller.lam <= 1.0:
        raise InvalidScenario("controller.lambda", "weight must lie in [0, 1]")
    seen = set()
    for i, ue in enumerate(sc.ues):
        if not 0 <= ue.slice < len(sc.slices):
            raise InvalidScenario(f"ues[{i}].slice", f"no slice entry {ue.slice}")
        if ue.ue_id in seen:
            raise InvalidScenario(f"ues[{i}].ue_id", f"duplicate ue_id {ue.ue_id}")
        seen.add(ue.ue_id)
    for i, c in enumerate(sc.commands):
        if not 0 <= c.at < sc.duration:
            raise InvalidScenario(f"commands[{i}].at_ms", "must fall inside the run")
    if sc.mode == "bench" and sc.bench.repetitions < 30:
        raise InvalidScenario("benchmark.repetitions", "bench mode needs at least 30")


# -- parsing -------------------------------------------------------------------

def _num(value, where: str) -> float:
    if isinstance(value, bool):
        raise InvalidScenario(where, "expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.replace(" ", "")))
        except (ValueError, ZeroDivisionError):
            pass
    raise InvalidScenario(where, f"expected a number or fraction, got {value!r}")


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidScenario(where, f"expected an integer, got {value!r}")
    return value


def _map(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise InvalidScenario(where, "expected a mapping")
    return value


def _list(value, where: str) -> list:
    if not isinstance(value, list):
        raise InvalidScenario(where, "expected a list")
    return value


def _rat(value, where: str) -> RatFlavor:
    try:
        return RatFlavor[value] if isinstance(value, str) else RatFlavor(value)
    except (KeyError, ValueError):
        names = ", ".join(r.name for r in RatFlavor)
        raise InvalidScenario(where, f"unknown rat {value!r} (expected one of {names})") from None


def _drx(value, where: str) -> DrxParams:
    d = _map(value, where)
    unknown = set(d) - {"n_c", "n_on", "n_in", "n_so"}
    if unknown:
        raise InvalidScenario(f"{where}.{sorted(unknown)[0]}", "unknown key")
    try:
        return DrxParams(_int(d.get("n_c"), f"{where}.n_c"), _int(d.get("n_on"), f"{where}.n_on"),
                         _int(d.get("n_in", 0), f"{where}.n_in"),
                         _int(d.get("n_so", 0), f"{where}.n_so"))
    except InvalidDrxParams as exc:
        raise InvalidScenario(where, str(exc)) from None


def _controller(value, where: str) -> ControllerConfig:
    d = _map(value, where)
    known = {"n_d", "lambda", "t_max_ms", "state_mode", "pin_inactivity", "enabled", "hyper"}
    unknown = set(d) - known
    if unknown:
        raise InvalidScenario(f"{where}.{sorted(unknown)[0]}", "unknown key")
    t_max = _num(d.get("t_max_ms", 300), f"{where}.t_max_ms")
    if t_max <= 0:
        raise InvalidScenario(f"{where}.t_max_ms", "T_max must be positive")
    n_d = _int(d.get("n_d", 10), f"{where}.n_d")
    if n_d < 1:
        raise InvalidScenario(f"{where}.n_d", "N_d must be at least 1")
    mode = d.get("state_mode", "counts")
    if mode not in ("counts", "sequence"):
        raise InvalidScenario(f"{where}.state_mode", "must be 'counts' or 'sequence'")
    pin = d.get("pin_inactivity")
    if pin is not None and not 0 <= _int(pin, f"{where}.pin_inactivity") < 8:
        raise InvalidScenario(f"{where}.pin_inactivity", "inactivity index must be 0..7")
    hyper_d = _map(d.get("hyper", {}), f"{where}.hyper")
    fields = set(Hyper.__dataclass_fields__)
    for k in hyper_d:
        if k not in fields:
            raise InvalidScenario(f"{where}.hyper.{k}", "unknown hyperparameter")
    try:
        hyper = Hyper(**{k: (_int(v, f"{where}.hyper.{k}") if isinstance(getattr(Hyper(), k), int)
                             else _num(v, f"{where}.hyper.{k}")) for k, v in hyper_d.items()})
    except ValueError as exc:
        raise InvalidScenario(f"{where}.hyper", str(exc)) from None
    return ControllerConfig(n_d=n_d, lam=_num(d.get("lambda", 0.5), f"{where}.lambda"),
                            t_max=t_max, hyper=hyper, state_mode=mode, pin_inactivity=pin,
                            enabled=bool(d.get("enabled", True)))


def _schedule(value, where: str) -> TrafficSchedule:
    profiles = []
    for j, p in enumerate(_list(value, where)):
        w = f"{where}[{j}]"
        p = _map(p, w)
        try:
            profiles.append(TrafficProfile(_num(p.get("lambda_idt"), f"{w}.lambda_idt"),
                                           _num(p.get("lambda_size"), f"{w}.lambda_size"),
                                           _int(p.get("active_from", 0), f"{w}.active_from")))
        except ValueError as exc:
            if isinstance(exc, InvalidScenario):
                raise
            raise InvalidScenario(w, str(exc)) from None
    try:
        return TrafficSchedule(profiles)
    except ValueError as exc:
        raise InvalidScenario(where, str(exc)) from None


def _command(value, where: str) -> CommandSpec:
    d = _map(value, where)
    op_name = str(d.get("op", "")).lower()
    ops = {o.name.lower(): o for o in Op}
    if op_name not in ops:
        raise InvalidScenario(f"{where}.op", f"expected one of {sorted(ops)}")
    op = ops[op_name]
    rat = _rat(d["rat"], f"{where}.rat") if "rat" in d else None
    drx = _drx(d["drx"], f"{where}.drx") if "drx" in d else None
    ue_id = _int(d["ue_id"], f"{where}.ue_id") if "ue_id" in d else None
    slice_id = _int(d.get("slice_id", 0), f"{where}.slice_id")
    if op is Op.Add and rat is None:
        raise InvalidScenario(f"{where}.rat", "add needs a rat")
    if op is not Op.Add and slice_id < 1:
        raise InvalidScenario(f"{where}.slice_id", "modify and delete need a slice_id >= 1")
    return CommandSpec(_int(d.get("at_ms"), f"{where}.at_ms"), op, slice_id, rat, drx, ue_id)


TOP_KEYS = {"schema_version", "seed", "duration_ms", "mode", "service_rate", "power_mw",
            "controller", "slices", "ues", "commands", "benchmark"}


def parse_scenario(doc: Any) -> Scenario:
    d = _map(doc, "<document>")
    unknown = set(d) - TOP_KEYS
    if unknown:
        raise InvalidScenario(sorted(unknown)[0], "unknown key")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise InvalidScenario("schema_version", f"must be {SCHEMA_VERSION}")
    for key in ("seed", "duration_ms", "slices"):
        if key not in d:
            raise InvalidScenario(key, "missing")
    slices = []
    for i, s in enumerate(_list(d["slices"], "slices")):
        s = _map(s, f"slices[{i}]")
        slices.append(SliceSpec(_rat(s.get("rat"), f"slices[{i}].rat"),
                                _drx(s.get("drx", {"n_c": 1, "n_on": 1}), f"slices[{i}].drx")))
    ues = []
    for i, u in enumerate(_list(d.get("ues", []), "ues")):
        u = _map(u, f"ues[{i}]")
        ues.append(UeSpec(_int(u.get("ue_id"), f"ues[{i}].ue_id"),
                          _int(u.get("slice", 0), f"ues[{i}].slice"),
                          _schedule(u.get("traffic"), f"ues[{i}].traffic")))
    power = d.get("power_mw")
    if power is None:
        power_profile = PowerProfile()
    else:
        vals = [_num(v, "power_mw") for v in _list(power, "power_mw")]
        try:
            power_profile = PowerProfile(tuple(vals))
        except ValueError as exc:
            raise InvalidScenario("power_mw", str(exc)) from None
    b = _map(d.get("benchmark", {}), "benchmark")
    bench = BenchSpec(tuple(_int(x, "benchmark.slice_counts")
                            for x in _list(b.get("slice_counts", [1, 2, 3]), "benchmark.slice_counts")),
                      _int(b.get("repetitions", 100), "benchmark.repetitions"))
    if any(k < 1 for k in bench.slice_counts):
        raise InvalidScenario("benchmark.slice_counts", "slice counts must be positive")
    return Scenario(
        seed=_int(d["seed"], "seed"),
        duration=_int(d["duration_ms"], "duration_ms"),
        slices=slices, ues=ues,
        controller=_controller(d.get("controller", {}), "controller"),
        mode=d.get("mode", "det"),
        service_rate=_int(d.get("service_rate", DEFAULT_SERVICE_RATE), "service_rate"),
        power=power_profile,
        commands=[_command(c, f"commands[{i}]")
                  for i, c in enumerate(_list(d.get("commands", []), "commands"))],
        bench=bench,
    )


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file. Raises ``OSError`` when the file
    cannot be read and :class:`InvalidScenario` for bad content."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidScenario("<document>", f"not valid YAML: {exc}") from None
    return parse_scenario(doc)


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(sc.to_dict(), sort_keys=False)


def bundled_scenario(name: str = "paper_fig8") -> Path:
    """Path of a scenario shipped inside the package."""
    return Path(__file__).with_name("scenarios") / f"{name}.cfg"
