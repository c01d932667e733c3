"""Run configuration: YAML or JSON in, validated dataclasses out."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .nonlinearity import (BASEBAND, PASSBAND, Limiter, NonlinearChain, ThirdOrderSaturated,
                           design_lloyd_max, design_uniform_quantizer)
from .scenario import ScenarioSpec
from .utils import db2lin


class ConfigError(ValueError):
    pass


def _from_mapping(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


# ----------------------------------------------------------------------------
# Chain stages


STAGE_KINDS = ("third_order", "limiter", "quantizer")


@dataclass(frozen=True)
class StageConfig:
    """One chain stage; which fields apply depends on ``kind``.

    third_order: ``domain``, ``p1db_db``.  limiter: ``domain``,
    ``threshold_db`` (output power), ``gain_db``.  quantizer: ``bits``,
    ``quantizer`` (uniform | lloyd_max).
    """

    kind: str
    domain: str | None = None
    p1db_db: float | None = None
    threshold_db: float | None = None
    gain_db: float = 0.0
    bits: int | None = None
    quantizer: str = "uniform"

    def __post_init__(self):
        if self.kind not in STAGE_KINDS:
            raise ValueError(f"stage kind must be one of {STAGE_KINDS}")
        if self.kind == "quantizer":
            if self.bits is None:
                raise ValueError("quantizer stage needs bits")
            if self.quantizer not in ("uniform", "lloyd_max"):
                raise ValueError("quantizer must be uniform or lloyd_max")
            return
        if self.domain not in (PASSBAND, BASEBAND):
            raise ValueError(f"{self.kind} stage needs domain passband or baseband")
        if self.kind == "third_order" and self.p1db_db is None:
            raise ValueError("third_order stage needs p1db_db")
        if self.kind == "limiter" and self.threshold_db is None:
            raise ValueError("limiter stage needs threshold_db")

    def build(self):
        if self.kind == "quantizer":
            return (design_uniform_quantizer(self.bits) if self.quantizer == "uniform"
                    else design_lloyd_max(self.bits))
        if self.kind == "third_order":
            return ThirdOrderSaturated(db2lin(self.p1db_db), self.domain)
        return Limiter(math.sqrt(db2lin(self.gain_db)), db2lin(self.threshold_db), self.domain)

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items()
                if v is not None and not (k == "gain_db" and self.kind != "limiter")
                and not (k == "quantizer" and self.kind != "quantizer")}


@dataclass(frozen=True)
class ChainConfig:
    """Ordered stages; at most one per slot (passband, baseband, quantizer)."""

    stages: tuple = ()
    name: str = ""

    def __post_init__(self):
        slots = [self._slot(s) for s in self.stages]
        if len(set(slots)) != len(slots):
            raise ValueError("at most one passband, one baseband and one quantizer stage")

    @staticmethod
    def _slot(stage: StageConfig) -> str:
        return "quantizer" if stage.kind == "quantizer" else stage.domain

    @classmethod
    def from_data(cls, data, where="chain") -> "ChainConfig":
        if data is None:
            return cls()
        if isinstance(data, list):
            data = {"stages": data}
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected a mapping or a list of stages")
        unknown = sorted(set(data) - {"stages", "name"})
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
        stages = tuple(_from_mapping(StageConfig, s, f"{where}.stages[{i}]")
                       for i, s in enumerate(data.get("stages") or []))
        try:
            return cls(stages, str(data.get("name", "")))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    def build(self) -> NonlinearChain:
        if not self.stages:
            return NonlinearChain.identity()
        parts = {self._slot(s): s.build() for s in self.stages}
        return NonlinearChain(parts.get(PASSBAND), parts.get(BASEBAND), parts.get("quantizer"))

    def to_dict(self) -> dict:
        out = {"stages": [s.to_dict() for s in self.stages]}
        if self.name:
            out["name"] = self.name
        return out

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if not self.stages:
            return "ideal"
        bits = []
        for s in self.stages:
            if s.kind == "quantizer":
                bits.append(f"b{s.bits}")
            elif s.kind == "third_order":
                bits.append(f"{s.domain[:2]}{s.p1db_db:g}")
            else:
                bits.append(f"lim-{s.domain[:2]}{s.threshold_db:g}")
        return "_".join(bits)


# ----------------------------------------------------------------------------
# Command sections


@dataclass(frozen=True)
class BussgangSection:
    n_samples: int = 1_000_000

    def __post_init__(self):
        if self.n_samples < 10_000:
            raise ValueError("n_samples must be at least 1e4")


@dataclass(frozen=True)
class EtaSection:
    method: str = "analytic"
    n_drops: int = 200
    eta_db: float | None = None   # fixed value; skips estimation

    def __post_init__(self):
        if self.method not in ("analytic", "simulate", "percentile"):
            raise ValueError("eta.method must be analytic, simulate or percentile")
        if self.eta_db is not None and self.eta_db > 0:
            raise ValueError("eta_db is an efficiency and cannot exceed 0 dB")


@dataclass(frozen=True)
class DesignRow:
    n_users: int
    power_control: str = "none"
    gamma_g_db: float | None = None
    snr_edge_db: float | None = None
    eta_db: float | None = None

    def __post_init__(self):
        if (self.gamma_g_db is None) == (self.snr_edge_db is None):
            raise ValueError("design row needs exactly one of gamma_g_db or snr_edge_db")


@dataclass(frozen=True)
class GridRange:
    start: float
    stop: float
    step: float

    def values(self):
        if self.step <= 0 or self.stop < self.start:
            raise ValueError("grid needs step > 0 and stop >= start")
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return tuple(round(self.start + i * self.step, 10) for i in range(n))


@dataclass(frozen=True)
class DesignSection:
    rows: tuple = ()
    bits: tuple = (1, 2, 3, 4, 5, 6)
    p1db_pb: GridRange = GridRange(-4.0, 10.0, 0.1)
    p1db_bb: GridRange = GridRange(-4.0, 10.0, 0.1)
    n_samples: int = 200_000
    eta: EtaSection = EtaSection()

    @classmethod
    def from_data(cls, data, where="design"):
        data = dict(data or {})
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
        kw = {}
        if "rows" in data:
            kw["rows"] = tuple(_from_mapping(DesignRow, r, f"{where}.rows[{i}]")
                               for i, r in enumerate(data["rows"] or []))
        if "bits" in data:
            kw["bits"] = tuple(int(b) for b in data["bits"])
        for key in ("p1db_pb", "p1db_bb"):
            if key in data:
                kw[key] = _from_mapping(GridRange, data[key], f"{where}.{key}")
        if "n_samples" in data:
            kw["n_samples"] = int(data["n_samples"])
        if "eta" in data:
            kw["eta"] = _from_mapping(EtaSection, data["eta"], f"{where}.eta")
        return cls(**kw)

    def to_dict(self):
        return {
            "rows": [dataclasses.asdict(r) for r in self.rows],
            "bits": list(self.bits),
            "p1db_pb": dataclasses.asdict(self.p1db_pb),
            "p1db_bb": dataclasses.asdict(self.p1db_bb),
            "n_samples": self.n_samples,
            "eta": dataclasses.asdict(self.eta),
        }


@dataclass(frozen=True)
class SimulateSection:
    n_symbols: int = 100_000
    n_drops: int = 20
    snr_edge_db: tuple = ()       # fixed evaluation points; empty -> bisection only
    search: bool = True
    snr_lo_db: float = 0.0
    snr_hi_db: float = 30.0
    tol_db: float = 0.25
    eta: EtaSection = EtaSection()

    def __post_init__(self):
        if self.n_symbols < 10_000:
            raise ValueError("n_symbols must be at least 1e4")
        if self.n_drops < 1:
            raise ValueError("n_drops must be at least 1")
        if not self.snr_lo_db < self.snr_hi_db:
            raise ValueError("need snr_lo_db < snr_hi_db")
        if not self.search and not self.snr_edge_db:
            raise ValueError("give snr_edge_db points or enable search")

    @classmethod
    def from_data(cls, data, where="simulate"):
        data = dict(data or {})
        if "eta" in data:
            data["eta"] = _from_mapping(EtaSection, data["eta"], f"{where}.eta")
        if "snr_edge_db" in data:
            v = data["snr_edge_db"]
            data["snr_edge_db"] = tuple(float(x) for x in (v if isinstance(v, list) else [v]))
        return _from_mapping(cls, data, where)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["snr_edge_db"] = list(self.snr_edge_db)
        return d


@dataclass(frozen=True)
class SweepSection:
    n_users: tuple = ()
    power_control: tuple = ()
    chains: tuple = ()           # ChainConfig entries; empty -> the top-level chain

    @classmethod
    def from_data(cls, data, where="sweep"):
        data = dict(data or {})
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
        return cls(
            n_users=tuple(int(k) for k in data.get("n_users") or ()),
            power_control=tuple(str(p) for p in data.get("power_control") or ()),
            chains=tuple(ChainConfig.from_data(c, f"{where}.chains[{i}]")
                         for i, c in enumerate(data.get("chains") or ())),
        )

    def to_dict(self):
        return {"n_users": list(self.n_users), "power_control": list(self.power_control),
                "chains": [c.to_dict() for c in self.chains]}


# ----------------------------------------------------------------------------
# Top level


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    chain: ChainConfig = field(default_factory=ChainConfig)
    seed: int | None = None
    bussgang: BussgangSection = field(default_factory=BussgangSection)
    design: DesignSection = field(default_factory=DesignSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a mapping")
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
        seed = data.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise ConfigError("config: seed must be a non-negative integer")
        return cls(
            scenario=_from_mapping(ScenarioSpec, data.get("scenario"), "scenario"),
            chain=ChainConfig.from_data(data.get("chain")),
            seed=seed,
            bussgang=_from_mapping(BussgangSection, data.get("bussgang"), "bussgang"),
            design=DesignSection.from_data(data.get("design")),
            simulate=SimulateSection.from_data(data.get("simulate")),
            sweep=SweepSection.from_data(data.get("sweep")),
        )

    def to_dict(self) -> dict:
        return {
            "scenario": dataclasses.asdict(self.scenario),
            "chain": self.chain.to_dict(),
            "seed": self.seed,
            "bussgang": dataclasses.asdict(self.bussgang),
            "design": self.design.to_dict(),
            "simulate": self.simulate.to_dict(),
            "sweep": self.sweep.to_dict(),
        }

    def with_seed(self, seed: int | None) -> "RunConfig":
        return self if seed is None else dataclasses.replace(self, seed=int(seed))

    @property
    def hash(self) -> str:
        """Short digest of the canonical JSON form, seed excluded."""
        d = self.to_dict()
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    try:
        data = json.loads(text) if p.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from exc
    return RunConfig.from_dict(data)


def dump_config(cfg: RunConfig, fmt: str = "yaml") -> str:
    if fmt == "json":
        return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
