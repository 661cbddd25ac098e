"""Scenario files: YAML documents describing a network, its miners and an attack sweep.

Schema (``version: 1``); keys marked * are required::

    seed*: int                     # no wall-clock seeding
    mode: analytic | simulate | cross        (default analytic)
    replications: int >= 1                   (default 1000)
    network*:
      tau*: float > 0
      R*: float >= 0
      b: int >= 1                            (default 1)
      sigma: float >= 0                      (default 0)
      fees: fee spec                         (default {kind: degenerate, value: 0})
      fee_law: poisson | geometric | fixed   (default poisson)
      carryover: bool                        (default true)
    miners*: list of {id: int, cost: cost spec}
    attack:
      attacker: miner id                     (default: first miner)
      alpha: [float in [0,1]]                (default [0.0]; linear attackers)
      kappa: [float >= 1]                    (default [1.0]; linear attackers)
      h_A: [float > 0]                       (default []: derived)
      h_rent: [float >= 0]                   (default [0.0])
      phi_tilde: [float >= 0]                (default []: from the fee market)
      L: [float > 0]                         (default []: hitting time)
      d: [int in (0, epoch]]                 (default [])
      epoch: int                             (default 2600)
      margin: float >= 1                     (default 1.2)
      V_attack: float >= 0                   (default 0)
    pos:                                     (optional)
      tau_s*, R_s*, r*, e_s*: float
      b, sigma, fees                         (as in network)
      attacker_share: float in (0, 1]        (default 0.6)
      horizon_slots: int                     (default 100000)
      fee_blocks: int                        (default 10)
    limits:
      event_budget: int >= 1                 (default 10000000 block events per race)
      max_iter: int >= 1                     (default 500 equilibrium iterations)
    output:
      dir: path                              (default "out")

Fee specs: ``{kind: degenerate, value}``, ``{kind: uniform, lo, hi}``,
``{kind: exponential, mean}``, ``{kind: empirical, values: [...]}``.
Cost specs: ``{kind: linear, c}``, ``{kind: power, gamma, p}``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .core import Degenerate, Empirical, Exponential, Linear, Power, Uniform
from .equilibrium import MinerSpec
from .errors import DomainError, ScenarioError
from .fees import COUNT_LAWS
from .pos import PoSParams

MODES = ("analytic", "simulate", "cross")
VERSION = 1

_DEFAULTS: dict[str, Any] = {
    "version": VERSION,
    "mode": "analytic",
    "replications": 1000,
    "network": {"b": 1, "sigma": 0.0, "fees": {"kind": "degenerate", "value": 0.0}, "fee_law": "poisson", "carryover": True},
    "attack": {
        "alpha": [0.0],
        "kappa": [1.0],
        "h_A": [],
        "h_rent": [0.0],
        "phi_tilde": [],
        "L": [],
        "d": [],
        "epoch": 2600,
        "margin": 1.2,
        "V_attack": 0.0,
    },
    "limits": {"event_budget": 10_000_000, "max_iter": 500},
    "output": {"dir": "out"},
}
_POS_DEFAULTS = {"b": 1, "sigma": 0.0, "fees": {"kind": "degenerate", "value": 0.0}, "attacker_share": 0.6, "horizon_slots": 100_000, "fee_blocks": 10}


@dataclass(frozen=True)
class AttackSweep:
    attacker: int
    alpha: tuple[float, ...]
    kappa: tuple[float, ...]
    h_A: tuple[float, ...]
    h_rent: tuple[float, ...]
    phi_tilde: tuple[float, ...]
    L: tuple[float, ...]
    d: tuple[int, ...]
    epoch: int
    margin: float
    V_attack: float


@dataclass(frozen=True)
class PoSBlock:
    params: PoSParams
    attacker_share: float
    horizon_slots: int
    fee_blocks: int


@dataclass(frozen=True)
class Scenario:
    seed: int
    mode: str
    replications: int
    tau: float
    R: float
    b: int
    sigma: float
    fee_dist: Any
    fee_law: str
    carryover: bool
    miners: tuple[MinerSpec, ...]
    attack: AttackSweep
    pos: PoSBlock | None
    output_dir: str
    event_budget: int = 10_000_000
    max_iter: int = 500
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    def echo(self) -> dict:
        """Fully defaulted document; loading it yields an equal scenario."""
        return copy.deepcopy(self.raw)


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


class _Checker:
    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, msg: str):
        raise ScenarioError(f"{self.source}: field '{where}': {msg}")

    def num(self, doc: dict, key: str, where: str, *, lo=None, lo_open=False, hi=None, integer=False):
        if key not in doc:
            self.fail(f"{where}{key}", "required field missing")
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"{where}{key}", f"expected a number, got {v!r}")
        if integer and int(v) != v:
            self.fail(f"{where}{key}", f"expected an integer, got {v!r}")
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.fail(f"{where}{key}", f"must be {'>' if lo_open else '>='} {lo}, got {v!r}")
        if hi is not None and v > hi:
            self.fail(f"{where}{key}", f"must be <= {hi}, got {v!r}")
        return int(v) if integer else float(v)

    def grid(self, doc: dict, key: str, where: str, *, allow_empty: bool, **bounds) -> tuple:
        v = doc.get(key)
        if not isinstance(v, list):
            self.fail(f"{where}{key}", f"expected a list, got {v!r}")
        if not v and not allow_empty:
            self.fail(f"{where}{key}", "sweep grid must be non-empty")
        return tuple(self._item(x, f"{where}{key}[{i}]", **bounds) for i, x in enumerate(v))

    def _item(self, x, where, **bounds):
        try:
            return self.num({"_": x}, "_", "", **bounds)
        except ScenarioError as exc:
            msg = str(exc).split("field '_': ", 1)[-1]
            self.fail(where, msg)

    def fees(self, spec, where: str):
        if not isinstance(spec, dict) or "kind" not in spec:
            self.fail(where, "expected a mapping with a 'kind'")
        kind = spec["kind"]
        try:
            if kind == "degenerate":
                return Degenerate(self.num(spec, "value", f"{where}.", lo=0))
            if kind == "uniform":
                return Uniform(self.num(spec, "lo", f"{where}.", lo=0), self.num(spec, "hi", f"{where}.", lo=0))
            if kind == "exponential":
                return Exponential(self.num(spec, "mean", f"{where}.", lo=0, lo_open=True))
            if kind == "empirical":
                vals = spec.get("values")
                if not isinstance(vals, list) or not vals:
                    self.fail(f"{where}.values", "expected a non-empty list")
                return Empirical(tuple(self._item(x, f"{where}.values[{i}]", lo=0) for i, x in enumerate(vals)))
        except DomainError as exc:
            self.fail(where, str(exc))
        self.fail(f"{where}.kind", f"unknown fee distribution {kind!r}")

    def cost(self, spec, where: str):
        if not isinstance(spec, dict) or "kind" not in spec:
            self.fail(where, "expected a mapping with a 'kind'")
        kind = spec["kind"]
        if kind == "linear":
            return Linear(self.num(spec, "c", f"{where}.", lo=0, lo_open=True))
        if kind == "power":
            return Power(self.num(spec, "gamma", f"{where}.", lo=0, lo_open=True), self.num(spec, "p", f"{where}.", lo=1, lo_open=True))
        self.fail(f"{where}.kind", f"unknown cost schedule {kind!r}")


def parse_scenario(doc: Any, source: str = "<scenario>") -> Scenario:
    chk = _Checker(source)
    if not isinstance(doc, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    for req in ("seed", "network", "miners"):
        if req not in doc:
            chk.fail(req, "required field missing")
    doc = _merge(_DEFAULTS, doc)
    if doc.get("pos") is not None:
        doc["pos"] = _merge(_POS_DEFAULTS, doc["pos"])
    known = set(_DEFAULTS) | {"seed", "network", "miners", "pos"}
    for k in doc:
        if k not in known:
            chk.fail(k, "unknown field")
    allowed = {
        "network": set(_DEFAULTS["network"]) | {"tau", "R"},
        "attack": set(_DEFAULTS["attack"]) | {"attacker"},
        "limits": set(_DEFAULTS["limits"]),
        "output": set(_DEFAULTS["output"]),
        "pos": set(_POS_DEFAULTS) | {"tau_s", "R_s", "r", "e_s"},
    }
    for section, keys in allowed.items():
        body = doc.get(section)
        if section == "pos" and body is None:
            continue
        if not isinstance(body, dict):
            chk.fail(section, "expected a mapping")
        for k in body:
            if k not in keys:
                chk.fail(f"{section}.{k}", "unknown field")

    if doc["version"] != VERSION:
        chk.fail("version", f"unsupported version {doc['version']!r}")
    seed = chk.num(doc, "seed", "", lo=0, integer=True)
    if doc["mode"] not in MODES:
        chk.fail("mode", f"must be one of {MODES}, got {doc['mode']!r}")
    reps = chk.num(doc, "replications", "", lo=1, integer=True)

    net = doc["network"]
    tau = chk.num(net, "tau", "network.", lo=0, lo_open=True)
    R = chk.num(net, "R", "network.", lo=0)
    b = chk.num(net, "b", "network.", lo=1, integer=True)
    sigma = chk.num(net, "sigma", "network.", lo=0)
    fee_dist = chk.fees(net["fees"], "network.fees")
    if net["fee_law"] not in COUNT_LAWS:
        chk.fail("network.fee_law", f"must be one of {COUNT_LAWS}")
    if not isinstance(net["carryover"], bool):
        chk.fail("network.carryover", "expected true or false")

    if not isinstance(doc["miners"], list) or not doc["miners"]:
        chk.fail("miners", "need a non-empty list of miners")
    miners = []
    for i, m in enumerate(doc["miners"]):
        if not isinstance(m, dict):
            chk.fail(f"miners[{i}]", "expected a mapping")
        miners.append(MinerSpec(chk.num(m, "id", f"miners[{i}].", integer=True), chk.cost(m.get("cost"), f"miners[{i}].cost")))
    ids = [m.id for m in miners]
    if len(set(ids)) != len(ids):
        chk.fail("miners", "miner ids must be unique")

    att = doc["attack"]
    att.setdefault("attacker", ids[0])
    attacker = chk.num(att, "attacker", "attack.", integer=True)
    if attacker not in ids:
        chk.fail("attack.attacker", f"no miner with id {attacker}")
    sweep = AttackSweep(
        attacker=attacker,
        alpha=chk.grid(att, "alpha", "attack.", allow_empty=False, lo=0, hi=1),
        kappa=chk.grid(att, "kappa", "attack.", allow_empty=False, lo=1),
        h_A=chk.grid(att, "h_A", "attack.", allow_empty=True, lo=0, lo_open=True),
        h_rent=chk.grid(att, "h_rent", "attack.", allow_empty=False, lo=0),
        phi_tilde=chk.grid(att, "phi_tilde", "attack.", allow_empty=True, lo=0),
        L=chk.grid(att, "L", "attack.", allow_empty=True, lo=0, lo_open=True),
        d=tuple(int(x) for x in chk.grid(att, "d", "attack.", allow_empty=True, lo=0, lo_open=True, integer=True)),
        epoch=chk.num(att, "epoch", "attack.", lo=1, integer=True),
        margin=chk.num(att, "margin", "attack.", lo=1),
        V_attack=chk.num(att, "V_attack", "attack.", lo=0),
    )
    for i, d in enumerate(sweep.d):
        if d > sweep.epoch:
            chk.fail(f"attack.d[{i}]", f"must be <= epoch ({sweep.epoch})")
    if doc["mode"] != "analytic" and sweep.margin <= 1 and not sweep.h_A:
        chk.fail("attack.margin", "simulation needs margin > 1 so the private branch out-mines the honest one")
    attacker_cost = next(m.cost for m in miners if m.id == attacker)
    if isinstance(attacker_cost, Power) and (len(sweep.alpha) > 1 or len(sweep.kappa) > 1):
        chk.fail("attack.alpha", "alpha/kappa sweeps apply to linear attackers only")
    if not sweep.L and doc["mode"] == "analytic" and sweep.margin <= 1 and not sweep.h_A:
        chk.fail("attack.L", "with margin 1 the expected attack length is unbounded; give an L grid")

    pos_block = None
    if doc.get("pos") is not None:
        p = doc["pos"]
        try:
            params = PoSParams(
                tau_s=chk.num(p, "tau_s", "pos.", lo=0, lo_open=True),
                R_s=chk.num(p, "R_s", "pos.", lo=0),
                r=chk.num(p, "r", "pos.", lo=0, lo_open=True),
                e_s=chk.num(p, "e_s", "pos.", lo=0, lo_open=True),
                b=chk.num(p, "b", "pos.", lo=1, integer=True),
                sigma=chk.num(p, "sigma", "pos.", lo=0),
                fee_dist=chk.fees(p["fees"], "pos.fees"),
            )
        except DomainError as exc:
            chk.fail("pos", str(exc))
        pos_block = PoSBlock(
            params,
            chk.num(p, "attacker_share", "pos.", lo=0, lo_open=True, hi=1),
            chk.num(p, "horizon_slots", "pos.", lo=1, integer=True),
            chk.num(p, "fee_blocks", "pos.", lo=1, integer=True),
        )

    lim = doc["limits"]
    if not isinstance(lim, dict):
        chk.fail("limits", "expected a mapping")
    event_budget = chk.num(lim, "event_budget", "limits.", lo=1, integer=True)
    max_iter = chk.num(lim, "max_iter", "limits.", lo=1, integer=True)

    out = doc["output"]
    if not isinstance(out, dict) or not isinstance(out.get("dir"), str):
        chk.fail("output.dir", "expected a path string")

    return Scenario(
        seed=seed,
        mode=doc["mode"],
        replications=reps,
        tau=tau,
        R=R,
        b=b,
        sigma=sigma,
        fee_dist=fee_dist,
        fee_law=net["fee_law"],
        carryover=net["carryover"],
        miners=tuple(miners),
        attack=sweep,
        pos=pos_block,
        output_dir=out["dir"],
        event_budget=event_budget,
        max_iter=max_iter,
        raw=doc,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ScenarioError(f"{path}: parse error at {where}: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}") from exc
    return parse_scenario(doc, str(path))


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(s.echo(), sort_keys=True)


def with_overrides(
    s: Scenario,
    *,
    reps: int | None = None,
    seed: int | None = None,
    mode: str | None = None,
    out: str | None = None,
    source: str = "<overrides>",
) -> Scenario:
    doc = s.echo()
    if reps is not None:
        doc["replications"] = reps
    if seed is not None:
        doc["seed"] = seed
    if mode is not None:
        doc["mode"] = mode
    if out is not None:
        doc["output"]["dir"] = out
    return parse_scenario(doc, source)
