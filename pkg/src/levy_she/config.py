"""Experiment configuration: one TOML file per run."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigInvalid
from .levy_measure import ConditionReport, ModelParams, check_conditions, measure_from_dict

EXPERIMENTS = ("tails", "simulate", "mc-tail", "growth-test", "peaks")
SECTION = {e: e.replace("-", "_") for e in EXPERIMENTS}

# flags each experiment depends on
_NEEDS = {
    "tails": ("mild_solution_exists", "local_sup_finite"),
    "simulate": ("mild_solution_exists",),
    "mc-tail": ("mild_solution_exists",),
    "growth-test": ("mild_solution_exists", "local_sup_finite"),
    "peaks": ("mild_solution_exists", "local_sup_finite"),
}
_CAUSES = {
    "mild_solution_exists": ("log_moment", "small_jumps"),
    "local_sup_finite": ("local_sup",),
    "q_condition": ("q_condition",),
}


@dataclass
class ExperimentConfig:
    measure: dict
    model: dict
    experiment: Optional[str] = None
    seed: int = 0
    sections: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        try:
            measure = dict(raw.pop("measure"))
        except KeyError:
            raise ConfigInvalid("config needs a [measure] table") from None
        model = dict(raw.pop("model", {}))
        experiment = raw.pop("experiment", None)
        if experiment is not None and experiment not in EXPERIMENTS:
            raise ConfigInvalid(f"experiment must be one of {EXPERIMENTS}")
        seed = raw.pop("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigInvalid("seed must be a non-negative integer")
        for key, val in raw.items():
            if key not in SECTION.values() or not isinstance(val, dict):
                raise ConfigInvalid(f"unknown config entry {key!r}")
        return cls(measure, model, experiment, seed, raw)

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "measure": dict(self.measure), "model": dict(self.model)}
        if self.experiment is not None:
            out["experiment"] = self.experiment
        out.update({k: dict(v) for k, v in self.sections.items()})
        return out

    def section(self, experiment: str) -> dict:
        return dict(self.sections.get(SECTION[experiment], {}))

    def build(self):
        """(LevyMeasure, ModelParams); malformed entries raise ConfigInvalid."""
        try:
            spec = measure_from_dict(self.measure)
            params = ModelParams(**self.model)
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(str(exc)) from None
        return spec, params

    def validate(self, experiment: str) -> ConditionReport:
        """Check the conditions the experiment depends on; name the first failure."""
        spec, params = self.build()
        report = check_conditions(spec, params)
        needs = list(_NEEDS[experiment])
        if experiment in ("growth-test", "peaks") and params.d == 1:
            needs.append("q_condition")
        for flag in needs:
            if not getattr(report, flag):
                causes = [report.failures[k] for k in _CAUSES[flag] if k in report.failures]
                raise ConfigInvalid(f"{flag} fails: " + "; ".join(causes or [flag]))
        return report


def loads(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"unparseable config: {exc}") from None
    return ExperimentConfig.from_dict(raw)


def load(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        return loads(fh.read().decode("utf-8"))


def dumps(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())
