"""Experiment configuration files.

A configuration is a JSON object with matrices given as row-major nested
lists::

    {
      "_comment": "where the numbers come from",
      "experiment": "value-table",
      "model": {"alpha": [[...]], "beta": [[...]], "sigma": [[...]],
                "delta": [...], "Sigma0": [[...]], "m0": null,
                "r": 0.0, "T": 1.0},
      "schedule": {"equidistant": {"N": 10}, "Gamma": [[...]]},
      "grid_step": 0.001,
      "seed": 7,
      "params": {...},
      "expected": {...},
      "outputs": {"dir": "out"}
    }

``schedule`` is either ``{"equidistant": {"N": n} | {"Delta": h}, "Gamma": G}``
or ``{"dates": [...], "gammas": [G0, G1, ...]}``; ``null`` means no experts.
"""

from dataclasses import dataclass, field
from importlib import resources
import copy
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .matops import as_sym, is_pd
from .model import ExpertSchedule, InterestRate, MarketModel

__all__ = ["EXPERIMENTS", "ExperimentConfig", "bundled_configs", "load_config", "resolve_config_path"]

EXPERIMENTS = ("simulate", "covariance", "value-table", "efficiency", "decay",
               "limit-cycle", "counterexample", "are")

_MODEL_KEYS = ("alpha", "beta", "sigma", "delta", "Sigma0", "m0", "r", "T")


def _matrix(value, name):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("must be a numeric nested list", name) from None
    return arr


def _pd(value, name):
    arr = _matrix(value, name)
    try:
        arr = as_sym(arr, name, atol=1e-10 * (1 + np.max(np.abs(arr))))
    except ValueError as exc:
        raise ConfigError(str(exc).replace(name + " ", ""), name) from None
    if not is_pd(arr):
        raise ConfigError("must be positive definite", name)
    return arr


def _tolist(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


@dataclass(eq=False)
class ExperimentConfig:
    """Validated experiment configuration.

    Attributes
    ----------
    model : MarketModel
    schedule_def : dict or None
        Schedule section as written in the file.
    experiment : str
    grid_step : float or None
    seed : int
    params : dict
        Experiment-specific options.
    expected : dict
        Golden values for ``--check`` mode.
    outputs : dict
    comment : str
    source : str or None
        Path the configuration was read from.
    """

    model: MarketModel
    schedule_def: dict = None
    experiment: str = "value-table"
    grid_step: float = None
    seed: int = 0
    params: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    comment: str = ""
    source: str = None

    @property
    def Gamma(self):
        """Constant expert covariance of an equidistant schedule."""
        sdef = self.schedule_def or {}
        if "Gamma" not in sdef:
            raise ConfigError("an expert covariance 'Gamma' is required", "schedule.Gamma")
        return _pd(sdef["Gamma"], "schedule.Gamma")

    @property
    def Delta(self):
        """Spacing of an equidistant schedule."""
        eq = (self.schedule_def or {}).get("equidistant") or {}
        if "Delta" in eq:
            return float(eq["Delta"])
        if "N" in eq and int(eq["N"]) > 0:
            return self.model.T / int(eq["N"])
        raise ConfigError("an equidistant spacing is required", "schedule.equidistant.Delta")

    def schedule(self):
        """Build the :class:`ExpertSchedule` described by the configuration."""
        sdef = self.schedule_def
        d, T = self.model.d, self.model.T
        if not sdef:
            return ExpertSchedule.empty(d)
        if "equidistant" in sdef:
            eq = sdef["equidistant"] or {}
            G = self.Gamma
            if G.shape != (d, d):
                raise ConfigError(f"must be {d}x{d}", "schedule.Gamma")
            if "N" in eq:
                sched = ExpertSchedule.equidistant(int(eq["N"]), T, G)
            elif "Delta" in eq:
                sched = ExpertSchedule.spaced(float(eq["Delta"]), T, G)
            else:
                raise ConfigError("needs N or Delta", "schedule.equidistant")
        elif "dates" in sdef:
            gam = [_pd(g, f"schedule.gammas[{k}]") for k, g in enumerate(sdef.get("gammas", []))]
            sched = ExpertSchedule(sdef["dates"], np.array(gam).reshape(len(gam), d, d))
        else:
            raise ConfigError("expected 'equidistant' or 'dates'", "schedule")
        sched.check_model(self.model)
        return sched

    @classmethod
    def from_dict(cls, data, source=None, strict=True):
        """Validate a parsed JSON object.

        With ``strict`` (the default) the standing assumptions ``alpha`` PD
        and ``beta beta^T`` PD are enforced as well.
        """
        if not isinstance(data, dict):
            raise ConfigError("top level must be a JSON object", "config")
        unknown = set(data) - {"_comment", "experiment", "model", "schedule", "grid_step",
                               "seed", "params", "expected", "outputs", "tolerances"}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "config")
        exp = data.get("experiment", "value-table")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}", "experiment")
        md = data.get("model")
        if not isinstance(md, dict):
            raise ConfigError("missing model section", "model")
        bad = set(md) - set(_MODEL_KEYS)
        if bad:
            raise ConfigError(f"unknown keys {sorted(bad)}", "model")
        for key in ("alpha", "beta", "sigma", "delta", "Sigma0"):
            if key not in md:
                raise ConfigError("is required", f"model.{key}")
        r = md.get("r", 0.0)
        if isinstance(r, dict):
            r = InterestRate(tuple(r.get("times", ())), tuple(r.get("values", ())))
        elif not isinstance(r, (int, float)):
            raise ConfigError("must be a number or {times, values}", "model.r")
        model = MarketModel(
            alpha=_matrix(md["alpha"], "model.alpha"),
            beta=_matrix(md["beta"], "model.beta"),
            delta=_matrix(md["delta"], "model.delta"),
            sigma=_matrix(md["sigma"], "model.sigma"),
            Sigma0=_matrix(md["Sigma0"], "model.Sigma0"),
            m0=None if md.get("m0") is None else _matrix(md["m0"], "model.m0"),
            r=r,
            T=float(md.get("T", 1.0)),
        )
        if strict:
            model.require_assumptions()
        step = data.get("grid_step")
        if step is not None and not (isinstance(step, (int, float)) and step > 0):
            raise ConfigError("must be a positive number", "grid_step")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("must be a nonnegative integer", "seed")
        cfg = cls(
            model=model,
            schedule_def=copy.deepcopy(data.get("schedule")),
            experiment=exp,
            grid_step=None if step is None else float(step),
            seed=seed,
            params=copy.deepcopy(data.get("params", {})),
            expected=copy.deepcopy(data.get("expected", {})),
            outputs=copy.deepcopy(data.get("outputs", {})),
            comment=data.get("_comment", ""),
            source=source,
        )
        cfg.schedule()
        return cfg

    def to_dict(self):
        """Serialize back to a JSON-compatible object."""
        m = self.model
        model = {
            "alpha": _tolist(m.alpha), "beta": _tolist(m.beta), "sigma": _tolist(m.sigma),
            "delta": _tolist(m.delta), "Sigma0": _tolist(m.Sigma0), "m0": _tolist(m.m0),
            "r": m.r.to_dict(), "T": m.T,
        }
        out = {"_comment": self.comment, "experiment": self.experiment, "model": model,
               "schedule": copy.deepcopy(self.schedule_def), "grid_step": self.grid_step,
               "seed": self.seed, "params": copy.deepcopy(self.params),
               "expected": copy.deepcopy(self.expected), "outputs": copy.deepcopy(self.outputs)}
        return out


def bundled_configs():
    """Names of the configurations shipped with the package."""
    root = resources.files("driftfilter") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_config_path(name):
    """Return a filesystem path for ``name``, which may be a bundled config name."""
    p = Path(name)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if stem in bundled_configs():
        return Path(str(resources.files("driftfilter") / "configs" / f"{stem}.json"))
    raise ConfigError(f"no such file or bundled config: {name}", "--config")


def load_config(path, strict=True):
    """Read and validate a configuration file or bundled config name."""
    p = resolve_config_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}", "--config") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                          str(p)) from None
    return ExperimentConfig.from_dict(data, source=str(p), strict=strict)
