"""Run configuration: strict INI files mapped onto solver parameter records.

A run is described by ten fixed sections.  Every key has a default (the
reference axon scenario), so an empty file or no file at all is a valid
configuration; unknown sections or keys are hard errors naming the offender,
because a silently ignored typo ("sera_k") would change the physics without
a trace.

The canonical rendering (schema order, repr-formatted values) feeds a sha256
digest recorded in output sidecars, so two runs can be compared by hash
regardless of how their input files were formatted.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field

from . import channel_flux, hybrid_solver, ryr_markov
from .errors import ConfigError

# section -> key -> (python type, default); insertion order is canonical
SCHEMA = {
    "geometry": {
        "er_radius": (float, 1.5),
        "cell_radius": (float, math.pi),
        "er_elements": (int, 40),
        "cyto_elements": (int, 40),
    },
    "diffusion": {
        "calcium": (float, 220.0),
        "buffer": (float, 20.0),
    },
    "channels": {
        "ryr_scale": (float, 0.829468),
        "serca_scale": (float, 11000.0),
        "serca_k": (float, 0.18),
        "er_leak": (float, 0.038),
        "pmca_scale": (float, 8.5),
        "pmca_k": (float, 0.06),
        "ncx_scale": (float, 37.6),
        "ncx_k": (float, 1.8),
        "plasma_leak": (float, 0.0045),
        "external_calcium": (float, 1000.0),
    },
    "buffer": {
        "total": (float, 40.0),
        "bind_rate": (float, 27.0),
        "unbind_rate": (float, 16.65),
    },
    "markov": {
        "ka_plus": (float, 1500.0),
        "ka_minus": (float, 28.8),
        "kb_plus": (float, 1500.0),
        "kb_minus": (float, 385.9),
        "kc_plus": (float, 1.75),
        "kc_minus": (float, 0.1),
        "c1": (float, 0.994),
        "o": (float, 1.5721e-7),
        "c2": (float, 5.6625e-3),
    },
    "stimulus": {
        "amplitude": (float, 1200.0),
    },
    "time": {
        "dt": (float, 0.01),
        "t_end": (float, 4.0),
    },
    "network": {
        "epochs": (int, 100),
        "batch_size": (int, 640),
        "validation_fraction": (float, 0.10),
        "learning_rate": (float, 1e-3),
        "seed": (int, 0),
    },
    "dataset": {
        "signals": (int, 26000),
        "seed": (int, 0),
    },
    "output": {
        "observer_stride": (int, 1),
        "snapshot_stride": (int, 0),
    },
}


@dataclass
class RunConfig:
    """Parsed configuration: values[section][key], fully populated."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.values:
            self.values = {
                section: {key: default for key, (_, default) in keys.items()}
                for section, keys in SCHEMA.items()
            }

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw) -> None:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key '{key}' in section [{section}]")
        kind = SCHEMA[section][key][0]
        try:
            if kind is int:
                # reject silent truncation of "40.5"
                as_float = float(raw)
                value = int(as_float)
                if value != as_float:
                    raise ValueError
            else:
                value = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(
                f"config key '{key}' in [{section}] expects {kind.__name__}, got {raw!r}"
            ) from None
        if not math.isfinite(value):
            raise ConfigError(f"config key '{key}' in [{section}] must be finite, got {raw!r}")
        self.values[section][key] = kind(value)

    def canonical_text(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {self.values[section][key]!r}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    # parameter-record views consumed by the solver modules

    def plasma_params(self) -> channel_flux.PlasmaParams:
        c = self.values["channels"]
        return channel_flux.PlasmaParams(
            pmca_scale=c["pmca_scale"],
            pmca_k=c["pmca_k"],
            ncx_scale=c["ncx_scale"],
            ncx_k=c["ncx_k"],
            leak=c["plasma_leak"],
            c_out=c["external_calcium"],
        )

    def er_params(self) -> channel_flux.ErParams:
        c = self.values["channels"]
        return channel_flux.ErParams(
            ryr_scale=c["ryr_scale"],
            serca_scale=c["serca_scale"],
            serca_k=c["serca_k"],
            leak=c["er_leak"],
        )

    def buffer_params(self) -> channel_flux.BufferParams:
        b = self.values["buffer"]
        return channel_flux.BufferParams(
            total=b["total"], unbind_rate=b["unbind_rate"], bind_rate=b["bind_rate"]
        )

    def markov_rates(self) -> ryr_markov.MarkovRates:
        m = self.values["markov"]
        return ryr_markov.MarkovRates(
            ka_plus=m["ka_plus"],
            ka_minus=m["ka_minus"],
            kb_plus=m["kb_plus"],
            kb_minus=m["kb_minus"],
            kc_plus=m["kc_plus"],
            kc_minus=m["kc_minus"],
        )

    def markov_state(self) -> ryr_markov.MarkovState:
        m = self.values["markov"]
        return ryr_markov.MarkovState(c1=m["c1"], o=m["o"], c2=m["c2"])

    def sim_config(self, **overrides) -> hybrid_solver.SimConfig:
        g = self.values["geometry"]
        d = self.values["diffusion"]
        t = self.values["time"]
        o = self.values["output"]
        kwargs = dict(
            er_radius=g["er_radius"],
            cell_radius=g["cell_radius"],
            er_elements=g["er_elements"],
            cyto_elements=g["cyto_elements"],
            d_calcium=d["calcium"],
            d_buffer=d["buffer"],
            plasma=self.plasma_params(),
            er=self.er_params(),
            buffer=self.buffer_params(),
            rates=self.markov_rates(),
            stimulus=hybrid_solver.StimulusSpec(amplitude=self.values["stimulus"]["amplitude"]),
            dt=t["dt"],
            t_end=t["t_end"],
            initial_markov_state=self.markov_state(),
            observer_stride=o["observer_stride"],
            snapshot_stride=o["snapshot_stride"],
        )
        kwargs.update(overrides)
        cfg = hybrid_solver.SimConfig(**kwargs)
        cfg.validate()
        return cfg


def load_config(path=None) -> RunConfig:
    """Defaults, overlaid with the INI file at path when given."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True
    )
    parser.optionxform = str  # key names are case-sensitive
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    for section in parser.sections():
        for key, raw in parser.items(section):
            cfg.set(section, key, raw)
    return cfg
