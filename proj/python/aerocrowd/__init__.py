"""Coupled crowd, airflow and pathogen exposure simulator."""

from ._core import (
    ConfigError,
    ScenarioConfig,
    Simulation,
    SolverError,
    configure_threads,
    droplet_rest,
    infection_probability,
    load_scenario,
    make_report,
    parse_scenario,
    sneeze_profile,
)

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "Simulation",
    "SolverError",
    "configure_threads",
    "droplet_rest",
    "infection_probability",
    "load_scenario",
    "make_report",
    "parse_scenario",
    "run",
    "sneeze_profile",
]

__version__ = "0.1.0"


def run(scenario, out_dir=None, seed=None, snapshot_every=None):
    """Load a scenario file, run it to completion and return the summary."""
    config = load_scenario(scenario)
    return Simulation(config, out_dir=out_dir, seed=seed, snapshot_every=snapshot_every).run()
