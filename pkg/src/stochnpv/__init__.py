"""Expected-NPV project scheduling under uncertain durations: MDP environment, DDQN agent, baselines."""

from .instances import Instance, example1_instance, read_instance, write_instance
from .project import Activity, ProjectNetwork, Scenario, Schedule, example1, schedule_npv

__all__ = [
    "Activity",
    "Instance",
    "ProjectNetwork",
    "Scenario",
    "Schedule",
    "example1",
    "example1_instance",
    "read_instance",
    "schedule_npv",
    "write_instance",
]
