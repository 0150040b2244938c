"""MiniLab: a deterministic, hermetic text-world environment.

Rooms, objects, template-matched actions, once-only subgoal rewards summing
to 100, and a strict FOCUS budget. A newline-delimited JSON stdio adapter
lets external environments substitute for the native simulator.
"""

from icrl.minilab.adapter import ExternalEnvClient, serve_stdio
from icrl.minilab.world import (
    ActionOutcome,
    MiniLabEnv,
    WorldLoadError,
    WorldSpec,
    WorldState,
    load_world,
    parse_action,
    render_trajectory,
    step_world,
)

__all__ = [
    "ActionOutcome",
    "ExternalEnvClient",
    "MiniLabEnv",
    "WorldLoadError",
    "WorldSpec",
    "WorldState",
    "load_world",
    "parse_action",
    "render_trajectory",
    "serve_stdio",
    "step_world",
]
