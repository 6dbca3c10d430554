from .render import RasterFrame, agent_box, render_raster
from .scenarios import Lane, Obstacle, Scenario, get_scenario, load_scenarios, scenario_names
from .world import (
    AgentState,
    EpisodeConfig,
    WeatherParams,
    WorldState,
    init_episode,
    sample_weather,
    spawn_agent,
    step_world,
    target_motion_step,
)

__all__ = [
    "AgentState",
    "EpisodeConfig",
    "Lane",
    "Obstacle",
    "RasterFrame",
    "Scenario",
    "WeatherParams",
    "WorldState",
    "agent_box",
    "get_scenario",
    "init_episode",
    "load_scenarios",
    "render_raster",
    "sample_weather",
    "scenario_names",
    "spawn_agent",
    "step_world",
    "target_motion_step",
]
