from .engine import ControlInput, EngineConfig, SimulationEngine, TickOutput

__all__ = ["ControlInput", "EngineConfig", "SimulationEngine", "TickOutput"]
