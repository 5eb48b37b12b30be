"""Decision modules, memory, macros, and the modular agent container."""
from .agent import (
    LearnedBuildModule,
    LearnedTacticsModule,
    MicroModule,
    ModularAgent,
    ScoutingModule,
    ScriptedBuildModule,
    ScriptedTacticsModule,
    WorkerModule,
    build_order_net,
    learned_agent,
    scripted_agent,
)
from .macros import (
    MacroCall,
    MacroError,
    MacroInfeasible,
    MacroRegistry,
    default_registry,
    expand,
)
from .memory import MODULES, MemoryStore, Notification, concretize, new_memory
from .policies import (
    AMOUNTS,
    BuildAction,
    BuildOrderNet,
    BuildOrderSpace,
    PolicyStep,
    TacticsNet,
    build_order_act,
    build_order_features,
    build_order_mask,
    feature_manifest,
    feature_names,
    tactics_act,
)
from .scheduler import DEFAULT_APM_CAP, WINDOW_TICKS, ApmBudget, Proposal, Scheduler
from .scouting import (
    EMA_ALPHA,
    ScoutPredictor,
    ScoutState,
    scout_manage,
    scout_predict,
    scout_route,
    scout_update,
    write_back_estimate,
)
from .scripted import (
    ENGAGEMENT_RADIUS,
    FixedBuildScript,
    ScriptError,
    best_attack_cell,
    default_scripts,
    fixed_build,
    load_build_scripts,
    micro_step,
    micro_trigger,
    scripted_tactics,
    seed_script_names,
    worker_manage,
)

__all__ = [
    "AMOUNTS", "DEFAULT_APM_CAP", "EMA_ALPHA", "ENGAGEMENT_RADIUS", "MODULES",
    "WINDOW_TICKS",
    "ApmBudget", "BuildAction", "BuildOrderNet", "BuildOrderSpace",
    "FixedBuildScript", "LearnedBuildModule", "LearnedTacticsModule",
    "MacroCall", "MacroError", "MacroInfeasible", "MacroRegistry",
    "MemoryStore", "MicroModule", "ModularAgent", "Notification", "PolicyStep",
    "Proposal", "Scheduler", "ScoutPredictor", "ScoutState", "ScoutingModule",
    "ScriptError", "ScriptedBuildModule", "ScriptedTacticsModule",
    "TacticsNet", "WorkerModule",
    "best_attack_cell", "build_order_act", "build_order_features",
    "build_order_mask", "build_order_net", "concretize", "default_registry",
    "default_scripts", "expand", "feature_manifest", "feature_names",
    "fixed_build", "learned_agent", "load_build_scripts", "micro_step",
    "micro_trigger", "new_memory", "scout_manage", "scout_predict",
    "scout_route",
    "scout_update", "scripted_agent", "scripted_tactics", "seed_script_names",
    "worker_manage", "write_back_estimate",
]
