"""modrts: a modular agent stack on a deterministic mini-RTS.

Subpackages and modules:
  env         deterministic two-player game engine and observations
  nn          small numpy neural-network kernel (fc / conv / lstm, optimizers)
  agents      updater, scheduler, scripted and learned decision modules
  training    advantage actor-critic training loop and parameter store
  pool        opponent pool with periodic snapshots
  evaluation  match runner, win-rate tables, composition reports
  cli         train / eval / pool / report / replay commands
"""
from __future__ import annotations

__version__ = "0.1.0"
