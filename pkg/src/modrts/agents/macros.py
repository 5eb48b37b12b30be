"""Macro registry: named subroutines expanding into env-action sequences.

A macro body is an ordered list of steps, each a raw env action or a nested
macro call. Step arguments are resolved call-by-value:

  "$name"    bound macro parameter
  "@name"    memory binding (main_base, free_slot, army_center), resolved by
             the caller-supplied resolver at expansion time
  other      literal, passed through unchanged

A step may carry ``repeat: n`` (or "$param") to emit itself n times. The
registry rejects cycles and nesting deeper than MAX_DEPTH at load, so
expansion always terminates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable

import yaml

from ..env import actions as env_actions
from ..env.actions import EnvAction

MAX_DEPTH = 4


class MacroError(ValueError):
    """Malformed macro registry (unknown refs, cycles, excessive depth)."""


class MacroInfeasible(Exception):
    """An argument binding could not be resolved (e.g. no free base slot)."""


@dataclass(frozen=True)
class MacroStep:
    is_macro: bool
    name: str
    args: tuple[Any, ...]
    repeat: Any = 1  # int or "$param"


@dataclass(frozen=True)
class Macro:
    name: str
    params: tuple[str, ...]
    body: tuple[MacroStep, ...]


@dataclass(frozen=True)
class MacroCall:
    """A macro name plus concrete argument values, as proposed by a module."""
    name: str
    args: tuple[Any, ...] = ()

    def __str__(self) -> str:
        inner = ", ".join(repr(a) for a in self.args)
        return f"{self.name}({inner})"


def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


class MacroRegistry:
    """Immutable set of validated macros."""

    def __init__(self, macros: dict[str, Macro]):
        self.macros = dict(macros)
        self._validate()

    def __contains__(self, name: str) -> bool:
        return name in self.macros

    def get(self, name: str) -> Macro:
        m = self.macros.get(name)
        if m is None:
            raise MacroError(f"unknown macro {name!r}")
        return m

    @classmethod
    def load(cls, source: str | dict | None = None) -> "MacroRegistry":
        if source is None:
            text = resources.files("modrts.data").joinpath("macros.yaml").read_text()
            raw = yaml.safe_load(text)
        elif isinstance(source, str):
            raw = yaml.safe_load(open(source).read())
        else:
            raw = source
        macros: dict[str, Macro] = {}
        for name, body in raw["macros"].items():
            params = tuple(body.get("params", ()))
            steps = []
            for s in body["body"]:
                if "macro" in s:
                    is_macro, target = True, s["macro"]
                elif "action" in s:
                    is_macro, target = False, s["action"]
                else:
                    raise MacroError(f"{name}: step needs 'macro' or 'action'")
                steps.append(MacroStep(is_macro, target,
                                       _freeze(tuple(s.get("args", ()))),
                                       s.get("repeat", 1)))
            macros[name] = Macro(name, params, tuple(steps))
        return cls(macros)

    def _validate(self) -> None:
        for m in self.macros.values():
            for s in m.body:
                if s.is_macro:
                    if s.name not in self.macros:
                        raise MacroError(f"{m.name}: unknown nested macro {s.name!r}")
                elif s.name not in env_actions.ALL_KINDS:
                    raise MacroError(f"{m.name}: unknown env action {s.name!r}")
                for a in s.args:
                    if isinstance(a, str) and a.startswith("$") and a[1:] not in m.params:
                        raise MacroError(f"{m.name}: unbound parameter {a!r}")
                rep = s.repeat
                if isinstance(rep, str) and rep.startswith("$") and rep[1:] not in m.params:
                    raise MacroError(f"{m.name}: unbound repeat {rep!r}")
        # depth check doubles as cycle detection: a cycle exceeds any bound
        for name in self.macros:
            self._depth(name, ())

    def _depth(self, name: str, stack: tuple[str, ...]) -> int:
        if name in stack:
            cycle = " -> ".join(stack + (name,))
            raise MacroError(f"macro cycle: {cycle}")
        if len(stack) + 1 > MAX_DEPTH:
            raise MacroError(f"macro nesting exceeds {MAX_DEPTH}: {' -> '.join(stack)}")
        deepest = 1
        for s in self.macros[name].body:
            if s.is_macro:
                deepest = max(deepest, 1 + self._depth(s.name, stack + (name,)))
        if len(stack) + deepest > MAX_DEPTH:
            raise MacroError(f"macro nesting exceeds {MAX_DEPTH} at {name!r}")
        return deepest


Resolver = Callable[[str], Any]


def _resolve_arg(value: Any, bound: dict[str, Any], resolve: Resolver) -> Any:
    if isinstance(value, str):
        if value.startswith("$"):
            return _resolve_arg(bound[value[1:]], bound, resolve)
        if value.startswith("@"):
            return resolve(value[1:])
    return value


def expand(registry: MacroRegistry, call: MacroCall, resolve: Resolver,
           _depth: int = 0) -> list[EnvAction]:
    """Recursively expand a macro call into a flat env-action list.

    Pure given (registry, call, resolver behavior): the same inputs always
    produce the identical sequence. Raises MacroInfeasible if the resolver
    does (unresolvable binding).
    """
    if _depth > MAX_DEPTH:
        raise MacroError(f"expansion exceeded depth {MAX_DEPTH} at {call.name!r}")
    macro = registry.get(call.name)
    if len(call.args) != len(macro.params):
        raise MacroError(f"{call.name}: expected {len(macro.params)} args, "
                         f"got {len(call.args)}")
    bound = dict(zip(macro.params, call.args))
    out: list[EnvAction] = []
    for s in macro.body:
        n = s.repeat
        if isinstance(n, str) and n.startswith("$"):
            n = bound[n[1:]]
        n = int(n)
        args = tuple(_resolve_arg(a, bound, resolve) for a in s.args)
        for _ in range(n):
            if s.is_macro:
                out.extend(expand(registry, MacroCall(s.name, args), resolve,
                                  _depth + 1))
            else:
                out.append(EnvAction(s.name, args))
    return out


_default_registry: MacroRegistry | None = None


def default_registry() -> MacroRegistry:
    global _default_registry
    if _default_registry is None:
        _default_registry = MacroRegistry.load()
    return _default_registry
