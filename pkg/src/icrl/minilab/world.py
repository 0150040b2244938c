"""The MiniLab simulator: world specs, action matching, and deterministic stepping."""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

NO_MATCH_OBS = "No known action matches that input."
CANT_DO_OBS = "I'm not sure how to do that."

RUNNING = "running"
SUCCESS = "success"
FAIL_STEPS = "fail_steps"
FAIL_FOCUS = "fail_focus"

SUCCESS_LINE = "Task Completed."
FAIL_STEPS_LINE = "Task Failed. You have exceeded the maximum number of steps."
FAIL_FOCUS_LINE = "Task Failed. You used the focus action inappropriately."

INVENTORY = "inventory"

_KNOWN_VERBS = {"teleport", "focus", "activate", "pour", "pick", "move", "examine",
                "wait", "slide", "use"}

_PREDICATE_TYPES = {"agent_in_room", "focused", "object_phase", "object_at",
                    "object_state", "activated"}
_PHYSICS_TYPES = {"heat_liquids", "grow"}


class WorldLoadError(ValueError):
    """A world spec file is malformed; the message names the offending field."""


@dataclass
class ObjectSpec:
    name: str
    location: str
    display: str
    container: bool = False
    portable: bool = False
    device: bool = False
    heat_source: bool = False
    substance: bool = False
    phase: str | None = None
    state: dict = field(default_factory=dict)


@dataclass
class Subgoal:
    id: str
    reward: int
    when: dict
    once: bool = True


@dataclass
class WorldSpec:
    name: str
    task_description: str
    rooms: dict[str, list[str]]
    start_room: str
    objects: list[ObjectSpec]
    action_templates: list[str]
    focus_targets: set[str]
    focus_budget: int
    max_steps: int
    subgoals: list[Subgoal]
    physics: list[dict]
    optimal_actions: list[str]

    def object_names(self) -> set[str]:
        return {o.name for o in self.objects}


@dataclass
class ObjectState:
    location: str
    phase: str | None = None
    activated: bool = False
    focused: bool = False
    state: dict = field(default_factory=dict)


@dataclass
class WorldState:
    agent_room: str
    objects: dict[str, ObjectState]
    fired: set[str] = field(default_factory=set)
    prev_satisfied: dict[str, bool] = field(default_factory=dict)
    steps_taken: int = 0
    focus_used: int = 0
    total_reward: int = 0
    terminated: str = RUNNING


@dataclass(frozen=True)
class ActionOutcome:
    observation: str
    reward: int
    terminated: bool


@dataclass(frozen=True)
class ActionMatch:
    kind: str  # "ok" | "no_match" | "cant_do"
    verb: str | None = None
    slots: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# Loading and validation
# ---------------------------------------------------------------------------


def load_world(path_or_name: str) -> WorldSpec:
    """Load and validate a world spec from a file path or a shipped world name."""
    if re.fullmatch(r"[a-z0-9_]+", path_or_name):
        packaged = resources.files("icrl").joinpath("minilab", "worlds", f"{path_or_name}.json")
        if packaged.is_file():
            return _parse_world(json.loads(packaged.read_text(encoding="utf-8")))
    try:
        with open(path_or_name, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise WorldLoadError(f"world spec not found: {path_or_name!r}") from None
    except json.JSONDecodeError as exc:
        raise WorldLoadError(f"world spec is not valid JSON: {exc}") from exc
    return _parse_world(data)


def shipped_world_names() -> list[str]:
    worlds_dir = resources.files("icrl").joinpath("minilab", "worlds")
    return sorted(p.name[:-5] for p in worlds_dir.iterdir() if p.name.endswith(".json"))


def _parse_world(data: dict) -> WorldSpec:
    for key in ("name", "task_description", "rooms", "start_room", "objects",
                "action_templates", "focus_targets", "focus_budget", "max_steps",
                "subgoals"):
        if key not in data:
            raise WorldLoadError(f"missing field: {key}")

    rooms = {str(r): [str(a) for a in adj] for r, adj in data["rooms"].items()}
    for room, adjacent in rooms.items():
        for other in adjacent:
            if other not in rooms:
                raise WorldLoadError(f"rooms: {room!r} adjacent to unknown room {other!r}")
    if data["start_room"] not in rooms:
        raise WorldLoadError(f"start_room: unknown room {data['start_room']!r}")

    objects = []
    for raw in data["objects"]:
        objects.append(ObjectSpec(
            name=raw["name"],
            location=raw["location"],
            display=raw.get("display", raw["name"]),
            container=bool(raw.get("container", False)),
            portable=bool(raw.get("portable", False)),
            device=bool(raw.get("device", False)),
            heat_source=bool(raw.get("heat_source", False)),
            substance=bool(raw.get("substance", False)),
            phase=raw.get("phase"),
            state=dict(raw.get("state", {})),
        ))
    names = {o.name for o in objects}
    if len(names) != len(objects):
        raise WorldLoadError("objects: duplicate object names")
    for obj in objects:
        if obj.location not in rooms and obj.location not in names and obj.location != INVENTORY:
            raise WorldLoadError(f"objects: {obj.name!r} located in unknown {obj.location!r}")

    subgoals = []
    for raw in data["subgoals"]:
        when = raw.get("when")
        if not isinstance(when, dict) or when.get("type") not in _PREDICATE_TYPES:
            raise WorldLoadError(f"subgoals: {raw.get('id')!r} has an unknown predicate")
        reward = int(raw["reward"])
        if reward <= 0:
            raise WorldLoadError(f"subgoals: {raw.get('id')!r} reward must be positive")
        subgoals.append(Subgoal(id=str(raw["id"]), reward=reward, when=when,
                                once=bool(raw.get("once", True))))
    if len({s.id for s in subgoals}) != len(subgoals):
        raise WorldLoadError("subgoals: duplicate ids")
    total = sum(s.reward for s in subgoals)
    if total != 100:
        raise WorldLoadError(f"subgoals: rewards must sum to exactly 100, got {total}")

    templates = [str(t) for t in data["action_templates"]]
    for template in templates:
        verb = template.split()[0].lower()
        if verb not in _KNOWN_VERBS:
            raise WorldLoadError(f"action_templates: unknown verb in {template!r}")

    focus_targets = set(data["focus_targets"])
    for target in focus_targets:
        if target not in names:
            raise WorldLoadError(f"focus_targets: unknown object {target!r}")

    max_steps = int(data["max_steps"])
    if max_steps < 1:
        raise WorldLoadError(f"max_steps: must be >= 1, got {max_steps}")

    focus_budget = int(data["focus_budget"])
    task_description = str(data["task_description"])
    mentions = len(re.findall(r"\bfocus\b", task_description, re.IGNORECASE))
    if focus_budget != mentions:
        raise WorldLoadError(
            f"focus_budget: {focus_budget} does not match {mentions} focus "
            f"mention(s) in the task description"
        )

    physics = list(data.get("physics", []))
    for rule in physics:
        if not isinstance(rule, dict) or rule.get("type") not in _PHYSICS_TYPES:
            raise WorldLoadError(f"physics: unknown rule {rule!r}")

    return WorldSpec(
        name=str(data["name"]),
        task_description=task_description,
        rooms=rooms,
        start_room=str(data["start_room"]),
        objects=objects,
        action_templates=templates,
        focus_targets=focus_targets,
        focus_budget=focus_budget,
        max_steps=max_steps,
        subgoals=subgoals,
        physics=physics,
        optimal_actions=[str(a) for a in data.get("optimal_actions", [])],
    )


def initial_state(spec: WorldSpec) -> WorldState:
    objects = {
        o.name: ObjectState(location=o.location, phase=o.phase, state=dict(o.state))
        for o in spec.objects
    }
    return WorldState(agent_room=spec.start_room, objects=objects,
                      prev_satisfied={s.id: False for s in spec.subgoals})


# ---------------------------------------------------------------------------
# Action matching
# ---------------------------------------------------------------------------


def _template_regex(template: str) -> re.Pattern:
    tokens: list[str] = []
    for part in re.split(r"(<[a-z]+>)", template.lower()):
        if re.fullmatch(r"<[a-z]+>", part):
            tokens.append(part)
        else:
            tokens.extend(part.split())
    slot_total = sum(1 for t in tokens if t.startswith("<"))
    pattern = ""
    slots_seen = 0
    for index, token in enumerate(tokens):
        if index:
            pattern += r"\s+"
        if token.startswith("<"):
            slots_seen += 1
            pattern += "(.+)" if slots_seen == slot_total else "(.+?)"
        else:
            pattern += re.escape(token)
    return re.compile(pattern)


def _normalize_action(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().strip(".")).lower()


def _ref_is_known(ref: str, spec: WorldSpec) -> bool:
    names = spec.object_names()
    if ref in names:
        return True
    match = re.fullmatch(r"substance in (.+)", ref)
    return bool(match and match.group(1) in names)


def parse_action(text: str, spec: WorldSpec) -> ActionMatch:
    """Case-insensitive template match with slot binding to known rooms/objects.

    An unknown verb is a no-match; a known verb whose slots do not bind to an
    existing room or object is the distinct "can't do that" outcome.
    """
    normalized = _normalize_action(text)
    if not normalized:
        return ActionMatch(kind="no_match")
    verb = normalized.split()[0]
    verb_known = any(t.split()[0].lower() == verb for t in spec.action_templates)
    if not verb_known:
        return ActionMatch(kind="no_match")

    for template in spec.action_templates:
        if template.split()[0].lower() != verb:
            continue
        match = _template_regex(template).fullmatch(normalized)
        if match is None:
            continue
        slots = tuple(s.strip() for s in match.groups())
        if verb == "teleport":
            if slots[0] not in spec.rooms:
                return ActionMatch(kind="cant_do")
        else:
            for slot in slots:
                if not _ref_is_known(slot, spec):
                    return ActionMatch(kind="cant_do")
        return ActionMatch(kind="ok", verb=verb, slots=slots)
    return ActionMatch(kind="cant_do")


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


def _root_location(name: str, state: WorldState, spec: WorldSpec) -> str:
    seen = set()
    location = state.objects[name].location
    while location in state.objects and location not in seen:
        seen.add(location)
        location = state.objects[location].location
    return location


def _visible(name: str, state: WorldState, spec: WorldSpec) -> bool:
    root = _root_location(name, state, spec)
    return root == state.agent_room or root == INVENTORY


def _resolve_ref(ref: str, state: WorldState, spec: WorldSpec) -> str | None:
    if ref in state.objects and _visible(ref, state, spec):
        return ref
    match = re.fullmatch(r"substance in (.+)", ref)
    if match:
        container = match.group(1)
        for obj in spec.objects:
            if not obj.substance:
                continue
            holder = state.objects[obj.name].location
            if holder == container and _visible(obj.name, state, spec):
                return obj.name
    return None


def _display(name: str, spec: WorldSpec) -> str:
    for obj in spec.objects:
        if obj.name == name:
            return obj.display
    return name


def _spec_object(name: str, spec: WorldSpec) -> ObjectSpec:
    for obj in spec.objects:
        if obj.name == name:
            return obj
    raise KeyError(name)


def _execute(verb: str, slots: tuple[str, ...], state: WorldState,
             spec: WorldSpec) -> str:
    """Apply a bound action; returns the observation. May set fail_focus."""
    if verb == "teleport":
        state.agent_room = slots[0]
        return f"You teleport to the {slots[0]}."

    if verb == "wait":
        return "You wait."

    if verb == "use":
        return CANT_DO_OBS

    resolved = _resolve_ref(slots[0], state, spec)
    if resolved is None:
        return CANT_DO_OBS
    display = _display(resolved, spec)

    if verb == "focus":
        if resolved not in spec.focus_targets or state.focus_used >= spec.focus_budget:
            state.terminated = FAIL_FOCUS
            return f"You focus on the {display}."
        state.focus_used += 1
        state.objects[resolved].focused = True
        return f"You focus on the {display}."

    if verb == "activate":
        if not _spec_object(resolved, spec).device:
            return CANT_DO_OBS
        state.objects[resolved].activated = True
        return f"The {display} is now activated."

    if verb == "examine":
        spec_obj = _spec_object(resolved, spec)
        if spec_obj.container:
            contents = [
                _display(o.name, spec) for o in spec.objects
                if state.objects[o.name].location == resolved
            ]
            inside = ", ".join(contents) if contents else "nothing"
            return f"a {display} (containing {inside})"
        return f"a {display}"

    if verb == "pick":
        if not _spec_object(resolved, spec).portable:
            return CANT_DO_OBS
        state.objects[resolved].location = INVENTORY
        return f"You move the {display} to the inventory."

    # Two-object verbs: pour / move / slide.
    target = _resolve_ref(slots[1], state, spec)
    if target is None:
        return CANT_DO_OBS
    target_display = _display(target, spec)

    if verb == "pour":
        if not _spec_object(resolved, spec).substance:
            return CANT_DO_OBS
        if not _spec_object(target, spec).container:
            return CANT_DO_OBS
        state.objects[resolved].location = target
        return f"You pour the {display} into the {target_display}."

    if verb == "move":
        if not _spec_object(resolved, spec).portable:
            return CANT_DO_OBS
        state.objects[resolved].location = target
        return f"You move the {display} to the {target_display}."

    if verb == "slide":
        friction = state.objects[target].state.get("friction")
        if not _spec_object(resolved, spec).portable or friction is None:
            return CANT_DO_OBS
        state.objects[target].state["tested"] = True
        if friction == "high":
            return (f"You slide the {display} across the {target_display}. "
                    "It stops almost immediately.")
        return (f"You slide the {display} across the {target_display}. "
                "It glides far before stopping.")

    return CANT_DO_OBS


def _apply_physics(state: WorldState, spec: WorldSpec) -> None:
    for rule in spec.physics:
        if rule["type"] == "heat_liquids":
            for heater in spec.objects:
                if not heater.heat_source or not state.objects[heater.name].activated:
                    continue
                for obj in spec.objects:
                    if state.objects[obj.name].phase != "liquid":
                        continue
                    location = state.objects[obj.name].location
                    seen = set()
                    while location in state.objects and location not in seen:
                        if location == heater.name:
                            break
                        seen.add(location)
                        location = state.objects[location].location
                    if location == heater.name:
                        state.objects[obj.name].phase = "gas"
        elif rule["type"] == "grow":
            plant = state.objects[rule["object"]]
            watered = state.objects[rule["water"]].location == rule["container"]
            if plant.location == rule["container"] and watered:
                plant.state["growth"] = plant.state.get("growth", 0) + 1
                if plant.state["growth"] >= int(rule["ticks"]):
                    plant.state["form"] = "plant"


def _predicate_satisfied(when: dict, state: WorldState, spec: WorldSpec) -> bool:
    kind = when["type"]
    if kind == "agent_in_room":
        return state.agent_room == when["room"]
    if kind == "focused":
        return state.objects[when["object"]].focused
    if kind == "object_phase":
        return state.objects[when["object"]].phase == when["phase"]
    if kind == "object_at":
        return state.objects[when["object"]].location == when["location"]
    if kind == "object_state":
        return state.objects[when["object"]].state.get(when["key"]) == when["value"]
    if kind == "activated":
        return state.objects[when["object"]].activated
    raise ValueError(f"unknown predicate type {kind!r}")


def step_world(state: WorldState, action_text: str,
               spec: WorldSpec) -> tuple[WorldState, ActionOutcome]:
    """Apply one action deterministically; invalid actions still consume a step.

    Reward is the sum of subgoals newly satisfied this step. Focus misuse
    terminates immediately and freezes the cumulative reward; reaching
    max_steps without success fails the episode.
    """
    if state.terminated != RUNNING:
        raise ValueError("cannot step a terminated episode")
    state = copy.deepcopy(state)

    match = parse_action(action_text, spec)
    if match.kind == "no_match":
        observation = NO_MATCH_OBS
    elif match.kind == "cant_do":
        observation = CANT_DO_OBS
    else:
        observation = _execute(match.verb, match.slots, state, spec)

    reward = 0
    if state.terminated != FAIL_FOCUS:
        _apply_physics(state, spec)
        for subgoal in spec.subgoals:
            satisfied = _predicate_satisfied(subgoal.when, state, spec)
            if subgoal.once:
                newly = satisfied and subgoal.id not in state.fired
            else:
                newly = satisfied and not state.prev_satisfied[subgoal.id]
            if newly:
                state.fired.add(subgoal.id)
                reward += subgoal.reward
            state.prev_satisfied[subgoal.id] = satisfied
        state.total_reward += reward

    state.steps_taken += 1
    if state.terminated == RUNNING:
        if all(s.id in state.fired for s in spec.subgoals):
            state.terminated = SUCCESS
        elif state.steps_taken >= spec.max_steps:
            state.terminated = FAIL_STEPS

    return state, ActionOutcome(observation=observation, reward=reward,
                                terminated=state.terminated != RUNNING)


def terminal_line(status: str) -> str:
    if status == SUCCESS:
        return SUCCESS_LINE
    if status == FAIL_STEPS:
        return FAIL_STEPS_LINE
    if status == FAIL_FOCUS:
        return FAIL_FOCUS_LINE
    raise ValueError(f"episode still running, no terminal line (status {status!r})")


# ---------------------------------------------------------------------------
# Environment facade and trajectory rendering
# ---------------------------------------------------------------------------


class MiniLabEnv:
    """One episode of a MiniLab world behind the step-wire interface."""

    def __init__(self, spec: WorldSpec) -> None:
        self.spec = spec
        self.state = initial_state(spec)

    def step(self, action_text: str) -> tuple[str, int, bool, int]:
        self.state, outcome = step_world(self.state, action_text, self.spec)
        return outcome.observation, outcome.reward, outcome.terminated, self.state.total_reward

    @property
    def done(self) -> bool:
        return self.state.terminated != RUNNING

    @property
    def total(self) -> int:
        return self.state.total_reward

    def terminal_line(self) -> str:
        return terminal_line(self.state.terminated)

    def task_text(self) -> str:
        return render_task_text(self.spec)


def render_task_text(spec: WorldSpec) -> str:
    from icrl.instructions import load_template

    template = load_template("minilab_task.txt")
    return (
        template
        .replace("{rooms}", ", ".join(spec.rooms))
        .replace("{actions}", "\n".join(spec.action_templates))
        .replace("{task_description}", spec.task_description)
    )


@dataclass(frozen=True)
class Transition:
    action: str
    observation: str
    reward: int


def trajectory_body(transitions: Sequence[Transition], terminal: str, total: int) -> str:
    """Action -> observation chain plus the terminal line, without the header."""
    lines = []
    for index, step in enumerate(transitions):
        prefix = "" if index == 0 else "-> "
        lines.append(f"{prefix}{step.action} -> Observation: {step.observation} "
                     f"(reward={step.reward})")
    lines.append(f"{terminal} (reward=0) Total reward: {total}")
    return "\n".join(lines)


def render_trajectory(transitions: Sequence[Transition], terminal: str, total: int,
                      attempt_index: int = 1) -> str:
    """Full buffer block for one finished episode."""
    return f"Attempt {attempt_index}:\n{trajectory_body(transitions, terminal, total)}"
